"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set TRUKAN_KERNELS=python|compiled|auto (default auto) before import to pin
a backend; `use_backend` switches temporarily, which the kernel-comparison
benchmark relies on.
"""

import contextlib
import os
import warnings

import numpy as np

from . import python_ref

_IMPLS = {"python": python_ref}
try:
    from . import _fast  # compiled at install time; optional

    _IMPLS["compiled"] = _fast
except ImportError:
    _fast = None


def _initial_backend():
    req = os.environ.get("TRUKAN_KERNELS", "auto")
    if req == "python":
        return "python"
    if req == "compiled":
        if "compiled" not in _IMPLS:
            warnings.warn("TRUKAN_KERNELS=compiled but extension missing; using python")
            return "python"
        return "compiled"
    if req != "auto":
        warnings.warn(f"unknown TRUKAN_KERNELS={req!r}; using auto")
    return "compiled" if "compiled" in _IMPLS else "python"


_active = _initial_backend()


def backend_name():
    return _active


def available_backends():
    return sorted(_IMPLS)


@contextlib.contextmanager
def use_backend(name):
    """Temporarily pin a kernel backend (bench/test helper, not thread-safe)."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    prev = _active
    _active = name
    try:
        yield
    finally:
        _active = prev


def trunc_features_multi(x, knots, k, out=None):
    return _IMPLS[_active].trunc_features_multi(
        np.ascontiguousarray(x), np.ascontiguousarray(knots), int(k), out
    )


def trunc_features_multi_backward(x, knots, k, g_feat, need_knot_grad):
    return _IMPLS[_active].trunc_features_multi_backward(
        np.ascontiguousarray(x),
        np.ascontiguousarray(knots),
        int(k),
        np.ascontiguousarray(g_feat),
        bool(need_knot_grad),
    )


def trunc_mix_individual_backward(x, knots, k, coeffs, g, need_knot_grad,
                                  block=16):
    """Backward of y[b,o] = sum_ij coeffs[o,i,j] (x[b,i] - knots[o,j])_+^k.

    The compiled path is fused; the python path re-materializes basis
    blocks of `block` outputs at a time.
    """
    return _IMPLS[_active].trunc_mix_individual_backward(
        np.ascontiguousarray(x),
        np.ascontiguousarray(knots),
        int(k),
        np.ascontiguousarray(coeffs),
        np.ascontiguousarray(g),
        bool(need_knot_grad),
        block,
    )


def bspline_basis(x, t, k, want_deriv=False):
    return _IMPLS[_active].bspline_basis(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(t, dtype=np.float64),
        int(k),
        bool(want_deriv),
    )


def power_features(x, k):
    """Monomials x^0..x^k, [B, n] -> [B, n, k+1].  Cheap; no backend split."""
    out = np.empty(x.shape + (k + 1,))
    out[..., 0] = 1.0
    for r in range(1, k + 1):
        out[..., r] = out[..., r - 1] * x
    return out
