"""Univariate basis families: truncated powers, B-splines, polynomials,
sine features, and SiLU, together with the knot machinery shared by the
spline layers.

All tape-recording entry points go through `tensor.apply_op`; the heavy
array work is delegated to `trukan.kernels` so the compiled backend can
take over transparently.
"""

import math

import numpy as np

from . import kernels
from .tensor import Tensor, apply_op

DEFAULT_ORDER = 3  # spline order used throughout unless configured


def check_order(k):
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise ValueError(f"spline order must be an integer >= 0, got {k!r}")
    return int(k)


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class KnotSet:
    """Ordered knot sequence with fixed/learnable mode and shared/individual
    broadcasting.

    Fixed mode materializes the equally spaced grid on [lo, hi].  Learnable
    mode stores raw parameters mapped through softplus increments with a
    spacing floor, so the materialized knots stay strictly increasing inside
    (lo, hi] for any finite raw values.

    `out_dim=None` means one knot row shared by every output; an integer
    gives each output its own row ("individual" broadcasting).
    """

    SPACING_FLOOR = 1e-4  # fraction of (hi - lo) guaranteed between knots

    def __init__(self, count, lo=-1.0, hi=1.0, mode="fixed", out_dim=None):
        if count < 1:
            raise ValueError(f"knot count must be >= 1, got {count}")
        if not hi > lo:
            raise ValueError(f"knot range needs hi > lo, got ({lo}, {hi})")
        if mode not in ("fixed", "learnable"):
            raise ValueError(f"knot mode must be 'fixed' or 'learnable', got {mode!r}")
        if out_dim is not None and out_dim < 1:
            raise ValueError(f"out_dim must be >= 1 or None, got {out_dim}")
        self.count = int(count)
        self.lo = float(lo)
        self.hi = float(hi)
        self.mode = mode
        self.out_dim = out_dim
        rows = 1 if out_dim is None else int(out_dim)
        if mode == "learnable":
            self.raw = Tensor(np.zeros((rows, count)), requires_grad=True, name="knots_raw")
            self._fixed = None
        else:
            self.raw = None
            grid = np.linspace(lo, hi, count)
            self._fixed = Tensor(np.tile(grid, (rows, 1)))

    @property
    def shared(self):
        return self.out_dim is None

    def materialize(self):
        """Current knot rows as a [rows, G] tensor, differentiable wrt raw."""
        if self.mode == "fixed":
            return self._fixed
        return _materialize_learnable(self.raw, self.lo, self.hi, self.SPACING_FLOOR)

    def knot_array(self):
        """Materialized knots as a plain ndarray (no tape)."""
        return self.materialize().data

    def param_specs(self):
        if self.mode == "learnable":
            return [("knots_raw", self.raw, "knot")]
        return []

    def config(self):
        return {
            "count": self.count,
            "lo": self.lo,
            "hi": self.hi,
            "mode": self.mode,
            "out_dim": self.out_dim,
        }


def _materialize_learnable(raw, lo, hi, floor_frac):
    rd = raw.data
    span = hi - lo
    floor = floor_frac * span
    incr = np.logaddexp(0.0, rd) + floor  # softplus + spacing floor
    csum = np.cumsum(incr, axis=1)
    total = csum[:, -1:]
    value = lo + span * csum / total

    def backward(g):
        # t_j = lo + span * S_j / S_G;  dt_j/du_m = span*(1[m<=j]*S_G - S_j)/S_G^2
        rev = np.cumsum(g[:, ::-1], axis=1)[:, ::-1]  # sum_{j>=m} g_j
        mixed = (g * csum).sum(axis=1, keepdims=True) / total
        gu = span * (rev - mixed) / total
        return (gu * _stable_sigmoid(rd),)

    return apply_op("materialize_knots", (raw,), value, backward)


def materialize_knots(knot_set):
    """Materialized, strictly increasing knots for a KnotSet."""
    return knot_set.materialize()


def truncated_power(x, t, k):
    """(x - t)_+^k elementwise; k = 0 gives the indicator of x >= t."""
    k = check_order(k)
    if not isinstance(x, Tensor):
        x = Tensor(x)
    d = x.data - float(t)
    if k == 0:
        value = (d >= 0.0).astype(np.float64)
        return apply_op("truncated_power", (x,), value, lambda g: (np.zeros_like(d),))
    ramp = np.where(d > 0.0, d, 0.0)
    value = ramp ** k
    slope = k * ramp ** (k - 1) if k > 1 else (d > 0.0).astype(np.float64)
    return apply_op("truncated_power", (x,), value, lambda g: (g * slope,))


def falling_factorial(k, m):
    return math.prod(range(k - m + 1, k + 1))


def truncated_power_deriv(x, t, k, m):
    """m-th derivative of (x - t)_+^k at a scalar point.

    Equals k(k-1)...(k-m+1) (x-t)_+^{k-m}; at m == k this is the k! step.
    """
    k = check_order(k)
    if m < 0 or m > k:
        raise ValueError(f"derivative order m={m} must satisfy 0 <= m <= k={k}")
    coeff = falling_factorial(k, m)
    if k - m == 0:
        return float(coeff) if x >= t else 0.0
    return float(coeff * max(x - t, 0.0) ** (k - m))


def extend_knots(knots, k):
    """Pad a knot row with k extra knots per side, repeating the end spacing."""
    knots = np.asarray(knots, dtype=np.float64)
    if knots.ndim != 1 or len(knots) < 2:
        raise ValueError("extend_knots needs a 1-D row of >= 2 knots")
    h_lo = knots[1] - knots[0]
    h_hi = knots[-1] - knots[-2]
    left = knots[0] - h_lo * np.arange(k, 0, -1)
    right = knots[-1] + h_hi * np.arange(1, k + 1)
    return np.concatenate([left, knots, right])


def _check_ext_knots(t, k):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 1:
        raise ValueError("extended knot vector must be 1-D")
    if len(t) < k + 2:
        raise ValueError(
            f"insufficient knots: need at least {k + 2} for order {k}, got {len(t)}"
        )
    if np.any(np.diff(t) < 0):
        raise ValueError("knot vector must be non-decreasing")
    return t


def bspline_eval(x, ext_knots, k):
    """Cox-de Boor basis values over an extended knot vector.

    Entries of `x` are flattened row-major; the result is [n_points, n_basis]
    with n_basis = len(ext_knots) - k - 1.  Differentiable wrt x.
    """
    k = check_order(k)
    t = _check_ext_knots(ext_knots, k)
    if not isinstance(x, Tensor):
        x = Tensor(x)
    shape = x.shape
    flat = x.data.reshape(-1)
    vals, ders = kernels.bspline_basis(flat, t, k, want_deriv=x.requires_grad)

    def backward(g):
        gx = (g * ders).sum(axis=1).reshape(shape)
        return (gx,)

    return apply_op("bspline_eval", (x,), vals, backward)


def poly_eval(coeffs, x):
    """Horner evaluation of sum_r a_r x^r; differentiable in coeffs and x.

    `coeffs` is a row tensor (a_0 .. a_k); the result matches x's shape.
    """
    if not isinstance(coeffs, Tensor):
        coeffs = Tensor(coeffs)
    if not isinstance(x, Tensor):
        x = Tensor(x)
    c = coeffs.data.reshape(-1)
    if c.size == 0:
        raise ValueError("poly_eval needs at least one coefficient")
    xd = x.data
    acc = np.full_like(xd, c[-1])
    for a in c[-2::-1]:
        acc = acc * xd + a
    k = c.size - 1
    cshape = coeffs.shape

    def backward(g):
        powers = kernels.power_features(xd, k)  # [..., k+1]
        gc = (g[..., None] * powers).sum(axis=(0, 1)).reshape(cshape)
        dacc = np.zeros_like(xd)
        if k > 0:
            dacc += c[-1] * k
            for r in range(k - 1, 0, -1):
                dacc = dacc * xd + c[r] * r
        return (gc, g * dacc)

    return apply_op("poly_eval", (coeffs, x), acc, backward)


def poly_deriv(coeffs, x, m):
    """m-th derivative of the polynomial at a scalar x.

    Orders beyond the degree return 0.0 (every such derivative vanishes).
    """
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if c.size == 0:
        raise ValueError("poly_deriv needs at least one coefficient")
    if m < 0:
        raise ValueError(f"derivative order must be >= 0, got {m}")
    k = c.size - 1
    if m > k:
        return 0.0
    total = 0.0
    for r in range(m, k + 1):
        total += falling_factorial(r, m) * c[r] * float(x) ** (r - m)
    return float(total)


def silu(x):
    """x * sigmoid(x) as a tape op."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    s = _stable_sigmoid(x.data)
    value = x.data * s
    deriv = s + x.data * s * (1.0 - s)
    return apply_op("silu", (x,), value, lambda g: (g * deriv,))


def silu_deriv(x):
    """sigma(x) + x sigma(x)(1 - sigma(x)) at a scalar point."""
    s = 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))
    return s + x * s * (1.0 - s)


def sine_basis(x, freqs, phases):
    """sin(freq_g * x_i + phase_ig) features, flattened to [batch, n*G].

    x: [B, n]; freqs: [1, G]; phases: [n, G].  Differentiable in all three.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if not isinstance(freqs, Tensor):
        freqs = Tensor(freqs)
    if not isinstance(phases, Tensor):
        phases = Tensor(phases)
    B, n = x.shape
    if freqs.shape[0] != 1:
        raise ValueError(f"freqs must be a single row, got {freqs.shape}")
    G = freqs.shape[1]
    if phases.shape != (n, G):
        raise ValueError(
            f"phases shape {phases.shape} does not match inputs ({n}) x freqs ({G})"
        )
    w = freqs.data[0]
    arg = x.data[:, :, None] * w[None, None, :] + phases.data[None, :, :]
    value = np.sin(arg)

    def backward(g):
        gc = g.reshape(B, n, G) * np.cos(arg)
        gx = (gc * w[None, None, :]).sum(axis=2)
        gw = (gc * x.data[:, :, None]).sum(axis=(0, 1))[None, :]
        gp = gc.sum(axis=0)
        return (gx, gw, gp)

    return apply_op("sine_basis", (x, freqs, phases), value.reshape(B, n * G), backward)
