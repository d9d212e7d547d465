"""Central finite-difference gradient checking.

Used by the test suite and the `gradcheck` CLI subcommand.  The analytic
path is reverse-mode backward(); the numeric side re-evaluates the loss
with coordinates nudged by +-h, so it is independent of the tape rules it
verifies.
"""

import numpy as np

from .tensor import backward, no_grad

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-4


def rel_error(a, n):
    """|a - n| relative to max(|a|, |n|, 1)."""
    return abs(a - n) / max(abs(a), abs(n), 1.0)


def check_gradients(loss_fn, params, rng, n_probe=4, h=DEFAULT_H):
    """Max relative error between analytic and central-difference grads.

    `loss_fn()` must rebuild the scalar loss from the current values of
    `params` (list of Tensors).  For each parameter, `n_probe` random
    coordinates are probed.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    backward(loss)

    worst = 0.0
    for p in params:
        if p.grad is None:
            raise AssertionError(f"no gradient reached parameter {p.name or p.shape}")
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        n_coords = flat.size
        idx = rng.choice(n_coords, size=min(n_probe, n_coords), replace=False)
        for i in idx:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            worst = max(worst, rel_error(gflat[i], numeric))
    return worst


def keep_away_from(values, points, margin):
    """Shift entries of `values` that sit within `margin` of any point.

    Finite differences straddling a spline kink are meaningless; callers
    nudge their sampled inputs off the knots before checking.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    for pt in np.asarray(points, dtype=np.float64).reshape(-1):
        close = np.abs(out - pt) < margin
        out[close] = pt + margin * np.where(out[close] >= pt, 1.0, -1.0)
    return out
