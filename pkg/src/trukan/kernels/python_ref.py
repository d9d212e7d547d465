"""Pure-numpy reference kernels for the hot basis evaluations.

The compiled extension (`trukan.kernels._fast`) implements the same
signatures; both are exercised by the kernel-equivalence tests, and either
can drive the full library.
"""

import numpy as np


def trunc_features_multi(x, knots, k, out=None):
    """Truncated-power features (x_bi - t_qj)_+^k.

    x: [B, n] float64, knots: [q, G] float64 (q knot rows, q=1 when shared).
    Returns [q, B, n, G]; `out` supplies a reusable result buffer.
    k == 0 yields the indicator of x >= t.
    """
    shape = (knots.shape[0], x.shape[0], x.shape[1], knots.shape[1])
    if out is None:
        out = np.empty(shape)
    d = np.subtract(x[None, :, :, None], knots[:, None, None, :], out=out)
    if k == 0:
        mask = d >= 0.0
        out[...] = mask
        return out
    np.maximum(d, 0.0, out=d)
    if k > 1:
        np.power(d, k, out=out)
    return out


def trunc_features_multi_backward(x, knots, k, g_feat, need_knot_grad):
    """Backward of trunc_features_multi.

    g_feat: [q, B, n, G] cotangent.  Returns (gx [B, n], gknots [q, G] or
    None).  The kink carries subgradient 0 (consistent with the k=0
    indicator having zero slope).
    """
    if k == 0:
        gx = np.zeros_like(x)
        gk = np.zeros_like(knots) if need_knot_grad else None
        return gx, gk
    d = x[None, :, :, None] - knots[:, None, None, :]
    ramp = np.where(d > 0.0, d, 0.0)
    slope = k * ramp ** (k - 1) if k > 1 else (d > 0.0).astype(np.float64)
    weighted = g_feat * slope
    gx = weighted.sum(axis=(0, 3))
    gk = -weighted.sum(axis=(1, 2)) if need_knot_grad else None
    return gx, gk


def trunc_mix_individual_backward(x, knots, k, coeffs, g, need_knot_grad,
                                  block=16):
    """Backward of the individual-knot truncated mix, in output blocks.

    x: [B, n]; knots: [out, G]; coeffs: [out, n, G]; g: [B, out] cotangent
    of y[b,o] = sum_ij coeffs[o,i,j] * (x[b,i] - knots[o,j])_+^k.
    Returns (gx [B, n], gcoeffs [out, n, G], gknots [out, G] or None).
    Re-materializes per-block basis tensors rather than caching them all.
    """
    B, n = x.shape
    out, G = knots.shape
    gx = np.zeros_like(x)
    gc = np.empty_like(coeffs)
    gk = np.zeros_like(knots) if need_knot_grad else None
    for o0 in range(0, out, max(1, block)):
        o1 = min(out, o0 + max(1, block))
        q = o1 - o0
        feats = trunc_features_multi(x, knots[o0:o1], k)       # [q, B, n, G]
        gt = np.ascontiguousarray(g[:, o0:o1].T)               # [q, B]
        f2 = feats.reshape(q, B, n * G)
        gc[o0:o1] = (gt[:, None, :] @ f2)[:, 0].reshape(q, n, G)
        g_feat = gt[:, :, None, None] * coeffs[o0:o1, None, :, :]
        gx_b, gk_b = trunc_features_multi_backward(x, knots[o0:o1], k, g_feat,
                                                   need_knot_grad)
        gx += gx_b
        if need_knot_grad:
            gk[o0:o1] = gk_b
    return gx, gc, gk


def bspline_basis(x, t, k, want_deriv):
    """Cox-de Boor recursion over every basis (the production comparator's
    dense algorithm), half-open interval convention.

    x: [N] points, t: [m] non-decreasing extended knots, degree k.
    Returns (values [N, nb], first_derivs [N, nb] or None) with
    nb = m - k - 1.  Bases vanish outside the extended knot span.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    xc = x[:, None]
    levels = [((xc >= t[:-1]) & (xc < t[1:])).astype(np.float64)]
    for r in range(1, k + 1):
        prev = levels[-1]
        ldia = t[r:-1] - t[: -r - 1]
        rdia = t[r + 1:] - t[1:-r]
        lterm = np.where(ldia > 0, (xc - t[: -r - 1]) / np.where(ldia == 0, 1, ldia), 0.0)
        rterm = np.where(rdia > 0, (t[r + 1:] - xc) / np.where(rdia == 0, 1, rdia), 0.0)
        levels.append(lterm[:, : prev.shape[1] - 1] * prev[:, :-1] + rterm * prev[:, 1:])
    vals = levels[k]
    if not want_deriv:
        return vals, None
    ders = np.zeros_like(vals)
    if k > 0:
        low = levels[k - 1]
        nb = vals.shape[1]
        for j in range(nb):
            den = t[j + k] - t[j]
            if den > 0:
                ders[:, j] += k * low[:, j] / den
            den = t[j + k + 1] - t[j + 1]
            if den > 0:
                ders[:, j] -= k * low[:, j + 1] / den
    return vals, ders
