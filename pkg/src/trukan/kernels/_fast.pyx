# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the hot basis evaluations.

Mirrors trukan.kernels.python_ref: same signatures, same algorithms (the
B-spline path is the dense Cox-de Boor recursion, not a sparse rewrite, so
cross-backend benchmarks compare like against like).
"""

from libc.stdlib cimport free, malloc

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _ipow(double d, int k) nogil:
    cdef double p = 1.0
    cdef int r
    for r in range(k):
        p *= d
    return p


def trunc_features_multi(double[:, ::1] x, double[:, ::1] knots, int k, out=None):
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t q = knots.shape[0], G = knots.shape[1]
    out_arr = np.empty((q, B, n, G)) if out is None else out
    cdef double[:, :, :, ::1] res = out_arr
    cdef Py_ssize_t iq, b, i, j
    cdef double xv, d
    with nogil:
        for iq in range(q):
            for b in range(B):
                for i in range(n):
                    xv = x[b, i]
                    for j in range(G):
                        d = xv - knots[iq, j]
                        if k == 0:
                            res[iq, b, i, j] = 1.0 if d >= 0.0 else 0.0
                        elif d > 0.0:
                            res[iq, b, i, j] = _ipow(d, k)
                        else:
                            res[iq, b, i, j] = 0.0
    return out_arr


def trunc_features_multi_backward(double[:, ::1] x, double[:, ::1] knots, int k,
                                  double[:, :, :, ::1] g_feat, bint need_knot_grad):
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t q = knots.shape[0], G = knots.shape[1]
    gx_arr = np.zeros((B, n))
    gk_arr = np.zeros((q, G)) if need_knot_grad else None
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gk
    if need_knot_grad:
        gk = gk_arr
    cdef Py_ssize_t iq, b, i, j
    cdef double xv, d, slope, w, acc
    if k == 0:
        return gx_arr, gk_arr
    with nogil:
        for iq in range(q):
            for b in range(B):
                for i in range(n):
                    xv = x[b, i]
                    acc = 0.0
                    for j in range(G):
                        d = xv - knots[iq, j]
                        if d > 0.0:
                            slope = k * _ipow(d, k - 1)
                            w = g_feat[iq, b, i, j] * slope
                            acc += w
                            if need_knot_grad:
                                gk[iq, j] -= w
                    gx[b, i] += acc
    return gx_arr, gk_arr


def trunc_mix_individual_backward(double[:, ::1] x, double[:, ::1] knots, int k,
                                  double[:, :, ::1] coeffs, double[:, ::1] g,
                                  bint need_knot_grad, Py_ssize_t block=16):
    """Fused backward of the individual-knot mix: no cotangent blocks are
    materialized (`block` is accepted for signature parity)."""
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t out = knots.shape[0], G = knots.shape[1]
    gx_arr = np.zeros((B, n))
    gc_arr = np.zeros((out, n, G))
    gk_arr = np.zeros((out, G)) if need_knot_grad else None
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, :, ::1] gc = gc_arr
    cdef double[:, ::1] gk
    if need_knot_grad:
        gk = gk_arr
    cdef Py_ssize_t o, b, i, j
    cdef double xv, d, w, p, feat, s
    with nogil:
        for o in range(out):
            for b in range(B):
                w = g[b, o]
                if w == 0.0:
                    continue
                for i in range(n):
                    xv = x[b, i]
                    for j in range(G):
                        d = xv - knots[o, j]
                        if k == 0:
                            if d >= 0.0:
                                gc[o, i, j] += w
                        elif d > 0.0:
                            p = _ipow(d, k - 1)
                            gc[o, i, j] += w * p * d
                            s = k * p * coeffs[o, i, j] * w
                            gx[b, i] += s
                            if need_knot_grad:
                                gk[o, j] -= s
    return gx_arr, gc_arr, gk_arr


def bspline_basis(double[::1] x, double[::1] t, int k, bint want_deriv):
    cdef Py_ssize_t n_pts = x.shape[0], m = t.shape[0]
    cdef Py_ssize_t nb = m - k - 1
    cdef Py_ssize_t width = m - 1
    vals_arr = np.zeros((n_pts, nb))
    ders_arr = np.zeros((n_pts, nb)) if want_deriv else None
    cdef double[:, ::1] vals = vals_arr
    cdef double[:, ::1] ders
    if want_deriv:
        ders = ders_arr
    cdef double *lev = <double *> malloc(width * sizeof(double))
    cdef double *nxt = <double *> malloc(width * sizeof(double))
    cdef double *low = <double *> malloc(width * sizeof(double))
    if lev == NULL or nxt == NULL or low == NULL:
        free(lev); free(nxt); free(low)
        raise MemoryError
    cdef Py_ssize_t p, r, j
    cdef double xv, den, a, b, acc
    cdef double *tmp
    try:
        with nogil:
            for p in range(n_pts):
                xv = x[p]
                for j in range(width):
                    lev[j] = 1.0 if t[j] <= xv < t[j + 1] else 0.0
                for r in range(1, k + 1):
                    if want_deriv and r == k:
                        for j in range(width - r + 1):
                            low[j] = lev[j]
                    for j in range(width - r):
                        den = t[j + r] - t[j]
                        a = (xv - t[j]) / den if den > 0.0 else 0.0
                        den = t[j + r + 1] - t[j + 1]
                        b = (t[j + r + 1] - xv) / den if den > 0.0 else 0.0
                        nxt[j] = a * lev[j] + b * lev[j + 1]
                    tmp = lev; lev = nxt; nxt = tmp
                for j in range(nb):
                    vals[p, j] = lev[j]
                if want_deriv and k > 0:
                    for j in range(nb):
                        acc = 0.0
                        den = t[j + k] - t[j]
                        if den > 0.0:
                            acc += low[j] / den
                        den = t[j + k + 1] - t[j + 1]
                        if den > 0.0:
                            acc -= low[j + 1] / den
                        ders[p, j] = k * acc
    finally:
        free(lev); free(nxt); free(low)
    return vals_arr, ders_arr
