# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: GRU gate math and the conv/max-over-time pair.

Every function mirrors the pure-numpy version in ``_pykernels`` and expects
C-contiguous arrays of one floating dtype (float32 or float64).
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, sqrt, tanh

cnp.import_array()


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def gru_forward(floating[:, ::1] gx, floating[:, ::1] gh, floating[:, ::1] h):
    cdef Py_ssize_t b = h.shape[0], d = h.shape[1], i, j
    dtype = np.float32 if floating is float else np.float64
    h_new_a = np.empty((b, d), dtype=dtype)
    r_a = np.empty((b, d), dtype=dtype)
    z_a = np.empty((b, d), dtype=dtype)
    n_a = np.empty((b, d), dtype=dtype)
    cdef floating[:, ::1] h_new = h_new_a, r = r_a, z = z_a, n = n_a
    cdef double rv, zv, nv
    with nogil:
        for i in range(b):
            for j in range(d):
                rv = _sigmoid(gx[i, j] + gh[i, j])
                zv = _sigmoid(gx[i, d + j] + gh[i, d + j])
                nv = tanh(gx[i, 2 * d + j] + rv * gh[i, 2 * d + j])
                r[i, j] = <floating>rv
                z[i, j] = <floating>zv
                n[i, j] = <floating>nv
                h_new[i, j] = <floating>((1.0 - zv) * nv + zv * h[i, j])
    return h_new_a, r_a, z_a, n_a


def gru_backward(floating[:, ::1] dh_new, floating[:, ::1] gh, floating[:, ::1] h,
                 floating[:, ::1] r, floating[:, ::1] z, floating[:, ::1] n):
    cdef Py_ssize_t b = h.shape[0], d = h.shape[1], i, j
    dtype = np.float32 if floating is float else np.float64
    d_gx_a = np.empty((b, 3 * d), dtype=dtype)
    d_gh_a = np.empty((b, 3 * d), dtype=dtype)
    dh_a = np.empty((b, d), dtype=dtype)
    cdef floating[:, ::1] d_gx = d_gx_a, d_gh = d_gh_a, dh = dh_a
    cdef double g, rv, zv, nv, da_n, da_z, da_r
    with nogil:
        for i in range(b):
            for j in range(d):
                g = dh_new[i, j]
                rv = r[i, j]
                zv = z[i, j]
                nv = n[i, j]
                dh[i, j] = <floating>(g * zv)
                da_n = g * (1.0 - zv) * (1.0 - nv * nv)
                da_z = g * (h[i, j] - nv) * zv * (1.0 - zv)
                da_r = da_n * gh[i, 2 * d + j] * rv * (1.0 - rv)
                d_gx[i, j] = <floating>da_r
                d_gx[i, d + j] = <floating>da_z
                d_gx[i, 2 * d + j] = <floating>da_n
                d_gh[i, j] = <floating>da_r
                d_gh[i, d + j] = <floating>da_z
                d_gh[i, 2 * d + j] = <floating>(da_n * rv)
    return d_gx_a, d_gh_a, dh_a


def max_over_time(floating[:, :, ::1] y):
    cdef Py_ssize_t b = y.shape[0], length = y.shape[1], c = y.shape[2], i, t, j
    dtype = np.float32 if floating is float else np.float64
    vals_a = np.empty((b, c), dtype=dtype)
    idx_a = np.zeros((b, c), dtype=np.int64)
    cdef floating[:, ::1] vals = vals_a
    cdef cnp.int64_t[:, ::1] idx = idx_a
    with nogil:
        for i in range(b):
            for j in range(c):
                vals[i, j] = y[i, 0, j]
            for t in range(1, length):
                for j in range(c):
                    if y[i, t, j] > vals[i, j]:
                        vals[i, j] = y[i, t, j]
                        idx[i, j] = t
    return vals_a, idx_a


def conv_max_backward(floating[:, :, ::1] x, w_in, cnp.int64_t[:, ::1] idx,
                      floating[:, ::1] g):
    """Sparse route: only the argmax window of each (batch, channel) pair
    receives gradient, so each touch is one contiguous K*E block of ``x``."""
    cdef Py_ssize_t b = x.shape[0], t = x.shape[1], e = x.shape[2]
    cdef Py_ssize_t k = w_in.shape[0], c = w_in.shape[2]
    cdef Py_ssize_t span = k * e, i, ch, j, start
    dtype = np.float32 if floating is float else np.float64
    # (C, K*E) so the inner loop is contiguous
    wt_a = np.ascontiguousarray(np.asarray(w_in, dtype=dtype).transpose(2, 0, 1)).reshape(c, span)
    dwt_a = np.zeros((c, span), dtype=dtype)
    dx_a = np.zeros((b, t * e), dtype=dtype)
    xf_a = np.asarray(x).reshape(b, t * e)
    cdef floating[:, ::1] wt = wt_a, dwt = dwt_a, dx = dx_a, xf = xf_a
    cdef floating gv
    with nogil:
        for i in range(b):
            for ch in range(c):
                gv = g[i, ch]
                if gv == 0:
                    continue
                start = idx[i, ch] * e
                for j in range(span):
                    dwt[ch, j] += gv * xf[i, start + j]
                    dx[i, start + j] += gv * wt[ch, j]
    dw = dwt_a.reshape(c, k, e).transpose(1, 2, 0)
    return dx_a.reshape(b, t, e), np.ascontiguousarray(dw)


def adam_update(floating[::1] p, floating[::1] g, floating[::1] m, floating[::1] v,
                double lr, double beta1, double beta2, double eps, double c1, double c2):
    cdef Py_ssize_t i, size = p.shape[0]
    cdef double gi, mi, vi
    with nogil:
        for i in range(size):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
            m[i] = <floating>mi
            v[i] = <floating>vi
            p[i] = <floating>(p[i] - lr * (mi / c1) / (sqrt(vi / c2) + eps))


def sum_squares(floating[::1] a):
    cdef Py_ssize_t i, size = a.shape[0]
    cdef double total = 0.0
    with nogil:
        for i in range(size):
            total += <double>a[i] * a[i]
    return total
