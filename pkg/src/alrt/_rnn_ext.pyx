# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Elman forward pass and BPTT. Mirrors ``_rnn_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp

cnp.import_array()


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def forward(const double[:, ::1] W_xh, const double[:, ::1] W_hh, const double[::1] b_h,
            const double[::1] W_hy, double b_y, const double[:, ::1] X):
    cdef Py_ssize_t T = X.shape[0], D = X.shape[1], H = W_hh.shape[0]
    cdef Py_ssize_t t, i, k
    cdef double acc
    hs_arr = np.empty((T, H), dtype=np.float64)
    probs_arr = np.empty(T, dtype=np.float64)
    cdef double[:, ::1] hs = hs_arr
    cdef double[::1] probs = probs_arr
    with nogil:
        for t in range(T):
            for i in range(H):
                acc = b_h[i]
                for k in range(D):
                    acc = acc + W_xh[i, k] * X[t, k]
                if t > 0:
                    for k in range(H):
                        acc = acc + W_hh[i, k] * hs[t - 1, k]
                hs[t, i] = tanh(acc)
            acc = b_y
            for i in range(H):
                acc = acc + W_hy[i] * hs[t, i]
            probs[t] = _sigmoid(acc)
    return hs_arr, probs_arr


def backward(const double[:, ::1] W_xh, const double[:, ::1] W_hh, const double[::1] W_hy,
             const double[:, ::1] X, const double[:, ::1] hs, const double[::1] probs,
             const cnp.int8_t[::1] y, double w_neg, double w_pos):
    cdef Py_ssize_t T = X.shape[0], D = X.shape[1], H = W_hh.shape[0]
    cdef Py_ssize_t t, i, k
    cdef double g, acc, d_b_y = 0.0
    gxh = np.zeros((H, D), dtype=np.float64)
    ghh = np.zeros((H, H), dtype=np.float64)
    gbh = np.zeros(H, dtype=np.float64)
    ghy = np.zeros(H, dtype=np.float64)
    cdef double[:, ::1] d_W_xh = gxh
    cdef double[:, ::1] d_W_hh = ghh
    cdef double[::1] d_b_h = gbh
    cdef double[::1] d_W_hy = ghy
    cdef double[::1] carry = np.zeros(H, dtype=np.float64)
    cdef double[::1] da = np.zeros(H, dtype=np.float64)
    with nogil:
        for t in range(T - 1, -1, -1):
            if y[t]:
                g = w_pos * (probs[t] - 1.0) / T
            else:
                g = w_neg * probs[t] / T
            d_b_y = d_b_y + g
            for i in range(H):
                d_W_hy[i] = d_W_hy[i] + g * hs[t, i]
                da[i] = (g * W_hy[i] + carry[i]) * (1.0 - hs[t, i] * hs[t, i])
                d_b_h[i] = d_b_h[i] + da[i]
                for k in range(D):
                    d_W_xh[i, k] = d_W_xh[i, k] + da[i] * X[t, k]
                if t > 0:
                    for k in range(H):
                        d_W_hh[i, k] = d_W_hh[i, k] + da[i] * hs[t - 1, k]
            for k in range(H):
                acc = 0.0
                for i in range(H):
                    acc = acc + W_hh[i, k] * da[i]
                carry[k] = acc
    return gxh, ghh, gbh, ghy, d_b_y
