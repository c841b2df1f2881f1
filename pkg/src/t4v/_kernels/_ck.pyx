# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: depthwise temporal conv and fused AdamW update.

Semantics match _ref.py; compiled with -ffp-contract=off so results stay
bit-comparable with the numpy reference on the forward/update paths.
"""

import numpy as np

from libc.math cimport pow, sqrt


def t1d_forward(const double[:, :, ::1] frames, const double[:, ::1] kernels):
    cdef Py_ssize_t b = frames.shape[0]
    cdef Py_ssize_t T = frames.shape[1]
    cdef Py_ssize_t d = frames.shape[2]
    cdef Py_ssize_t K = kernels.shape[0]
    cdef Py_ssize_t off = K // 2
    out_arr = np.zeros((b, T, d))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, t, c, k, s
    cdef double acc
    with nogil:
        for i in range(b):
            for t in range(T):
                for c in range(d):
                    acc = 0.0
                    for k in range(K):
                        s = t + k - off
                        if 0 <= s < T:
                            acc = acc + kernels[k, c] * frames[i, s, c]
                    out[i, t, c] = acc
    return out_arr


def t1d_backward(const double[:, :, ::1] frames, const double[:, ::1] kernels,
                 const double[:, :, ::1] upstream):
    cdef Py_ssize_t b = frames.shape[0]
    cdef Py_ssize_t T = frames.shape[1]
    cdef Py_ssize_t d = frames.shape[2]
    cdef Py_ssize_t K = kernels.shape[0]
    cdef Py_ssize_t off = K // 2
    gf_arr = np.zeros((b, T, d))
    gk_arr = np.zeros((K, d))
    cdef double[:, :, ::1] gf = gf_arr
    cdef double[:, ::1] gk = gk_arr
    cdef Py_ssize_t i, t, c, k, s
    with nogil:
        for i in range(b):
            for t in range(T):
                for c in range(d):
                    for k in range(K):
                        s = t + k - off
                        if 0 <= s < T:
                            gk[k, c] += upstream[i, t, c] * frames[i, s, c]
                            gf[i, s, c] += kernels[k, c] * upstream[i, t, c]
    return gf_arr, gk_arr


def adamw_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                 long step, double lr, double beta1, double beta2,
                 double eps, double weight_decay):
    cdef Py_ssize_t n = p.shape[0]
    cdef double omb1 = 1.0 - beta1
    cdef double omb2 = 1.0 - beta2
    cdef double bc1 = 1.0 - pow(beta1, <double> step)
    cdef double bc2 = 1.0 - pow(beta2, <double> step)
    cdef double decay = 1.0 - lr * weight_decay
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            if weight_decay != 0.0:
                p[i] = p[i] * decay
            m[i] = beta1 * m[i] + omb1 * g[i]
            v[i] = beta2 * v[i] + omb2 * (g[i] * g[i])
            p[i] = p[i] - lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
