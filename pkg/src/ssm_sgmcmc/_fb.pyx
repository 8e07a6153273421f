# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled forward-backward kernel; mirrors _fb_np.fb_pass exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fb_pass(double[:, ::1] P, double[:, ::1] Pi, double[::1] p0):
    cdef Py_ssize_t W = P.shape[0]
    cdef Py_ssize_t K = P.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha_arr = np.empty((W, K))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] beta_arr = np.empty((W, K))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c_arr = np.empty(W)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[::1] c = c_arr
    cdef double acc, tot
    cdef Py_ssize_t t, j, k

    tot = 0.0
    for k in range(K):
        acc = 0.0
        for j in range(K):
            acc += p0[j] * Pi[j, k]
        acc *= P[0, k]
        alpha[0, k] = acc
        tot += acc
    if not tot > 0.0 or tot != tot:
        raise ValueError("forward normalizer vanished or is non-finite at t=0")
    c[0] = tot
    for k in range(K):
        alpha[0, k] /= tot

    for t in range(1, W):
        tot = 0.0
        for k in range(K):
            acc = 0.0
            for j in range(K):
                acc += alpha[t - 1, j] * Pi[j, k]
            acc *= P[t, k]
            alpha[t, k] = acc
            tot += acc
        if not tot > 0.0 or tot != tot:
            raise ValueError(
                f"forward normalizer vanished or is non-finite at t={t}")
        c[t] = tot
        for k in range(K):
            alpha[t, k] /= tot

    for k in range(K):
        beta[W - 1, k] = 1.0
    for t in range(W - 2, -1, -1):
        for j in range(K):
            acc = 0.0
            for k in range(K):
                acc += Pi[j, k] * P[t + 1, k] * beta[t + 1, k]
            beta[t, j] = acc / c[t + 1]
    return alpha_arr, beta_arr, c_arr
