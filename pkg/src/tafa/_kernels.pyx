# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Same API as _kernels_py; selected at import time by backend.py. Each
public function computes per-row results with a single code path shared
between the scalar and batch entry points, so results within this backend
are self-consistent bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND_NAME = "cython"


cdef inline void _accumulate_posterior(
    const double* logp_in,
    double* probs,
    Py_ssize_t c,
) noexcept nogil:
    # max-stabilised softmax: probs[i] = exp(logp[i]-m) / sum
    cdef Py_ssize_t i
    cdef double m = logp_in[0]
    cdef double tot = 0.0
    for i in range(1, c):
        if logp_in[i] > m:
            m = logp_in[i]
    for i in range(c):
        probs[i] = exp(logp_in[i] - m)
        tot += probs[i]
    for i in range(c):
        probs[i] /= tot


def posterior_from_logdens(double[:, ::1] logdens, double[::1] log_priors):
    cdef Py_ssize_t m = logdens.shape[0]
    cdef Py_ssize_t c = logdens.shape[1]
    logp_arr = np.empty(c)
    probs_arr = np.empty(c)
    cdef double[::1] logp = logp_arr
    cdef double[::1] probs = probs_arr
    cdef Py_ssize_t i, j
    for j in range(c):
        logp[j] = log_priors[j]
    for i in range(m):
        for j in range(c):
            logp[j] += logdens[i, j]
    _accumulate_posterior(&logp[0], &probs[0], c)
    return probs_arr


def label_prob_columns(
    double[:, :, ::1] logdens,
    double[::1] log_priors,
    long long[::1] labels,
    int[::1] tpl_flat,
    long long[::1] tpl_off,
):
    cdef Py_ssize_t n = logdens.shape[0]
    cdef Py_ssize_t c = logdens.shape[2]
    cdef Py_ssize_t s = tpl_off.shape[0] - 1
    out_arr = np.empty((n, s))
    cdef double[:, ::1] out = out_arr
    scratch_logp = np.empty(c)
    scratch_probs = np.empty(c)
    cdef double[::1] logp = scratch_logp
    cdef double[::1] probs = scratch_probs
    cdef Py_ssize_t i, j, t, d
    cdef long long lo, hi
    with nogil:
        for t in range(s):
            lo = tpl_off[t]
            hi = tpl_off[t + 1]
            for i in range(n):
                for j in range(c):
                    logp[j] = log_priors[j]
                for d in range(lo, hi):
                    for j in range(c):
                        logp[j] += logdens[i, tpl_flat[d], j]
                _accumulate_posterior(&logp[0], &probs[0], c)
                out[i, t] = probs[labels[i]]
    return out_arr


def knn_select(double[:, ::1] train, long long[::1] obs_idx, double[::1] query, Py_ssize_t k):
    cdef Py_ssize_t n = train.shape[0]
    cdef Py_ssize_t m = obs_idx.shape[0]
    if k > n:
        k = n
    best_d_arr = np.full(k, np.inf)
    best_i_arr = np.full(k, -1, dtype=np.int64)
    cdef double[::1] best_d = best_d_arr
    cdef long long[::1] best_i = best_i_arr
    cdef Py_ssize_t i, j, pos
    cdef double d2, diff
    with nogil:
        for i in range(n):
            d2 = 0.0
            for j in range(m):
                diff = train[i, obs_idx[j]] - query[j]
                d2 += diff * diff
            # strict < keeps the earlier (lower) index on distance ties
            if d2 < best_d[k - 1]:
                pos = k - 1
                while pos > 0 and d2 < best_d[pos - 1]:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = d2
                best_i[pos] = i
    return best_i_arr
