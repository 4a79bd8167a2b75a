# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Bellman backup kernel.

Arithmetic mirrors the numpy fallback exactly (same operation order per
candidate), so both backends produce bit-identical results.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def bellman_backup(const cnp.float64_t[::1] u,
                   const cnp.int64_t[:, ::1] idx,
                   const cnp.float64_t[:, ::1] frac,
                   const cnp.float64_t[:, ::1] cost,
                   out=None):
    """out[i] = max_j u[idx[i,j]]*(1-frac[i,j]) + u[idx[i,j]+1]*frac[i,j] - cost[i,j]."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t m = idx.shape[1]
    if out is None:
        out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] res = out
    cdef Py_ssize_t i, j
    cdef cnp.int64_t k
    cdef double f, cand, best
    for i in range(n):
        best = -np.inf
        for j in range(m):
            k = idx[i, j]
            f = frac[i, j]
            cand = u[k] * (1.0 - f) + u[k + 1] * f - cost[i, j]
            if cand > best:
                best = cand
        res[i] = best
    return out
