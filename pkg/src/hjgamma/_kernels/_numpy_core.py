"""Pure-numpy fallback for the hot Bellman backup kernel.

Kept arithmetically identical to the compiled version: every candidate value
is formed as ``u[k]*(1-frac) + u[k+1]*frac - cost`` in that operation order,
so both backends return bit-identical arrays.
"""

import numpy as np


def bellman_backup(u, idx, frac, cost, out=None):
    """One max-plus lookahead sweep over all nodes and velocity samples.

    out[i] = max_j  u[idx[i,j]]*(1-frac[i,j]) + u[idx[i,j]+1]*frac[i,j] - cost[i,j]

    Parameters
    ----------
    u : (N,) float64 array, current value function on the grid.
    idx : (N, M) int64 array of left bracket indices, each in [0, N-2].
    frac : (N, M) float64 array of interpolation weights in [0, 1].
    cost : (N, M) float64 array subtracted from each candidate.
    out : optional (N,) float64 array to write into.
    """
    cand = u[idx] * (1.0 - frac) + u[idx + 1] * frac - cost
    if out is None:
        return cand.max(axis=1)
    np.max(cand, axis=1, out=out)
    return out
