"""Compiled inner loops for the sampling oracle."""

import numpy as np
from numba import njit


@njit(cache=True)
def min_path_over_directions(A, dirs, tuples, planes):
    """Smallest summed consecutive projected distance over ``dirs`` and ``tuples``.

    With ``planes`` false each row of ``dirs`` spans a line; otherwise it is the
    unit normal of a plane in R^3.  Returns ``(value, direction index, tuple index)``.
    """
    n, N = A.shape
    T, m = tuples.shape
    D = np.empty((n, n))
    best = np.inf
    best_d = -1
    best_t = -1
    for g in range(dirs.shape[0]):
        for i in range(n):
            D[i, i] = 0.0
            for j in range(i + 1, n):
                if planes:
                    x = A[i, 0] - A[j, 0]
                    y = A[i, 1] - A[j, 1]
                    z = A[i, 2] - A[j, 2]
                    cx = y * dirs[g, 2] - z * dirs[g, 1]
                    cy = z * dirs[g, 0] - x * dirs[g, 2]
                    cz = x * dirs[g, 1] - y * dirs[g, 0]
                    v = np.sqrt(cx * cx + cy * cy + cz * cz)
                else:
                    v = 0.0
                    for c in range(N):
                        v += (A[i, c] - A[j, c]) * dirs[g, c]
                    v = abs(v)
                D[i, j] = v
                D[j, i] = v
        for t in range(T):
            s = 0.0
            for q in range(m - 1):
                s += D[tuples[t, q], tuples[t, q + 1]]
                if s >= best:
                    break
            if s < best:
                best = s
                best_d = g
                best_t = t
    return best, best_d, best_t
