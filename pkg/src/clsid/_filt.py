"""Discrete state-space simulation kernel shared by the simulator and estimators.

The recurrence is run directly on the realization matrices (no transfer-function
form) so that closely clustered poles near the unit circle, which appear at the
benchmark's fast sampling rate, do not degrade accuracy.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _dlsim_kernel(Ad, Bd, C, D, U):
    N, m = U.shape
    n = Ad.shape[0]
    p = C.shape[0]
    x = np.zeros(n)
    Y = np.empty((N, p))
    for k in range(N):
        uk = U[k]
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += C[i, j] * x[j]
            for j in range(m):
                acc += D[i, j] * uk[j]
            Y[k, i] = acc
        xn = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += Ad[i, j] * x[j]
            for j in range(m):
                acc += Bd[i, j] * uk[j]
            xn[i] = acc
        x = xn
    return Y


def dlsim(Ad, Bd, C, D, U) -> np.ndarray:
    """Simulate x[k+1] = Ad x + Bd u, y = C x + D u from zero initial state.

    ``U`` is (N, m); returns (N, p).
    """
    U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
    Ad = np.ascontiguousarray(Ad, dtype=float)
    Bd = np.ascontiguousarray(Bd, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    D = np.ascontiguousarray(D, dtype=float)
    return _dlsim_kernel(Ad, Bd, C, D, U)
