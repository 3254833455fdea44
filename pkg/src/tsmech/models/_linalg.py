"""Small dense helpers compiled for use inside kernels."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def inv_small(A, out):
    """Gauss-Jordan inverse with partial pivoting; returns False if singular."""
    n = A.shape[0]
    W = A.copy()
    for i in range(n):
        for j in range(n):
            out[i, j] = 1.0 if i == j else 0.0
    for c in range(n):
        p = c
        big = abs(W[c, c])
        for r in range(c + 1, n):
            if abs(W[r, c]) > big:
                big = abs(W[r, c])
                p = r
        if big == 0.0 or not np.isfinite(big):
            return False
        if p != c:
            for j in range(n):
                W[c, j], W[p, j] = W[p, j], W[c, j]
                out[c, j], out[p, j] = out[p, j], out[c, j]
        f = 1.0 / W[c, c]
        for j in range(n):
            W[c, j] *= f
            out[c, j] *= f
        for r in range(n):
            if r != c:
                g = W[r, c]
                if g != 0.0:
                    for j in range(n):
                        W[r, j] -= g * W[c, j]
                        out[r, j] -= g * out[c, j]
    return True


@njit(cache=True, nogil=True)
def matvec(A, x, out):
    n = A.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(A.shape[1]):
            s += A[i, j] * x[j]
        out[i] = s


@njit(cache=True, nogil=True)
def dot(x, y):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * y[i]
    return s
