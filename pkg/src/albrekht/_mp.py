"""Small helpers for running the same numpy code on mpmath object arrays."""
from __future__ import annotations

import mpmath
import numpy as np


def is_mp(a) -> bool:
    a = np.asarray(a)
    return a.dtype == object


def to_mp(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape, dtype=object)
    for idx, v in np.ndenumerate(a):
        out[idx] = mpmath.mpf(v)
    return out


def to_float(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != object:
        return a.astype(float)
    return np.vectorize(float, otypes=[float])(a) if a.size else a.astype(float)


def solve(A, b):
    """``A^{-1} b`` for float or mpf arrays; ``b`` may be a vector or matrix."""
    A = np.asarray(A)
    b = np.asarray(b)
    if A.dtype != object and b.dtype != object:
        return np.linalg.solve(A, b)
    Am = mpmath.matrix(A.tolist())
    vec = b.ndim == 1
    B = b.reshape(len(b), -1)
    cols = []
    for j in range(B.shape[1]):
        x = mpmath.lu_solve(Am, mpmath.matrix(list(B[:, j])))
        cols.append([x[i] for i in range(len(b))])
    out = np.array(cols, dtype=object).T
    return out[:, 0] if vec else out


def eye(n, like):
    if is_mp(like):
        out = np.empty((n, n), dtype=object)
        out[...] = mpmath.mpf(0)
        for i in range(n):
            out[i, i] = mpmath.mpf(1)
        return out
    return np.eye(n)


def zeros(shape, like):
    if is_mp(like):
        out = np.empty(shape, dtype=object)
        out[...] = mpmath.mpf(0)
        return out
    return np.zeros(shape)


def norm(a):
    a = np.asarray(a)
    if a.dtype == object:
        return mpmath.sqrt(sum((v * v for v in a.ravel()), mpmath.mpf(0)))
    return float(np.linalg.norm(a))
