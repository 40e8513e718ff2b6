"""Compiled inner loops for interaction columns.

Every interaction gradient, whether requested for all pairs or a subset,
goes through ``_pair_dot`` so results agree bit for bit. Rows are always
accumulated in order ``k = 0 .. n-1``.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _pair_dot(X, r, i, j):
    acc = 0.0
    for k in range(X.shape[0]):
        acc += X[k, i] * r[k] * X[k, j]
    return acc


@njit(cache=True, inline="always")
def _col_dot(X, r, i):
    acc = 0.0
    for k in range(X.shape[0]):
        acc += X[k, i] * r[k]
    return acc


@njit(cache=True)
def pair_offset(i, p):
    # linear index of (i, i+1) in row-major upper-triangular order
    return i * p - (i * (i + 1)) // 2


@njit(cache=True, parallel=True)
def main_grad(X, r, cols, out):
    """out[c] = -X[:, cols[c]]^T r"""
    for c in prange(cols.shape[0]):
        out[c] = -_col_dot(X, r, cols[c])


@njit(cache=True, parallel=True)
def pair_grad(X, r, I, J, out):
    """out[e] = -(X_I[e] * X_J[e])^T r"""
    for e in prange(I.shape[0]):
        out[e] = -_pair_dot(X, r, I[e], J[e])


@njit(cache=True, parallel=True)
def all_pair_grad(X, r, out):
    p = X.shape[1]
    for i in prange(p - 1):
        base = pair_offset(i, p)
        for j in range(i + 1, p):
            out[base + j - i - 1] = -_pair_dot(X, r, i, j)


@njit(cache=True)
def pair_predict(X, I, J, vals, out):
    """out += sum_e vals[e] * (X_I[e] * X_J[e])"""
    n = X.shape[0]
    for e in range(I.shape[0]):
        v = vals[e]
        if v == 0.0:
            continue
        i = I[e]
        j = J[e]
        for k in range(n):
            out[k] += v * X[k, i] * X[k, j]


@njit(cache=True)
def main_predict(X, cols, vals, out):
    n = X.shape[0]
    for c in range(cols.shape[0]):
        v = vals[c]
        if v == 0.0:
            continue
        i = cols[c]
        for k in range(n):
            out[k] += v * X[k, i]


@njit(cache=True, parallel=True)
def all_pair_matvec_t(X, z, out):
    """Transpose product of the full interaction block: out = X~^T z."""
    p = X.shape[1]
    for i in prange(p - 1):
        base = pair_offset(i, p)
        for j in range(i + 1, p):
            out[base + j - i - 1] = _pair_dot(X, z, i, j)


@njit(cache=True)
def all_pair_matvec(X, v, out):
    """out = X~ v over all pairs in row-major order."""
    n, p = X.shape
    e = 0
    for i in range(p - 1):
        for j in range(i + 1, p):
            c = v[e]
            e += 1
            if c == 0.0:
                continue
            for k in range(n):
                out[k] += c * X[k, i] * X[k, j]


@njit(cache=True)
def max_pair_norm_sq(X):
    n, p = X.shape
    best = 0.0
    for i in range(p - 1):
        for j in range(i + 1, p):
            acc = 0.0
            for k in range(n):
                t = X[k, i] * X[k, j]
                acc += t * t
            if acc > best:
                best = acc
    return best


def pair_arrays(p):
    """Row indices and column indices of every pair i < j, row-major."""
    I, J = np.triu_indices(p, k=1)
    return I.astype(np.int64), J.astype(np.int64)


def pair_index(i, j, p):
    return i * p - (i * (i + 1)) // 2 + (j - i - 1)


@njit(cache=True)
def collect_pairs_above(X, r, thr):
    """All pairs with ``|-(X_i*X_j)^T r| > thr``, streamed so memory scales
    with the number of hits. Returns ``(I, J, grad)`` in row-major order."""
    p = X.shape[1]
    cap = 1024
    I = np.empty(cap, dtype=np.int64)
    J = np.empty(cap, dtype=np.int64)
    G = np.empty(cap)
    cnt = 0
    for i in range(p - 1):
        for j in range(i + 1, p):
            g = -_pair_dot(X, r, i, j)
            if abs(g) > thr:
                if cnt == cap:
                    cap *= 2
                    I2 = np.empty(cap, dtype=np.int64)
                    J2 = np.empty(cap, dtype=np.int64)
                    G2 = np.empty(cap)
                    I2[:cnt] = I[:cnt]
                    J2[:cnt] = J[:cnt]
                    G2[:cnt] = G[:cnt]
                    I, J, G = I2, J2, G2
                I[cnt] = i
                J[cnt] = j
                G[cnt] = g
                cnt += 1
    return I[:cnt].copy(), J[:cnt].copy(), G[:cnt].copy()
