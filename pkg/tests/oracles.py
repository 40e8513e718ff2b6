"""Slow but obviously-correct reference computations for the tests."""

import itertools

import numpy as np

from hierprox.problem import Coefficients
from hierprox.prox import prox_arrays


def dense_design(X):
    """``[X | X~]`` with interaction columns in row-major pair order, built
    with explicit loops."""
    n, p = X.shape
    cols = [X[:, i].copy() for i in range(p)]
    pairs = list(itertools.combinations(range(p), 2))
    for i, j in pairs:
        c = np.empty(n)
        for r in range(n):
            c[r] = X[r, i] * X[r, j]
        cols.append(c)
    return np.column_stack(cols) if cols else np.empty((n, 0)), pairs


def dense_objective(Z, y, x, p, pairs, lam1, lam2):
    r = y - Z @ x
    beta, theta = x[:p], x[p:]
    grp = np.abs(beta).copy()
    for k, (i, j) in enumerate(pairs):
        grp[i] = max(grp[i], abs(theta[k]))
        grp[j] = max(grp[j], abs(theta[k]))
    return 0.5 * r @ r + lam1 * grp.sum() + lam2 * np.abs(theta).sum()


def full_pgd(data, lam1, lam2, tol=1e-8, max_iter=200_000, x0=None):
    """Accelerated proximal gradient over every variable at once, with the
    exact Lipschitz constant from a dense eigendecomposition and the
    unscreened single-block prox. Returns (coef, objective)."""
    Z, pairs = dense_design(data.X)
    p = data.p
    y = data.y
    L = float(np.linalg.eigvalsh(Z.T @ Z)[-1]) * (1 + 1e-9)
    PI = np.array([q[0] for q in pairs], dtype=np.int64)
    PJ = np.array([q[1] for q in pairs], dtype=np.int64)

    def prox(v):
        b, t, _ = prox_arrays(v[:p], PI, PJ, v[p:], lam1, lam2, L, tol=1e-14, screen=False, decompose=False)
        return np.concatenate([b, t])

    def F(v):
        return dense_objective(Z, y, v, p, pairs, lam1, lam2)

    x = np.zeros(Z.shape[1]) if x0 is None else x0.copy()
    z = x.copy()
    t = 1.0
    Fx = F(x)
    for _ in range(max_iter):
        g = -Z.T @ (y - Z @ z)
        xn = prox(z - g / L)
        Fn = F(xn)
        if Fn > Fx:
            # adaptive restart keeps the iteration monotone
            z = x.copy()
            t = 1.0
            g = -Z.T @ (y - Z @ z)
            xn = prox(z - g / L)
            Fn = F(xn)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        move = np.max(np.abs(xn - x)) if x.size else 0.0
        z = xn + (t - 1) / tn * (xn - x)
        x, t, Fold, Fx = xn, tn, Fx, Fn
        if move <= tol * max(1.0, np.max(np.abs(x))) and abs(Fold - Fx) <= tol * max(1.0, abs(Fx)):
            break
    theta = {q: float(v) for q, v in zip(pairs, x[p:]) if v != 0.0}
    return Coefficients(x[:p].copy(), theta), float(Fx)


def cvxpy_prox(inp):
    """Prox through a generic conic solver."""
    import cvxpy as cp

    keys = sorted(inp.theta_tilde)
    p = inp.p
    lam1, lam2, L = inp.pen.lambda1, inp.pen.lambda2, inp.L
    b = cp.Variable(p)
    t = cp.Variable(len(keys)) if keys else None
    tt = np.array([inp.theta_tilde[k] for k in keys])
    obj = L / 2 * cp.sum_squares(b - inp.beta_tilde)
    groups = []
    for i in range(p):
        members = [k for k, q in enumerate(keys) if i in q]
        parts = [cp.abs(b[i])] + [cp.abs(t[k]) for k in members]
        groups.append(cp.max(cp.hstack(parts)))
    obj = obj + lam1 * cp.sum(cp.hstack(groups))
    if keys:
        obj = obj + L / 2 * cp.sum_squares(t - tt) + lam2 * cp.norm1(t)
    cp.Problem(cp.Minimize(obj)).solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
                                       tol_feas=1e-12)
    return b.value, (dict(zip(keys, t.value)) if keys else {})


def bfs_components(vertices, edges):
    adj = {v: set() for v in vertices}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, parts = set(), []
    for v in sorted(vertices):
        if v in seen:
            continue
        comp, queue = set(), [v]
        seen.add(v)
        while queue:
            a = queue.pop()
            comp.add(a)
            for b in adj[a]:
                if b not in seen:
                    seen.add(b)
                    queue.append(b)
        parts.append(frozenset(comp))
    return set(parts)
