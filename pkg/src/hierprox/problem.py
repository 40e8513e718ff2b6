"""Data container, least-squares loss, penalty and gradients.

Interaction columns ``X_i * X_j`` are never stored; every routine here
generates them on the fly from the main-feature matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from hierprox import _kernels as K

logger = logging.getLogger(__name__)

Pair = tuple[int, int]

NONZERO_TOL = 1e-10


class DesignData:
    """Response vector and main-feature matrix.

    The arrays are stored exactly as given. Use :meth:`prepare` to center the
    response and (optionally) standardize the columns; the applied offsets are
    kept so new data can be transformed the same way.
    """

    def __init__(self, X, y, *, x_mean=None, x_scale=None, y_mean=0.0):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got {X.shape}")
        if y.shape[0] != n:
            raise ValueError(f"y has {y.shape[0]} rows but X has {n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        self.X = np.asfortranarray(X)
        self.y = y
        self.X.setflags(write=False)
        self.y.setflags(write=False)
        self.x_mean = None if x_mean is None else np.asarray(x_mean, dtype=np.float64)
        self.x_scale = None if x_scale is None else np.asarray(x_scale, dtype=np.float64)
        self.y_mean = float(y_mean)
        self.column_norms = np.sqrt(np.einsum("ij,ij->j", self.X, self.X))
        self._C = None

    @classmethod
    def prepare(cls, X, y, standardize=True):
        """Center ``y``; if ``standardize`` also give every column mean 0 and
        ``||X_i||^2 / n = 1``. Constant columns are only centered."""
        # fixed layout so column reductions round the same way for any input
        X = np.asfortranarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        y_mean = float(np.mean(y))
        if not standardize:
            return cls(X, y - y_mean, y_mean=y_mean)
        mean = X.mean(axis=0)
        Xc = X - mean
        scale = np.sqrt(np.mean(Xc**2, axis=0))
        scale[scale == 0] = 1.0
        return cls(Xc / scale, y - y_mean, x_mean=mean, x_scale=scale, y_mean=y_mean)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.p * (self.p - 1) // 2

    @property
    def standardized(self) -> bool:
        return self.x_scale is not None

    def transform(self, X_new):
        """Apply the stored column preprocessing to raw features."""
        X_new = np.asarray(X_new, dtype=np.float64)
        if X_new.ndim != 2 or X_new.shape[1] != self.p:
            raise ValueError(f"expected {self.p} columns, got shape {X_new.shape}")
        if self.x_scale is None:
            return X_new
        return (X_new - self.x_mean) / self.x_scale

    def pair_norm_bound(self) -> float:
        """An upper bound on ``max_{i<j} ||X_i * X_j||_2``.

        Exact (up to a relative 1e-12 inflation) for p <= 2000, otherwise
        ``max_i ||X_i||_inf * max_j ||X_j||_2``.
        """
        if self._C is None:
            if self.p < 2:
                self._C = 0.0
            elif self.p <= 2000:
                Q = self.X * self.X
                G = Q.T @ Q
                np.fill_diagonal(G, 0.0)
                self._C = float(np.sqrt(G.max())) * (1 + 1e-12)
            else:
                self._C = float(np.abs(self.X).max() * self.column_norms.max())
        return self._C


@dataclass
class PenaltyConfig:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ValueError(f"penalties must be nonnegative, got {self.lambda1}, {self.lambda2}")


@dataclass
class Coefficients:
    """Main effects ``beta``, sparse interactions ``theta[(i, j)]`` with i < j,
    and the intercept."""

    beta: np.ndarray
    theta: dict = field(default_factory=dict)
    intercept: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).copy()
        p = self.beta.shape[0]
        clean = {}
        for (i, j), v in self.theta.items():
            i, j = int(i), int(j)
            if not (0 <= i < j < p):
                raise ValueError(f"invalid interaction pair ({i}, {j}) for p={p}")
            clean[(i, j)] = float(v)
        self.theta = clean

    @classmethod
    def zeros(cls, p):
        return cls(np.zeros(p))

    @classmethod
    def from_arrays(cls, beta, I, J, vals, intercept=0.0):
        theta = {(int(i), int(j)): float(v) for i, j, v in zip(I, J, vals) if v != 0.0}
        return cls(beta, theta, intercept)

    @property
    def p(self) -> int:
        return self.beta.shape[0]

    def theta_value(self, i, j) -> float:
        return self.theta.get((i, j), 0.0)

    def theta_arrays(self):
        keys = sorted(self.theta)
        I = np.array([k[0] for k in keys], dtype=np.int64)
        J = np.array([k[1] for k in keys], dtype=np.int64)
        vals = np.array([self.theta[k] for k in keys], dtype=np.float64)
        return I, J, vals

    def group(self, i) -> dict:
        """The slice of theta over pairs that contain ``i``."""
        return {k: v for k, v in self.theta.items() if i in k}

    def support(self, threshold=NONZERO_TOL):
        main = {int(i) for i in np.flatnonzero(np.abs(self.beta) > threshold)}
        inter = {k for k, v in self.theta.items() if abs(v) > threshold}
        return main, inter

    def pruned(self, threshold=0.0) -> "Coefficients":
        theta = {k: v for k, v in self.theta.items() if abs(v) > threshold}
        return Coefficients(self.beta, theta, self.intercept)


def _check_dims(data: DesignData, coef: Coefficients):
    if coef.p != data.p:
        raise ValueError(f"coefficients have p={coef.p}, data has p={data.p}")


def _check_pair(i, j, p):
    if not (0 <= i < j < p):
        raise ValueError(f"invalid pair ({i}, {j}) for p={p}")


def interaction_column(data: DesignData, i: int, j: int) -> np.ndarray:
    _check_pair(i, j, data.p)
    return data.X[:, i] * data.X[:, j]


def predict_processed(data: DesignData, coef: Coefficients) -> np.ndarray:
    """``X beta + X~ theta`` on the stored (processed) columns."""
    _check_dims(data, coef)
    out = np.zeros(data.n)
    cols = np.flatnonzero(coef.beta)
    K.main_predict(data.X, cols, coef.beta[cols], out)
    I, J, vals = coef.theta_arrays()
    K.pair_predict(data.X, I, J, vals, out)
    return out


def penalty(coef: Coefficients, pen: PenaltyConfig) -> float:
    group_max = np.abs(coef.beta).copy()
    l1 = 0.0
    for (i, j), v in coef.theta.items():
        a = abs(v)
        l1 += a
        if a > group_max[i]:
            group_max[i] = a
        if a > group_max[j]:
            group_max[j] = a
    return pen.lambda1 * float(group_max.sum()) + pen.lambda2 * l1


def loss(data: DesignData, coef: Coefficients) -> float:
    r = data.y - predict_processed(data, coef)
    return 0.5 * float(r @ r)


def objective(data: DesignData, coef: Coefficients, pen: PenaltyConfig) -> float:
    """Least-squares loss plus the hierarchical penalty."""
    return loss(data, coef) + penalty(coef, pen)


def residual(data: DesignData, coef: Coefficients) -> np.ndarray:
    return data.y - predict_processed(data, coef)


def full_gradient(data: DesignData, coef: Coefficients):
    """Gradient of the loss over every main effect and every pair.

    Returns ``(grad_beta, grad_theta)`` where ``grad_theta`` is indexed by the
    row-major pair order of :func:`hierprox._kernels.pair_arrays`.
    """
    r = residual(data, coef)
    return gradient_at_residual(data, r)


def gradient_at_residual(data: DesignData, r: np.ndarray):
    gb = np.empty(data.p)
    K.main_grad(data.X, r, np.arange(data.p), gb)
    gt = np.empty(data.n_pairs)
    if data.p > 1:
        K.all_pair_grad(data.X, r, gt)
    return gb, gt


def partial_gradient(data: DesignData, coef: Coefficients, pairs) -> tuple[np.ndarray, dict]:
    """Full main-effect gradient plus interaction gradients on ``pairs`` only.

    Values are identical to the matching entries of :func:`full_gradient`.
    """
    p = data.p
    pairs = sorted({(int(i), int(j)) for i, j in pairs})
    for i, j in pairs:
        _check_pair(i, j, p)
    r = residual(data, coef)
    gb = np.empty(p)
    K.main_grad(data.X, r, np.arange(p), gb)
    I = np.array([q[0] for q in pairs], dtype=np.int64)
    J = np.array([q[1] for q in pairs], dtype=np.int64)
    g = np.empty(len(pairs))
    K.pair_grad(data.X, r, I, J, g)
    return gb, dict(zip(pairs, g.tolist()))


def _power_iteration(matvec, dim, probe_iterations, rtol, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(probe_iterations):
        w = matvec(v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, True
        v = w / nw
        if abs(new - est) <= rtol * abs(new):
            return new, True
        est = new
    return est, False


@dataclass
class StepEstimate:
    L: float
    mode: str
    converged: bool


def estimate_step(data: DesignData, mode="backtracking", probe_iterations=500, rtol=1e-10) -> StepEstimate:
    """Lipschitz constant of the loss gradient.

    ``exact``: top eigenvalue of the Gram matrix of ``[X | X~]`` by power
    iteration with matrix-free products, O(n p^2) each.
    ``backtracking``: the same on ``X`` alone; the solver doubles it whenever
    the sufficient-decrease test fails.
    """
    X = data.X
    if mode == "exact":
        m = data.n_pairs
        p = data.p

        def matvec(v):
            z = X @ v[:p]
            if m:
                K.all_pair_matvec(X, np.ascontiguousarray(v[p:]), z)
            out = np.empty(p + m)
            out[:p] = X.T @ z
            if m:
                K.all_pair_matvec_t(X, z, out[p:])
            return out

        dim = p + m
    elif mode == "backtracking":

        def matvec(v):
            return X.T @ (X @ v)

        dim = data.p
    else:
        raise ValueError(f"unknown step mode {mode!r}")
    L, ok = _power_iteration(matvec, dim, probe_iterations, rtol)
    if not ok:
        # only matters in exact mode; backtracking corrects an underestimate
        log = logger.warning if mode == "exact" else logger.debug
        log("power iteration did not converge in %d iterations", probe_iterations)
    return StepEstimate(L=L, mode=mode, converged=ok)
