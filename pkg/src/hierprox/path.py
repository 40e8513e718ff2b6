"""Regularization paths over a geometric lambda1 grid with lambda2 = r * lambda1."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from hierprox import _kernels as K
from hierprox.problem import (
    NONZERO_TOL,
    Coefficients,
    DesignData,
    PenaltyConfig,
    estimate_step,
    predict_processed,
)
from hierprox.solver import FitLimits, GradientSnapshot, fit_single

logger = logging.getLogger(__name__)


@dataclass
class PathConfig:
    n_lambda: int = 100
    lambda_min_ratio: float = 0.05
    lambda2_ratio: float = 2.0
    tol: float = 1e-6
    max_support: int | None = None
    step_mode: str = "backtracking"

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if not (0 < self.lambda_min_ratio <= 1):
            raise ValueError("lambda_min_ratio must lie in (0, 1]")
        if self.lambda2_ratio < 0:
            raise ValueError("lambda2_ratio must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_support is not None and self.max_support < 0:
            raise ValueError("max_support must be >= 0")
        if self.step_mode not in ("backtracking", "exact"):
            raise ValueError(f"unknown step_mode {self.step_mode!r}")


@dataclass
class PathEntry:
    lambda1: float
    lambda2: float
    coef: Coefficients
    objective: float
    n_main: int = 0
    n_inter: int = 0
    rounds: int = 0
    pgd_iterations: int = 0
    max_component_vertices: int = 0
    max_component_edges: int = 0
    max_components: int = 0
    wall_time: float = 0.0
    status: str = "ok"

    @property
    def support_size(self) -> int:
        return self.n_main + self.n_inter


@dataclass
class FitPath:
    entries: list = field(default_factory=list)
    lambda_max: float = float("nan")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k) -> PathEntry:
        return self.entries[k]

    @property
    def lambdas(self):
        return np.array([e.lambda1 for e in self.entries])


def _group_threshold(main_abs, pair_abs, r):
    """Smallest lam with sum_j [pair_abs_j - r lam]_+ <= lam - main_abs.

    The left side minus the right is piecewise linear and strictly decreasing
    in lam, so the root is found exactly by walking the sorted breakpoints.
    """
    if r == 0:
        return main_abs + float(np.sum(pair_abs))
    a = np.sort(pair_abs)[::-1]
    a = a[a > 0]
    cum = 0.0
    lam = main_abs
    # k = number of pairs still above r*lam
    for k in range(a.size + 1):
        lam = (main_abs + cum) / (1.0 + k * r)
        upper = np.inf if k == 0 else a[k - 1] / r
        lower = a[k] / r if k < a.size else 0.0
        if lower <= lam <= upper:
            return lam
        if k < a.size:
            cum += a[k]
    return lam


def _main_grad_at_zero(data: DesignData):
    # same kernel and summation order as the solver, so ties at lambda_max
    # are exact ties there too
    g = np.empty(data.p)
    K.main_grad(data.X, np.ascontiguousarray(data.y), np.arange(data.p, dtype=np.int64), g)
    return g


def lambda_max(data: DesignData, r: float, grads=None) -> float:
    """Smallest ``lambda1`` (with ``lambda2 = r * lambda1``) at which the
    all-zero model is optimal.

    Zero is optimal iff ``|X_i^T y| <= lambda1 u_i`` and each interaction's
    excess ``[|X~_ij^T y| - lambda2]_+`` can be split between groups ``i``
    and ``j`` without any group exceeding ``lambda1``. The smallest such
    ``lambda1`` solves a small LP. The per-group rule (each group absorbing
    every excess on its own) gives an upper bound and is used as a fallback.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if grads is None:
        gb = _main_grad_at_zero(data)
        gt = np.empty(data.n_pairs)
        if data.n_pairs:
            K.all_pair_grad(data.X, np.ascontiguousarray(data.y), gt)
    else:
        gb, gt = grads
    gb = np.abs(gb)
    gt = np.abs(gt)
    if not np.any(gb) and not np.any(gt):
        return 0.0
    upper = group_rule_lambda_max(gb, gt, r, data.p)
    I, J = K.pair_arrays(data.p)
    lo = float(gb.max())
    # pairs that could carry excess at any lambda1 >= lo
    keep = gt > r * lo if r > 0 else gt > 0
    if not np.any(keep):
        return lo
    exact = _split_lambda_max(gb, gt[keep], I[keep], J[keep], r, lo, upper)
    return min(exact, upper)


def _split_lambda_max(gb, g, I, J, r, lo, upper):
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    m, p = g.size, gb.size
    k = np.arange(m)
    # variables: [lam, a_0..a_{m-1}, b_0..b_{m-1}]; a goes to group I, b to J
    rows = np.concatenate([k, k, k, m + I, m + J, m + np.arange(p)])
    cols = np.concatenate([np.zeros(m, int), 1 + k, 1 + m + k, 1 + k, 1 + m + k, np.zeros(p, int)])
    vals = np.concatenate([np.full(m, -r), -np.ones(2 * m), np.ones(2 * m), -np.ones(p)])
    A = coo_matrix((vals, (rows, cols)), shape=(m + p, 1 + 2 * m)).tocsr()
    rhs = np.concatenate([-g, -gb])
    c = np.zeros(1 + 2 * m)
    c[0] = 1.0
    bounds = [(lo, upper)] + [(0, None)] * (2 * m)
    res = linprog(c, A_ub=A, b_ub=rhs, bounds=bounds, method="highs")
    if res.status != 0:
        logger.warning("lambda_max LP failed (%s); using the per-group bound", res.message)
        return upper
    lam = float(res.x[0])
    a = np.maximum(res.x[1 : 1 + m], 0.0)
    b = np.maximum(res.x[1 + m :], 0.0)
    # repair solver tolerance so (lam', a, b) is an exact certificate
    deficit = np.maximum(g - r * lam, 0.0) - a - b
    a = a + np.maximum(deficit, 0.0)
    load = gb + np.bincount(I, a, minlength=p) + np.bincount(J, b, minlength=p)
    cert = max(lam, float(load.max()))
    return float(np.nextafter(cert, np.inf))


def group_rule_lambda_max(gb, gt, r, p) -> float:
    """Smallest ``lambda1`` at which the per-group screening rule fires for
    every group at the zero iterate (``gb``, ``gt`` are absolute values)."""
    I, J = K.pair_arrays(p)
    # group i's pair magnitudes: pairs where i is first or second index
    order = np.argsort(np.concatenate([I, J]), kind="stable")
    vals = np.concatenate([gt, gt])[order]
    bounds = np.searchsorted(np.concatenate([I, J])[order], np.arange(p + 1))
    best = 0.0
    for i in range(p):
        lam = _group_threshold(float(gb[i]), vals[bounds[i] : bounds[i + 1]], r)
        best = max(best, lam)
    # make sure the rule (non-strict) really holds at the returned value
    for _ in range(8):
        if _rule_holds(gb, gt, I, J, best, r):
            break
        best = np.nextafter(best, np.inf) * (1 + 1e-15)
    return float(best)


def _rule_holds(gb, gt, I, J, lam, r):
    ex = np.maximum(gt - r * lam, 0.0)
    s = np.bincount(I, ex, minlength=gb.size) + np.bincount(J, ex, minlength=gb.size)
    return bool(np.all(s <= lam - gb))


def lambda_grid(lam_max, n_lambda, lambda_min_ratio):
    if n_lambda == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * lambda_min_ratio, n_lambda)


def recover_intercept(data: DesignData, coef: Coefficients) -> float:
    """Offset that makes residuals on the original response mean zero."""
    return data.y_mean + float(np.mean(data.y - predict_processed(data, coef)))


def fit_path(data: DesignData, config: PathConfig | None = None, thread_budget: int | None = None,
             limits: FitLimits | None = None, lambdas=None, callback=None) -> FitPath:
    """Fit the whole path, warm-starting each point from the previous one.

    ``lambdas`` overrides the grid (must be strictly decreasing).
    """
    config = config or PathConfig()
    limits = limits or FitLimits()
    if thread_budget:
        import numba

        numba.set_num_threads(max(1, min(thread_budget, numba.config.NUMBA_NUM_THREADS)))
    r = config.lambda2_ratio
    gb = _main_grad_at_zero(data)
    gt = np.empty(data.n_pairs)
    if data.n_pairs:
        K.all_pair_grad(data.X, np.ascontiguousarray(data.y), gt)
    lam_max = lambda_max(data, r, grads=(gb, gt))
    if lambdas is None:
        lambdas = lambda_grid(lam_max, config.n_lambda, config.lambda_min_ratio)
    else:
        lambdas = np.asarray(lambdas, dtype=np.float64)
        if np.any(np.diff(lambdas) >= 0):
            raise ValueError("lambdas must be strictly decreasing")
    path = FitPath(lambda_max=lam_max)
    L0 = estimate_step(data, config.step_mode).L
    L0 = L0 if L0 > 0 else 1.0
    L = L0
    zero = Coefficients.zeros(data.p)
    snapshot = GradientSnapshot.build(data, np.zeros(data.n), -gt if data.n_pairs else None)
    warm = None
    for lam1 in lambdas:
        pen = PenaltyConfig(float(lam1), float(r * lam1))
        t0 = time.perf_counter()
        status = "ok"
        if lam1 >= lam_max:
            # zero is a fixed point of the prox-gradient map here, hence optimal
            coef = Coefficients.zeros(data.p)
            coef.intercept = recover_intercept(data, coef)
            entry = PathEntry(float(lam1), pen.lambda2, coef, 0.5 * float(data.y @ data.y), rounds=0,
                              wall_time=time.perf_counter() - t0)
            path.entries.append(entry)
            if callback is not None:
                callback(entry)
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                res = fit_single(data, pen, warm=warm, snapshot=snapshot, tol=config.tol, limits=limits, L=L)
            except (FloatingPointError, ValueError) as exc:
                logger.error("fit failed at lambda1=%g: %s; cold restart", lam1, exc)
                status = f"failed: {exc}"
                res = None
        if caught and status == "ok":
            status = "warning: " + "; ".join(str(w.message) for w in caught)
        if res is None:
            warm, L = None, L0
            snapshot = GradientSnapshot.build(data, np.zeros(data.n), -gt if data.n_pairs else None)
            coef = zero
            entry = PathEntry(float(lam1), pen.lambda2, coef, float("nan"), status=status,
                              wall_time=time.perf_counter() - t0)
            path.entries.append(entry)
            continue
        coef = res.coef
        coef.intercept = recover_intercept(data, coef)
        mains, pairs = coef.support(NONZERO_TOL)
        entry = PathEntry(
            lambda1=float(lam1), lambda2=pen.lambda2, coef=coef, objective=res.objective,
            n_main=len(mains), n_inter=len(pairs), rounds=res.rounds, pgd_iterations=res.pgd_iterations,
            max_component_vertices=res.max_component_vertices, max_component_edges=res.max_component_edges,
            max_components=res.max_components, wall_time=time.perf_counter() - t0, status=status,
        )
        path.entries.append(entry)
        if callback is not None:
            callback(entry)
        logger.info("lambda1=%.6g support=%d+%d rounds=%d time=%.3fs", lam1, entry.n_main, entry.n_inter,
                    entry.rounds, entry.wall_time)
        warm, snapshot, L = coef, res.snapshot, res.L
        if config.max_support is not None and entry.support_size > config.max_support:
            break
    return path
