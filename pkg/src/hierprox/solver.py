"""Active-set proximal gradient solver with gradient screening.

The outer loop alternates between PGD restricted to an active set and a
"master" PGD step over all variables. The master step only needs interaction
gradients whose magnitude exceeds ``lambda2``; a stored gradient snapshot
bounds which pairs can qualify so the rest are never evaluated.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hierprox import _kernels as K
from hierprox import _proxcore as core
from hierprox.problem import (
    NONZERO_TOL,
    Coefficients,
    DesignData,
    PenaltyConfig,
    estimate_step,
)
from hierprox.prox import DEFAULT_PROX_TOL, DEFAULT_MAX_SWEEPS, ProxStats, prox_arrays

logger = logging.getLogger(__name__)

_I64 = np.int64


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class ActiveSet:
    A: set = field(default_factory=set)
    T: set = field(default_factory=set)

    def augment(self, mains, pairs):
        """Add variables; both endpoints of every new pair join ``A``."""
        self.A.update(int(i) for i in mains)
        for i, j in pairs:
            self.T.add((int(i), int(j)))
            self.A.add(int(i))
            self.A.add(int(j))

    def main_array(self):
        return np.array(sorted(self.A), dtype=_I64)

    def pair_arrays(self):
        keys = sorted(self.T)
        return (np.array([k[0] for k in keys], dtype=_I64),
                np.array([k[1] for k in keys], dtype=_I64))


@dataclass
class GradientSnapshot:
    """Interaction-gradient magnitudes at a reference point, sorted
    descending, plus that point's prediction vector."""

    prediction_w: np.ndarray | None
    grad_magnitudes: np.ndarray | None
    order_i: np.ndarray | None
    order_j: np.ndarray | None
    C: float
    memory_cap: int = 4 << 30
    refreshes: int = 0

    @property
    def available(self) -> bool:
        return self.grad_magnitudes is not None

    @staticmethod
    def bytes_needed(p) -> int:
        return (p * (p - 1) // 2) * 16

    @classmethod
    def empty(cls, data: DesignData, memory_cap=4 << 30):
        return cls(None, None, None, None, data.pair_norm_bound(), memory_cap)

    @classmethod
    def build(cls, data: DesignData, prediction, grad_theta=None, memory_cap=4 << 30):
        """Store sorted ``|grad_theta|`` at the point with the given prediction.
        Falls back to an unavailable snapshot when it would exceed
        ``memory_cap`` bytes."""
        snap = cls.empty(data, memory_cap)
        snap.refresh(data, prediction, grad_theta)
        return snap

    def refresh(self, data: DesignData, prediction, grad_theta=None):
        if self.bytes_needed(data.p) > self.memory_cap:
            self.prediction_w = self.grad_magnitudes = self.order_i = self.order_j = None
            return
        if grad_theta is None:
            grad_theta = np.empty(data.n_pairs)
            if data.n_pairs:
                K.all_pair_grad(data.X, data.y - prediction, grad_theta)
        mags = np.abs(grad_theta)
        order = np.argsort(-mags, kind="stable")
        I, J = K.pair_arrays(data.p)
        self.prediction_w = np.array(prediction, dtype=np.float64)
        self.grad_magnitudes = mags[order]
        self.order_i = I[order].astype(np.int32)
        self.order_j = J[order].astype(np.int32)
        self.refreshes += 1


@dataclass
class CriticalSet:
    """Pairs outside ``T`` whose current gradient exceeds ``lambda2``.

    ``hat_size`` is the size of the screened superset that was evaluated;
    ``degenerate`` means the bound was vacuous and every pair was evaluated.
    """

    I: np.ndarray
    J: np.ndarray
    grad: np.ndarray
    hat_I: np.ndarray | None
    hat_J: np.ndarray | None
    hat_size: int
    degenerate: bool
    full_grad: np.ndarray | None = None

    def pairs(self):
        return list(zip(self.I.tolist(), self.J.tolist()))

    def grads(self) -> dict:
        return dict(zip(self.pairs(), self.grad.tolist()))


@dataclass
class FitLimits:
    max_rounds: int = 100
    max_pgd_iter: int = 20_000
    refresh_threshold: int = 100_000
    prox_tol: float = DEFAULT_PROX_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    cold_start_k: int = 100


@dataclass
class RoundInfo:
    round: int
    n_main_active: int
    n_pair_active: int
    hat_size: int
    critical_size: int
    n_components: int
    max_component_edges: int
    objective: float


@dataclass
class FitResult:
    coef: Coefficients
    objective: float
    L: float
    snapshot: GradientSnapshot
    active: ActiveSet
    rounds: int = 0
    pgd_iterations: int = 0
    converged: bool = True
    max_component_vertices: int = 0
    max_component_edges: int = 0
    max_components: int = 0
    degenerate_screens: int = 0
    history: list = field(default_factory=list)
    wall_time: float = 0.0


def _linear(I, J, p):
    I = I.astype(_I64)
    J = J.astype(_I64)
    return I * p - (I * (I + 1)) // 2 + (J - I - 1)


def _local_pairs(A, TI, TJ):
    return np.searchsorted(A, TI).astype(_I64), np.searchsorted(A, TJ).astype(_I64)


class _Stats:
    def __init__(self):
        self.max_v = 0
        self.max_e = 0
        self.max_c = 0

    def add(self, st: ProxStats):
        self.max_v = max(self.max_v, st.max_vertices)
        self.max_e = max(self.max_e, st.max_edges)
        self.max_c = max(self.max_c, st.n_components)


def _predict(X, A, bA, TI, TJ, tT):
    out = np.zeros(X.shape[0])
    K.main_predict(X, A, bA, out)
    K.pair_predict(X, TI, TJ, tT, out)
    return out


def _pgd_arrays(data, pen, A, TI, TJ, b, t, L, tol, max_iter, limits, stats=None):
    """PGD on the variables ``beta[A]``, ``theta[(TI, TJ)]`` with backtracking.

    Returns ``(b, t, eta, F, L, iterations, converged)``.
    """
    X, y = data.X, data.y
    lam1, lam2 = pen.lambda1, pen.lambda2
    pi, pj = _local_pairs(A, TI, TJ)
    eta = _predict(X, A, b, TI, TJ, t)
    r = y - eta
    f = 0.5 * float(r @ r)
    F = f + core.omega(b, pi, pj, t, lam1, lam2)
    if A.size == 0:
        return b, t, eta, F, L, 0, True
    gb = np.empty(A.size)
    gt = np.empty(TI.size)
    for it in range(1, max_iter + 1):
        K.main_grad(X, r, A, gb)
        K.pair_grad(X, r, TI, TJ, gt)
        while True:
            nb, nt, st = prox_arrays(b - gb / L, pi, pj, t - gt / L, lam1, lam2, L,
                                     tol=limits.prox_tol, max_sweeps=limits.max_sweeps)
            if stats is not None:
                stats.add(st)
            eta_n = _predict(X, A, nb, TI, TJ, nt)
            rn = y - eta_n
            fn = 0.5 * float(rn @ rn)
            db = nb - b
            dt = nt - t
            model = f + float(gb @ db) + float(gt @ dt) + 0.5 * L * (float(db @ db) + float(dt @ dt))
            if fn <= model + 1e-12 * abs(f):
                break
            L *= 2.0
        Fn = fn + core.omega(nb, pi, pj, nt, lam1, lam2)
        if not np.isfinite(Fn):
            raise FloatingPointError("objective became non-finite")
        change = abs(F - Fn)
        move = max(np.abs(db).max(initial=0.0), np.abs(dt).max(initial=0.0))
        scale = max(1.0, np.abs(nb).max(initial=0.0), np.abs(nt).max(initial=0.0))
        b, t, eta, r, f, F = nb, nt, eta_n, rn, fn, Fn
        if change <= tol * max(abs(F), 1e-300) and move <= tol * scale:
            return b, t, eta, F, L, it, True
    return b, t, eta, F, L, max_iter, False


def _to_coef(p, A, b, TI, TJ, t, threshold=0.0):
    beta = np.zeros(p)
    beta[A] = b
    keep = np.abs(t) > threshold
    theta = {(int(i), int(j)): float(v) for i, j, v in zip(TI[keep], TJ[keep], t[keep])}
    return Coefficients(beta, theta)


def _restrict(coef: Coefficients, A, TI, TJ):
    b = coef.beta[A].copy()
    t = np.array([coef.theta.get((int(i), int(j)), 0.0) for i, j in zip(TI, TJ)], dtype=np.float64)
    return b, t


def pgd_restricted(data: DesignData, pen: PenaltyConfig, active: ActiveSet, init: Coefficients,
                   L_mode="backtracking", tol=1e-6, max_iter=20_000, L=None,
                   limits: FitLimits | None = None) -> tuple[Coefficients, float]:
    """Proximal gradient descent over the active variables only.

    Stops when the relative objective change falls to ``tol`` and no
    coordinate moves by more than ``tol`` (relative to ``max(1, |x|_inf)``).
    Returns the
    coefficients (supported within ``active``) and the final step constant.
    """
    limits = limits or FitLimits()
    A = active.main_array()
    TI, TJ = active.pair_arrays()
    for (i, j), v in init.theta.items():
        if v != 0 and (i, j) not in active.T:
            raise ValueError(f"init has pair ({i}, {j}) outside the active set")
    if np.any(init.beta[np.setdiff1d(np.arange(data.p), A)] != 0):
        raise ValueError("init has main effects outside the active set")
    if L is None:
        L = estimate_step(data, L_mode).L
    b, t = _restrict(init, A, TI, TJ)
    b, t, _, _, L, iters, ok = _pgd_arrays(data, pen, A, TI, TJ, b, t, L, tol, max_iter, limits)
    if not ok:
        warnings.warn(f"restricted PGD hit max_iter={max_iter}", ConvergenceWarning, stacklevel=2)
    return _to_coef(data.p, A, b, TI, TJ, t), L


def critical_set(data: DesignData, prediction_hat, active_T: set, pen: PenaltyConfig,
                 snapshot: GradientSnapshot) -> CriticalSet:
    """Pairs outside ``T`` whose gradient at the current point exceeds
    ``lambda2``, evaluated only on a provable superset built from the
    snapshot."""
    X = data.X
    r = data.y - prediction_hat
    lam2 = pen.lambda2
    p = data.p
    T_lin = None
    if active_T:
        Ti = np.array([k[0] for k in active_T], dtype=_I64)
        Tj = np.array([k[1] for k in active_T], dtype=_I64)
        T_lin = np.sort(_linear(Ti, Tj, p))

    def drop_T(I, J, *rest):
        if T_lin is None or I.size == 0:
            return (I, J) + rest
        keep = ~np.isin(_linear(I, J, p), T_lin, assume_unique=False)
        return (I[keep], J[keep]) + tuple(a[keep] for a in rest)

    thr = -np.inf
    if snapshot.available:
        gnorm = float(np.linalg.norm(snapshot.prediction_w - prediction_hat))
        bound = snapshot.C * gnorm
        # floating-point slack; only enlarges the superset
        thr = lam2 - bound - 1e-9 * (lam2 + bound) - 1e-300
    if thr <= 0:
        # vacuous bound: every pair outside T must be evaluated
        full = None
        if snapshot.available or data.n_pairs * 8 <= snapshot.memory_cap:
            full = np.empty(data.n_pairs)
            if data.n_pairs:
                K.all_pair_grad(X, r, full)
            I_all, J_all = K.pair_arrays(p)
            sel = np.abs(full) > lam2
            I, J, g = drop_T(I_all[sel], J_all[sel], full[sel])
        else:
            I, J, g = drop_T(*K.collect_pairs_above(X, r, lam2))
        return CriticalSet(I, J, g, None, None, data.n_pairs - len(active_T), True, full)
    count = int(np.searchsorted(-snapshot.grad_magnitudes, -thr, side="left"))
    hI = snapshot.order_i[:count].astype(_I64)
    hJ = snapshot.order_j[:count].astype(_I64)
    hI, hJ = drop_T(hI, hJ)
    g = np.empty(hI.size)
    K.pair_grad(X, r, hI, hJ, g)
    sel = np.abs(g) > lam2
    return CriticalSet(hI[sel], hJ[sel], g[sel], hI, hJ, int(hI.size), False)


@dataclass
class MasterResult:
    proposal: Coefficients
    new_main: list
    new_pairs: list
    critical: CriticalSet
    L: float
    prox_stats: ProxStats
    grad_beta: np.ndarray | None = None
    pair_I: np.ndarray | None = None
    pair_J: np.ndarray | None = None
    grad_pairs: np.ndarray | None = None


def _master_arrays(data, pen, beta, TI, TJ, tT, eta, snapshot, L, active: ActiveSet, limits, refresh=True):
    X, y = data.X, data.y
    p = data.p
    r = y - eta
    f = 0.5 * float(r @ r)
    gb = np.empty(p)
    K.main_grad(X, r, np.arange(p, dtype=_I64), gb)
    gT = np.empty(TI.size)
    K.pair_grad(X, r, TI, TJ, gT)
    crit = critical_set(data, eta, active.T, pen, snapshot)
    if refresh and crit.hat_size > limits.refresh_threshold:
        snapshot.refresh(data, eta, crit.full_grad)
    PI = np.concatenate([TI, crit.I])
    PJ = np.concatenate([TJ, crit.J])
    t0 = np.concatenate([tT, np.zeros(crit.I.size)])
    g = np.concatenate([gT, crit.grad])
    while True:
        nb, nt, st = prox_arrays(beta - gb / L, PI, PJ, t0 - g / L, pen.lambda1, pen.lambda2, L,
                                 tol=limits.prox_tol, max_sweeps=limits.max_sweeps)
        db = nb - beta
        dt = nt - t0
        eta_n = _predict(X, np.arange(p, dtype=_I64), nb, PI, PJ, nt)
        rn = y - eta_n
        fn = 0.5 * float(rn @ rn)
        model = f + float(gb @ db) + float(g @ dt) + 0.5 * L * (float(db @ db) + float(dt @ dt))
        if fn <= model + 1e-12 * abs(f):
            break
        L *= 2.0
    new_main = [int(i) for i in np.flatnonzero(np.abs(nb) > NONZERO_TOL) if int(i) not in active.A]
    nz = np.abs(nt[TI.size:]) > NONZERO_TOL
    new_pairs = list(zip(crit.I[nz].tolist(), crit.J[nz].tolist()))
    keep = np.abs(nt) > 0
    proposal = Coefficients(nb, {(int(i), int(j)): float(v) for i, j, v in zip(PI[keep], PJ[keep], nt[keep])})
    return MasterResult(proposal, new_main, new_pairs, crit, L, st, gb, PI, PJ, g)


def master_iteration(data: DesignData, pen: PenaltyConfig, coef: Coefficients, active: ActiveSet,
                     snapshot: GradientSnapshot, L: float, limits: FitLimits | None = None) -> MasterResult:
    """One PGD step over all variables, using only the gradients needed to
    build the screening graph. Reports which variables outside the active set
    became nonzero."""
    limits = limits or FitLimits()
    TI, TJ = active.pair_arrays()
    A = active.main_array()
    b, tT = _restrict(coef, A, TI, TJ)
    beta = np.zeros(data.p)
    beta[A] = b
    eta = _predict(data.X, A, b, TI, TJ, tT)
    return _master_arrays(data, pen, beta, TI, TJ, tT, eta, snapshot, L, active, limits)


def initial_active_set(data: DesignData, warm: Coefficients | None, k=100) -> ActiveSet:
    """Support of ``warm``, or the top-``k`` main effects by ``|X^T y|``."""
    active = ActiveSet()
    if warm is None:
        k = min(k, data.p)
        score = np.abs(data.X.T @ data.y)
        top = np.argsort(-score, kind="stable")[:k]
        active.augment(top.tolist(), [])
        return active
    mains, pairs = warm.support(threshold=0.0)
    active.augment(mains, pairs)
    return active


def fit_single(data: DesignData, pen: PenaltyConfig, warm: Coefficients | None = None,
               snapshot: GradientSnapshot | None = None, tol=1e-6, limits: FitLimits | None = None,
               L: float | None = None, L_mode="backtracking",
               callback: Callable[[RoundInfo], None] | None = None) -> FitResult:
    """Active-set algorithm for one ``(lambda1, lambda2)``.

    Alternates restricted PGD with master iterations until a master iteration
    turns on no variable outside the active set.
    """
    t_start = time.perf_counter()
    limits = limits or FitLimits()
    p = data.p
    if L is None:
        L = estimate_step(data, L_mode).L
        if L <= 0:
            L = 1.0
    active = initial_active_set(data, warm, limits.cold_start_k)
    current = warm if warm is not None else Coefficients.zeros(p)
    if snapshot is None:
        from hierprox.problem import predict_processed

        snapshot = GradientSnapshot.build(data, predict_processed(data, current))
    stats = _Stats()
    result = FitResult(current, np.nan, L, snapshot, active)
    converged = False
    for rnd in range(1, limits.max_rounds + 1):
        A = active.main_array()
        TI, TJ = active.pair_arrays()
        b, t = _restrict(current, A, TI, TJ)
        b, t, eta, F, L, iters, ok = _pgd_arrays(data, pen, A, TI, TJ, b, t, L, tol,
                                                 limits.max_pgd_iter, limits, stats)
        result.pgd_iterations += iters
        if not ok:
            warnings.warn(f"restricted PGD hit max_iter={limits.max_pgd_iter}", ConvergenceWarning, stacklevel=2)
        beta = np.zeros(p)
        beta[A] = b
        m = _master_arrays(data, pen, beta, TI, TJ, t, eta, snapshot, L, active, limits)
        L = m.L
        stats.add(m.prox_stats)
        if m.critical.degenerate:
            result.degenerate_screens += 1
        info = RoundInfo(rnd, len(active.A), len(active.T), m.critical.hat_size, int(m.critical.I.size),
                         m.prox_stats.n_components, m.prox_stats.max_edges, F)
        result.history.append(info)
        if callback is not None:
            callback(info)
        logger.debug("round %d: |A|=%d |T|=%d |S^|=%d |S|=%d F=%.10g", rnd, info.n_main_active,
                     info.n_pair_active, info.hat_size, info.critical_size, F)
        current = _to_coef(p, A, b, TI, TJ, t, threshold=0.0)
        result.objective = F
        result.rounds = rnd
        if not m.new_main and not m.new_pairs:
            converged = True
            break
        active.augment(m.new_main, m.new_pairs)
        current = m.proposal
    if not converged:
        warnings.warn(f"active-set loop hit max_rounds={limits.max_rounds}", ConvergenceWarning, stacklevel=2)
    result.coef = current
    result.L = L
    result.converged = converged
    result.max_component_vertices = stats.max_v
    result.max_component_edges = stats.max_e
    result.max_components = stats.max_c
    result.wall_time = time.perf_counter() - t_start
    return result
