"""Proximal operator of the strong-hierarchy penalty.

Solves ``argmin_{beta, theta} L/2 ||(beta, theta) - (beta~, theta~)||^2 +
Omega(beta, theta)`` exactly: safe screening removes groups and pairs that
are provably zero, the survivors form a graph whose connected components are
independent subproblems, and each component is solved through its dual by
block coordinate ascent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from hierprox import _proxcore as core
from hierprox.problem import Coefficients, PenaltyConfig

logger = logging.getLogger(__name__)

DEFAULT_PROX_TOL = 1e-12
DEFAULT_MAX_SWEEPS = 100_000


@dataclass
class ProxInput:
    """The point ``(beta~, theta~)`` to be shrunk, the step constant ``L`` and
    penalty levels. Pairs absent from ``theta_tilde`` are exactly zero."""

    beta_tilde: np.ndarray
    theta_tilde: dict
    L: float
    pen: PenaltyConfig

    def __post_init__(self):
        self.beta_tilde = np.asarray(self.beta_tilde, dtype=np.float64)
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        p = self.beta_tilde.shape[0]
        for i, j in self.theta_tilde:
            if not (0 <= i < j < p):
                raise ValueError(f"invalid pair ({i}, {j}) for p={p}")

    @property
    def p(self):
        return self.beta_tilde.shape[0]

    def arrays(self):
        keys = sorted(self.theta_tilde)
        pi = np.array([k[0] for k in keys], dtype=np.int64)
        pj = np.array([k[1] for k in keys], dtype=np.int64)
        tt = np.array([self.theta_tilde[k] for k in keys], dtype=np.float64)
        return keys, pi, pj, tt


@dataclass
class InteractionGraph:
    vertices: set
    edges: set
    components: list  # [(sorted vertex list, sorted edge list)]


@dataclass
class DualState:
    """Dual variables: ``u[i]`` per vertex and ``w[(i, j)]`` meaning the entry
    of vertex ``i``'s block that pairs with ``j`` (two per edge)."""

    u: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)

    def block_norm(self, i) -> float:
        return abs(self.u.get(i, 0.0)) + sum(abs(v) for (a, _), v in self.w.items() if a == i)

    def is_feasible(self) -> bool:
        verts = set(self.u) | {a for a, _ in self.w}
        return all(self.block_norm(i) <= 1.0 for i in verts)


@dataclass
class ComponentSolution:
    beta: dict
    theta: dict
    gap: float
    sweeps: int
    converged: bool
    history: np.ndarray | None = None


@dataclass
class ProxStats:
    n_components: int = 0
    max_vertices: int = 0
    max_edges: int = 0
    n_bca_components: int = 0
    max_gap: float = 0.0
    sweeps: int = 0
    unconverged: int = 0
    n_vertices: int = 0
    n_edges: int = 0

    @classmethod
    def from_array(cls, a):
        return cls(
            n_components=int(a[core.ST_COMPONENTS]),
            max_vertices=int(a[core.ST_MAX_VERTICES]),
            max_edges=int(a[core.ST_MAX_EDGES]),
            n_bca_components=int(a[core.ST_BCA_COMPONENTS]),
            max_gap=float(a[core.ST_MAX_GAP]),
            sweeps=int(a[core.ST_SWEEPS]),
            unconverged=int(a[core.ST_UNCONVERGED]),
            n_vertices=int(a[core.ST_VERTICES]),
            n_edges=int(a[core.ST_EDGES]),
        )


def boxed_soft_threshold(v: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    a = abs(v)
    if a <= gamma:
        return 0.0
    return float(np.copysign(a - gamma, v))


def screen_group(i, beta_tilde_i, theta_tilde_group, pen: PenaltyConfig, L) -> bool:
    """True when group ``i`` (its main effect and every pair touching it) is
    zero in the prox solution."""
    g2 = pen.lambda2 / L
    excess = sum(max(abs(v) - g2, 0.0) for v in theta_tilde_group.values())
    return excess <= pen.lambda1 / L - abs(beta_tilde_i)


def screen_feature(theta_tilde_ij, pen: PenaltyConfig, L) -> bool:
    return abs(theta_tilde_ij) <= pen.lambda2 / L


def build_graph(inp: ProxInput) -> InteractionGraph:
    keys, pi, pj, tt = inp.arrays()
    in_v, alive = core.screen(inp.beta_tilde, pi, pj, tt, inp.pen.lambda1, inp.pen.lambda2, inp.L)
    vptr, verts, eptr, edges = core.components(inp.p, pi, pj, in_v, alive)
    comps = []
    for c in range(len(vptr) - 1):
        vs = [int(v) for v in verts[vptr[c] : vptr[c + 1]]]
        es = [keys[e] for e in edges[eptr[c] : eptr[c + 1]]]
        comps.append((vs, es))
    return InteractionGraph(
        vertices={int(v) for v in np.flatnonzero(in_v)},
        edges={keys[e] for e in np.flatnonzero(alive)},
        components=comps,
    )


def project_l1_ball(v) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= 1}``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    out = np.empty_like(v)
    if v.size:
        core.project_l1(v, out)
    return out


def dual_gradient(state: DualState, component, inp: ProxInput):
    """Block gradients of the dual objective.

    Returns ``(grad_u, grad_w)`` keyed like ``state.u`` / ``state.w`` over the
    component's vertices and both directions of its edges.
    """
    verts, edges = component
    lam1, lam2, L = inp.pen.lambda1, inp.pen.lambda2, inp.L
    gu = {i: lam1 * (inp.beta_tilde[i] - lam1 / L * state.u.get(i, 0.0)) for i in verts}
    gw = {}
    for i, j in edges:
        s = state.w.get((i, j), 0.0) + state.w.get((j, i), 0.0)
        g = lam1 * boxed_soft_threshold(inp.theta_tilde.get((i, j), 0.0) - lam1 / L * s, lam2 / L)
        gw[(i, j)] = g
        gw[(j, i)] = g
    return gu, gw


def _local_arrays(component, inp):
    verts, edges = component
    pos = {v: t for t, v in enumerate(verts)}
    bt = np.array([inp.beta_tilde[v] for v in verts], dtype=np.float64)
    tt = np.array([inp.theta_tilde.get(e, 0.0) for e in edges], dtype=np.float64)
    la = np.array([pos[i] for i, _ in edges], dtype=np.int64)
    lb = np.array([pos[j] for _, j in edges], dtype=np.int64)
    return bt, tt, la, lb


def dual_objective(state: DualState, component, inp: ProxInput) -> float:
    verts, edges = component
    bt, tt, la, lb = _local_arrays(component, inp)
    u = np.array([state.u.get(v, 0.0) for v in verts])
    wa = np.array([state.w.get((i, j), 0.0) for i, j in edges])
    wb = np.array([state.w.get((j, i), 0.0) for i, j in edges])
    q, _, _ = core.dual_value(bt, tt, u, wa, wb, la, lb, inp.pen.lambda1, inp.pen.lambda2, inp.L)
    return float(q)


def component_objective(component, inp: ProxInput, beta: dict, theta: dict) -> float:
    """Prox objective over one component's variables only."""
    verts, edges = component
    bt, tt, la, lb = _local_arrays(component, inp)
    b = np.array([beta.get(v, 0.0) for v in verts])
    t = np.array([theta.get(e, 0.0) for e in edges])
    return float(core.primal_value(bt, tt, b, t, la, lb, inp.pen.lambda1, inp.pen.lambda2, inp.L))


def solve_component(component, inp: ProxInput, tol=DEFAULT_PROX_TOL, max_sweeps=DEFAULT_MAX_SWEEPS,
                    record_history=False, state: DualState | None = None) -> ComponentSolution:
    """Solve the prox restricted to one vertex set and edge set.

    Edgeless singletons are soft-thresholded in closed form. Otherwise BCA runs
    on the dual until ``gap <= tol * primal`` and the primal is recovered from
    the dual gradients. ``state``, if given, is used as the starting point and
    updated in place.
    """
    verts, edges = component
    verts = list(verts)
    edges = list(edges)
    lam1, lam2, L = inp.pen.lambda1, inp.pen.lambda2, inp.L
    if lam1 == 0.0:
        beta = {v: float(inp.beta_tilde[v]) for v in verts}
        theta = {e: boxed_soft_threshold(inp.theta_tilde.get(e, 0.0), lam2 / L) for e in edges}
        return ComponentSolution(beta, theta, 0.0, 0, True)
    if not edges and len(verts) == 1 and state is None and not record_history:
        v = verts[0]
        return ComponentSolution({v: boxed_soft_threshold(inp.beta_tilde[v], lam1 / L)}, {}, 0.0, 0, True)
    bt, tt, la, lb = _local_arrays((verts, edges), inp)
    state = state if state is not None else DualState()
    u = np.array([state.u.get(v, 0.0) for v in verts])
    wa = np.array([state.w.get((i, j), 0.0) for i, j in edges])
    wb = np.array([state.w.get((j, i), 0.0) for i, j in edges])
    hist = np.full((max_sweeps, 3), np.nan) if record_history else np.empty((0, 3))
    b, t, gap, sweeps, ok = core.bca(bt, tt, la, lb, lam1, lam2, L, tol, max_sweeps, u, wa, wb, hist)
    for a, v in enumerate(verts):
        state.u[v] = float(u[a])
    for a, (i, j) in enumerate(edges):
        state.w[(i, j)] = float(wa[a])
        state.w[(j, i)] = float(wb[a])
    if not ok:
        logger.warning("BCA stopped after %d sweeps with gap %.3g", sweeps, gap)
    return ComponentSolution(
        beta=dict(zip(verts, b.tolist())),
        theta=dict(zip(edges, t.tolist())),
        gap=float(gap),
        sweeps=int(sweeps),
        converged=bool(ok),
        history=hist[:sweeps] if record_history else None,
    )


def prox_arrays(beta_tilde, pi, pj, tt, lam1, lam2, L, tol=DEFAULT_PROX_TOL,
                max_sweeps=DEFAULT_MAX_SWEEPS, screen=True, decompose=True):
    """Array-level prox. Returns ``(beta, theta_values, ProxStats)``."""
    b, t, st = core.prox_core(
        np.ascontiguousarray(beta_tilde, dtype=np.float64),
        pi, pj,
        np.ascontiguousarray(tt, dtype=np.float64),
        float(lam1), float(lam2), float(L), float(tol), int(max_sweeps),
        bool(screen), bool(decompose),
    )
    stats = ProxStats.from_array(st)
    if stats.unconverged:
        logger.warning("%d prox components hit the sweep limit (gap %.3g)", stats.unconverged, stats.max_gap)
    return b, t, stats


def prox(inp: ProxInput, tol=DEFAULT_PROX_TOL, thread_budget=1, *, screen=True, decompose=True,
         max_sweeps=DEFAULT_MAX_SWEEPS) -> Coefficients:
    """Exact prox of the penalty at ``inp``.

    With ``screen=False, decompose=False`` every variable goes into a single
    BCA problem; this is the slow reference path used for validation.
    Components are solved sequentially in ascending order, so output does not
    depend on ``thread_budget``.
    """
    keys, pi, pj, tt = inp.arrays()
    b, t, _ = prox_arrays(inp.beta_tilde, pi, pj, tt, inp.pen.lambda1, inp.pen.lambda2, inp.L,
                          tol=tol, max_sweeps=max_sweeps, screen=screen, decompose=decompose)
    theta = {k: float(v) for k, v in zip(keys, t) if v != 0.0}
    return Coefficients(b, theta)
