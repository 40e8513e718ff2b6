"""Compiled proximal operator for the hierarchical interaction penalty.

Arrays in, arrays out. Vertices are ``0..m-1``; pairs are given as index
arrays ``pi < pj`` with values ``tt``. The Python wrappers in
:mod:`hierprox.prox` translate to and from dictionaries.
"""

import numpy as np
from numba import njit

# Stats vector layout returned by prox_core.
ST_COMPONENTS = 0
ST_MAX_VERTICES = 1
ST_MAX_EDGES = 2
ST_BCA_COMPONENTS = 3
ST_MAX_GAP = 4
ST_SWEEPS = 5
ST_UNCONVERGED = 6
ST_VERTICES = 7
ST_EDGES = 8
N_STATS = 9

_EPS = 2.220446049250313e-16


@njit(cache=True, inline="always")
def soft(v, gamma):
    a = abs(v)
    if a <= gamma:
        return 0.0
    return (a - gamma) if v > 0 else -(a - gamma)


@njit(cache=True)
def project_l1(v, out):
    """Euclidean projection of ``v`` onto the unit l1 ball (sort-based).

    The radius is shrunk by ``len(v)`` ulps so the exact (not just the
    floating-point) l1 norm of the result never exceeds 1.
    """
    d = v.shape[0]
    radius = 1.0 - (d + 1) * _EPS
    s = 0.0
    for k in range(d):
        s += abs(v[k])
    if s <= radius:
        for k in range(d):
            out[k] = v[k]
        return
    a = np.sort(np.abs(v))[::-1]
    cum = 0.0
    tau = 0.0
    for k in range(d):
        cum += a[k]
        t = (cum - radius) / (k + 1)
        if a[k] > t:
            tau = t
        else:
            break
    for _ in range(64):
        s = 0.0
        for k in range(d):
            x = abs(v[k]) - tau
            if x > 0.0:
                s += x
        if s <= radius:
            break
        bumped = tau + (s - radius) / d
        tau = bumped if bumped > tau else np.nextafter(tau, np.inf)
    for k in range(d):
        x = abs(v[k]) - tau
        if x > 0.0:
            out[k] = x if v[k] > 0 else -x
        else:
            out[k] = 0.0


@njit(cache=True)
def _uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _uf_union(parent, rank, a, b):
    ra = _uf_find(parent, a)
    rb = _uf_find(parent, b)
    if ra == rb:
        return
    if rank[ra] < rank[rb]:
        parent[ra] = rb
    elif rank[ra] > rank[rb]:
        parent[rb] = ra
    else:
        parent[rb] = ra
        rank[ra] += 1


@njit(cache=True)
def screen(bt, pi, pj, tt, lam1, lam2, L):
    """Group-level and feature-level rules. Returns (in_V, edge_alive)."""
    m = bt.shape[0]
    k = tt.shape[0]
    g2 = lam2 / L
    g1 = lam1 / L
    excess = np.zeros(m)
    for e in range(k):
        x = abs(tt[e]) - g2
        if x > 0.0:
            excess[pi[e]] += x
            excess[pj[e]] += x
    in_v = np.empty(m, dtype=np.bool_)
    for v in range(m):
        in_v[v] = excess[v] > g1 - abs(bt[v])
    alive = np.empty(k, dtype=np.bool_)
    for e in range(k):
        alive[e] = in_v[pi[e]] and in_v[pj[e]] and abs(tt[e]) > g2
    return in_v, alive


@njit(cache=True)
def components(m, pi, pj, in_v, alive):
    """Connected components of the surviving graph via union-find.

    Returns CSR-style arrays ``(vptr, verts, eptr, edges)``; components are
    ordered by smallest vertex, vertices and edges ascending within each.
    """
    parent = np.arange(m)
    rank = np.zeros(m, dtype=np.int64)
    for e in range(pi.shape[0]):
        if alive[e]:
            _uf_union(parent, rank, pi[e], pj[e])
    comp_of_root = -np.ones(m, dtype=np.int64)
    ncomp = 0
    vcount = np.zeros(m + 1, dtype=np.int64)
    comp = -np.ones(m, dtype=np.int64)
    for v in range(m):
        if not in_v[v]:
            continue
        r = _uf_find(parent, v)
        if comp_of_root[r] < 0:
            comp_of_root[r] = ncomp
            ncomp += 1
        c = comp_of_root[r]
        comp[v] = c
        vcount[c + 1] += 1
    vptr = np.cumsum(vcount[: ncomp + 1])
    verts = np.empty(vptr[ncomp], dtype=np.int64)
    fill = vptr[:ncomp].copy()
    for v in range(m):
        c = comp[v]
        if c >= 0:
            verts[fill[c]] = v
            fill[c] += 1
    ecount = np.zeros(ncomp + 1, dtype=np.int64)
    for e in range(pi.shape[0]):
        if alive[e]:
            ecount[comp[pi[e]] + 1] += 1
    eptr = np.cumsum(ecount)
    edges = np.empty(eptr[ncomp], dtype=np.int64)
    fill = eptr[:ncomp].copy()
    for e in range(pi.shape[0]):
        if alive[e]:
            c = comp[pi[e]]
            edges[fill[c]] = e
            fill[c] += 1
    return vptr, verts, eptr, edges


@njit(cache=True)
def primal_value(bt, tt, beta, theta, la, lb, lam1, lam2, L):
    """Prox objective restricted to one component (local indexing)."""
    m = bt.shape[0]
    gmax = np.abs(beta)
    val = 0.0
    for v in range(m):
        d = beta[v] - bt[v]
        val += 0.5 * L * d * d
    l1 = 0.0
    for e in range(tt.shape[0]):
        d = theta[e] - tt[e]
        val += 0.5 * L * d * d
        a = abs(theta[e])
        l1 += a
        if a > gmax[la[e]]:
            gmax[la[e]] = a
        if a > gmax[lb[e]]:
            gmax[lb[e]] = a
    return val + lam1 * gmax.sum() + lam2 * l1


@njit(cache=True)
def dual_value(bt, tt, u, wa, wb, la, lb, lam1, lam2, L):
    """Dual objective q(u, w) and the primal point it induces."""
    m = bt.shape[0]
    c = lam1 / L
    beta = np.empty(m)
    theta = np.empty(tt.shape[0])
    q = 0.0
    for v in range(m):
        b = bt[v] - c * u[v]
        beta[v] = b
        d = b - bt[v]
        q += 0.5 * L * d * d + lam1 * b * u[v]
    for e in range(tt.shape[0]):
        s = wa[e] + wb[e]
        t = soft(tt[e] - c * s, lam2 / L)
        theta[e] = t
        d = t - tt[e]
        q += 0.5 * L * d * d + lam1 * t * s + lam2 * abs(t)
    return q, beta, theta


@njit(cache=True)
def _snap_interior(beta, theta, u, wa, wb, ptr, inc, la):
    """Zero every group whose dual block is strictly inside the l1 ball.

    At the dual optimum such groups are exactly zero in the primal, while the
    recovered point ``bt - (lam1/L) u`` only gets there up to rounding.
    """
    b = beta.copy()
    t = theta.copy()
    for v in range(b.shape[0]):
        nrm = abs(u[v])
        for q in range(ptr[v], ptr[v + 1]):
            e = inc[q]
            nrm += abs(wa[e]) if la[e] == v else abs(wb[e])
        if nrm < 1.0 - 1e-9:
            b[v] = 0.0
            for q in range(ptr[v], ptr[v + 1]):
                t[inc[q]] = 0.0
    return b, t


@njit(cache=True)
def bca(bt, tt, la, lb, lam1, lam2, L, tol, max_sweeps, u, wa, wb, history):
    """Block coordinate ascent on the dual of one component.

    ``u``, ``wa``, ``wb`` are updated in place (``wa[e]`` belongs to vertex
    ``la[e]``, ``wb[e]`` to ``lb[e]``). ``history`` (shape ``(max_sweeps, 3)``
    or empty) receives per sweep: the gap, q, and the largest block l1 norm
    seen after any update in that sweep.

    Returns ``(beta, theta, gap, sweeps, converged)`` where the primal point
    is the best one recovered so far.
    """
    m = bt.shape[0]
    k = tt.shape[0]
    # incidence lists
    deg = np.zeros(m + 1, dtype=np.int64)
    for e in range(k):
        deg[la[e] + 1] += 1
        deg[lb[e] + 1] += 1
    ptr = np.cumsum(deg)
    inc = np.empty(2 * k, dtype=np.int64)
    fill = ptr[:m].copy()
    for e in range(k):
        inc[fill[la[e]]] = e
        fill[la[e]] += 1
        inc[fill[lb[e]]] = e
        fill[lb[e]] += 1

    c = lam1 / L
    g2 = lam2 / L
    # coordinate-separable block gradient: slope at most lam1^2 / L
    step = L / (lam1 * lam1)
    maxdeg = 0
    for v in range(m):
        if ptr[v + 1] - ptr[v] > maxdeg:
            maxdeg = ptr[v + 1] - ptr[v]
    z = np.empty(maxdeg + 1)
    zp = np.empty(maxdeg + 1)

    q, beta, theta = dual_value(bt, tt, u, wa, wb, la, lb, lam1, lam2, L)
    best_p = primal_value(bt, tt, beta, theta, la, lb, lam1, lam2, L)
    best_beta = beta
    best_theta = theta
    sb, st = _snap_interior(beta, theta, u, wa, wb, ptr, inc, la)
    pv = primal_value(bt, tt, sb, st, la, lb, lam1, lam2, L)
    if pv < best_p:
        best_p = pv
        best_beta = sb
        best_theta = st
    gap = best_p - q
    record = history.shape[0] > 0
    sweeps = 0
    # below this the gap is rounding noise: the objective at zero bounds the
    # size of every term that goes into P and q
    p0 = 0.0
    for v in range(m):
        p0 += bt[v] * bt[v]
    for e in range(k):
        p0 += tt[e] * tt[e]
    target = max(tol * max(best_p, 1e-12), 64.0 * 2.220446049250313e-16 * 0.5 * L * p0)
    if gap <= target:
        return best_beta, best_theta, gap, sweeps, True

    while sweeps < max_sweeps:
        worst = 0.0
        for v in range(m):
            d = ptr[v + 1] - ptr[v]
            z[0] = u[v] + step * lam1 * (bt[v] - c * u[v])
            for t in range(d):
                e = inc[ptr[v] + t]
                own = wa[e] if la[e] == v else wb[e]
                gr = lam1 * soft(tt[e] - c * (wa[e] + wb[e]), g2)
                z[t + 1] = own + step * gr
            project_l1(z[: d + 1], zp[: d + 1])
            u[v] = zp[0]
            nrm = abs(zp[0])
            for t in range(d):
                e = inc[ptr[v] + t]
                if la[e] == v:
                    wa[e] = zp[t + 1]
                else:
                    wb[e] = zp[t + 1]
                nrm += abs(zp[t + 1])
            if nrm > worst:
                worst = nrm
        sweeps += 1
        q, beta, theta = dual_value(bt, tt, u, wa, wb, la, lb, lam1, lam2, L)
        pv = primal_value(bt, tt, beta, theta, la, lb, lam1, lam2, L)
        if pv < best_p:
            best_p = pv
            best_beta = beta
            best_theta = theta
        sb, st = _snap_interior(beta, theta, u, wa, wb, ptr, inc, la)
        pv = primal_value(bt, tt, sb, st, la, lb, lam1, lam2, L)
        if pv < best_p:
            best_p = pv
            best_beta = sb
            best_theta = st
        gap = best_p - q
        if record:
            history[sweeps - 1, 0] = gap
            history[sweeps - 1, 1] = q
            history[sweeps - 1, 2] = worst
        if gap <= target:
            return best_beta, best_theta, gap, sweeps, True
    return best_beta, best_theta, gap, sweeps, False


@njit(cache=True)
def solve_block(vlist, elist, bt, pi, pj, tt, lam1, lam2, L, tol, max_sweeps, history, local):
    """Gather one vertex/edge set into local indexing and run BCA on it.

    ``local`` is scratch of length ``len(bt)``.
    """
    nv = vlist.shape[0]
    ne = elist.shape[0]
    for t in range(nv):
        local[vlist[t]] = t
    bt_l = np.empty(nv)
    for t in range(nv):
        bt_l[t] = bt[vlist[t]]
    tt_l = np.empty(ne)
    la = np.empty(ne, dtype=np.int64)
    lb = np.empty(ne, dtype=np.int64)
    for t in range(ne):
        e = elist[t]
        tt_l[t] = tt[e]
        la[t] = local[pi[e]]
        lb[t] = local[pj[e]]
    u = np.zeros(nv)
    wa = np.zeros(ne)
    wb = np.zeros(ne)
    return bca(bt_l, tt_l, la, lb, lam1, lam2, L, tol, max_sweeps, u, wa, wb, history)


@njit(cache=True)
def prox_core(bt, pi, pj, tt, lam1, lam2, L, tol, max_sweeps, do_screen, decompose):
    """Solve ``argmin L/2 ||x - x~||^2 + Omega(x)`` over main effects ``bt``
    and the listed pairs. Returns ``(beta, theta, stats)``."""
    m = bt.shape[0]
    k = tt.shape[0]
    beta = np.zeros(m)
    theta = np.zeros(k)
    stats = np.zeros(N_STATS)
    empty_hist = np.empty((0, 3))
    local = np.empty(m, dtype=np.int64)
    g2 = lam2 / L
    if lam1 == 0.0:
        for v in range(m):
            beta[v] = bt[v]
        for e in range(k):
            theta[e] = soft(tt[e], g2)
        return beta, theta, stats

    if do_screen:
        in_v, alive = screen(bt, pi, pj, tt, lam1, lam2, L)
    else:
        in_v = np.ones(m, dtype=np.bool_)
        alive = np.ones(k, dtype=np.bool_)

    if not decompose:
        vlist = np.flatnonzero(in_v)
        elist = np.flatnonzero(alive)
        stats[ST_VERTICES] = vlist.shape[0]
        stats[ST_EDGES] = elist.shape[0]
        if vlist.shape[0] == 0:
            return beta, theta, stats
        stats[ST_COMPONENTS] = 1
        stats[ST_MAX_VERTICES] = vlist.shape[0]
        stats[ST_MAX_EDGES] = elist.shape[0]
        b, t, gap, sw, ok = solve_block(vlist, elist, bt, pi, pj, tt, lam1, lam2, L, tol, max_sweeps, empty_hist, local)
        stats[ST_BCA_COMPONENTS] = 1
        stats[ST_MAX_GAP] = gap
        stats[ST_SWEEPS] = sw
        stats[ST_UNCONVERGED] = 0 if ok else 1
        for a in range(vlist.shape[0]):
            beta[vlist[a]] = b[a]
        for a in range(elist.shape[0]):
            theta[elist[a]] = t[a]
        return beta, theta, stats

    vptr, verts, eptr, edges = components(m, pi, pj, in_v, alive)
    ncomp = vptr.shape[0] - 1
    stats[ST_COMPONENTS] = ncomp
    stats[ST_VERTICES] = verts.shape[0]
    stats[ST_EDGES] = edges.shape[0]
    g1 = lam1 / L
    for cidx in range(ncomp):
        nv = vptr[cidx + 1] - vptr[cidx]
        ne = eptr[cidx + 1] - eptr[cidx]
        if nv > stats[ST_MAX_VERTICES]:
            stats[ST_MAX_VERTICES] = nv
        if ne > stats[ST_MAX_EDGES]:
            stats[ST_MAX_EDGES] = ne
        if ne == 0:
            v = verts[vptr[cidx]]
            beta[v] = soft(bt[v], g1)
            continue
        vlist = verts[vptr[cidx] : vptr[cidx + 1]]
        elist = edges[eptr[cidx] : eptr[cidx + 1]]
        b, t, gap, sw, ok = solve_block(vlist, elist, bt, pi, pj, tt, lam1, lam2, L, tol, max_sweeps, empty_hist, local)
        stats[ST_BCA_COMPONENTS] += 1
        if gap > stats[ST_MAX_GAP]:
            stats[ST_MAX_GAP] = gap
        stats[ST_SWEEPS] += sw
        if not ok:
            stats[ST_UNCONVERGED] += 1
        for a in range(nv):
            beta[vlist[a]] = b[a]
        for a in range(ne):
            theta[elist[a]] = t[a]
    return beta, theta, stats


@njit(cache=True)
def omega(beta, pi, pj, theta, lam1, lam2):
    """Penalty value with pairs given by local vertex indices."""
    gmax = np.abs(beta)
    l1 = 0.0
    for e in range(theta.shape[0]):
        a = abs(theta[e])
        l1 += a
        if a > gmax[pi[e]]:
            gmax[pi[e]] = a
        if a > gmax[pj[e]]:
            gmax[pj[e]] = a
    return lam1 * gmax.sum() + lam2 * l1
