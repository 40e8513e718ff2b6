import numpy as np
import pytest
from conftest import random_coef, random_data
from oracles import full_pgd

from hierprox import _kernels as K
from hierprox.path import lambda_max
from hierprox.problem import (
    NONZERO_TOL,
    Coefficients,
    DesignData,
    PenaltyConfig,
    full_gradient,
    objective,
    predict_processed,
)
from hierprox.prox import prox_arrays
from hierprox.solver import (
    ActiveSet,
    FitLimits,
    GradientSnapshot,
    critical_set,
    fit_single,
    master_iteration,
    pgd_restricted,
)


def _hier_data(seed, n=50, p=8, noise=0.5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X[:, 0] + X[:, 1] + X[:, 0] * X[:, 1] + noise * rng.standard_normal(n)
    return DesignData.prepare(X, y)


def _all_pairs(p):
    return {(i, j) for i in range(p) for j in range(i + 1, p)}


def test_active_set_augment_adds_endpoints():
    a = ActiveSet()
    a.augment([3], [(1, 5)])
    assert a.A == {1, 3, 5} and a.T == {(1, 5)}


def test_pgd_restricted_empty_active_set(rng):
    data = random_data(rng, 10, 3)
    coef, _ = pgd_restricted(data, PenaltyConfig(0.1, 0.1), ActiveSet(), Coefficients.zeros(3))
    assert not np.any(coef.beta) and not coef.theta


def test_pgd_restricted_scalar_lasso():
    x = np.array([0.5, 0.5, 0.5, 0.5])
    y = np.array([3.0, -1.0, 2.0, 0.5])
    data = DesignData(x[:, None], y)
    coef, _ = pgd_restricted(data, PenaltyConfig(0.7, 1.0), ActiveSet({0}, set()), Coefficients.zeros(1), tol=1e-14)
    want = np.sign(x @ y) * max(abs(x @ y) - 0.7, 0)
    assert coef.beta[0] == pytest.approx(want, abs=1e-12)


def test_pgd_restricted_rejects_init_outside_active(rng):
    data = random_data(rng, 10, 3)
    with pytest.raises(ValueError):
        pgd_restricted(data, PenaltyConfig(1, 1), ActiveSet({0}, set()), Coefficients(np.array([0, 1.0, 0])))


def test_pgd_restricted_full_active_matches_oracle():
    data = _hier_data(0)
    lmax = lambda_max(data, 2.0)
    for frac in (0.5, 0.2, 0.05):
        pen = PenaltyConfig(frac * lmax, 2 * frac * lmax)
        active = ActiveSet(set(range(8)), _all_pairs(8))
        coef, _ = pgd_restricted(data, pen, active, Coefficients.zeros(8), tol=1e-8, max_iter=200_000)
        _, want = full_pgd(data, pen.lambda1, pen.lambda2, tol=1e-10)
        assert objective(data, coef, pen) == pytest.approx(want, rel=1e-4)


def test_snapshot_sorted_and_c_bound(rng):
    data = random_data(rng, 30, 7)
    snap = GradientSnapshot.build(data, np.zeros(30))
    assert np.all(np.diff(snap.grad_magnitudes) <= 0)
    norms = [np.linalg.norm(data.X[:, i] * data.X[:, j]) for i in range(7) for j in range(i + 1, 7)]
    assert snap.C >= max(norms)


def test_snapshot_memory_cap_disables_storage(rng):
    data = random_data(rng, 20, 10)
    snap = GradientSnapshot.build(data, np.zeros(20), memory_cap=16)
    assert not snap.available


def test_critical_set_zero_drift(rng):
    data = random_data(rng, 40, 9)
    coef = random_coef(rng, 9, density=0.2, scale=0.3)
    eta = predict_processed(data, coef)
    snap = GradientSnapshot.build(data, eta)
    lam2 = float(np.median(snap.grad_magnitudes))
    T = {(0, 1), (2, 5)}
    crit = critical_set(data, eta, T, PenaltyConfig(1.0, lam2), snap)
    _, gt = full_gradient(data, coef)
    I, J = K.pair_arrays(9)
    want = {(int(i), int(j)) for i, j, g in zip(I, J, gt) if abs(g) > lam2 and (i, j) not in T}
    assert set(crit.pairs()) == want
    hat = set(zip(crit.hat_I.tolist(), crit.hat_J.tolist()))
    assert hat == want


def test_critical_set_lambda2_zero_is_degenerate(rng):
    data = random_data(rng, 25, 6)
    coef = random_coef(rng, 6, density=0.3)
    eta = predict_processed(data, coef)
    snap = GradientSnapshot.build(data, np.zeros(25))
    crit = critical_set(data, eta, set(), PenaltyConfig(1.0, 0.0), snap)
    assert crit.degenerate
    _, gt = full_gradient(data, coef)
    assert len(crit.pairs()) == int(np.count_nonzero(gt))


def test_critical_set_matches_full_gradient_oracle():
    rng = np.random.default_rng(31)
    for trial in range(20):
        data = random_data(rng, 40, 10)
        w = random_coef(rng, 10, density=0.2, scale=0.3)
        snap = GradientSnapshot.build(data, predict_processed(data, w))
        # a nearby point so the bound is informative
        cur = Coefficients(w.beta + 0.01 * rng.standard_normal(10), w.theta)
        eta = predict_processed(data, cur)
        _, gt = full_gradient(data, cur)
        lam2 = float(np.quantile(np.abs(gt), 0.8))
        crit = critical_set(data, eta, set(), PenaltyConfig(1.0, lam2), snap)
        I, J = K.pair_arrays(10)
        oracle = {(int(i), int(j)): g for i, j, g in zip(I, J, gt) if abs(g) > lam2}
        assert crit.grads() == oracle


def test_critical_set_streaming_fallback_matches(rng):
    data = random_data(rng, 30, 12)
    coef = random_coef(rng, 12, density=0.2, scale=0.3)
    eta = predict_processed(data, coef)
    tiny = GradientSnapshot.empty(data, memory_cap=8)
    roomy = GradientSnapshot.empty(data)
    pen = PenaltyConfig(1.0, 2.0)
    a = critical_set(data, eta, {(0, 1)}, pen, tiny)
    b = critical_set(data, eta, {(0, 1)}, pen, roomy)
    assert a.grads() == b.grads()


def test_master_iteration_support_matches_full_step():
    rng = np.random.default_rng(41)
    for trial in range(10):
        data = random_data(rng, 40, 8)
        lmax = lambda_max(data, 2.0)
        pen = PenaltyConfig(0.3 * lmax, 0.6 * lmax)
        coef = random_coef(rng, 8, density=0.3, scale=0.2)
        mains, pairs = coef.support(0.0)
        active = ActiveSet()
        active.augment(mains, pairs)
        coef = Coefficients(coef.beta * np.isin(np.arange(8), list(active.A)), coef.theta)
        L = 50.0
        snap = GradientSnapshot.build(data, np.zeros(40))
        m = master_iteration(data, pen, coef, active, snap, L)
        # oracle: dense gradient over every pair, prox without gradient screening
        gb, gt = full_gradient(data, coef)
        I, J = K.pair_arrays(8)
        t0 = np.array([coef.theta_value(i, j) for i, j in zip(I, J)])
        b, t, _ = prox_arrays(coef.beta - gb / m.L, I, J, t0 - gt / m.L, pen.lambda1, pen.lambda2, m.L)
        om = {int(i) for i in np.flatnonzero(np.abs(b) > NONZERO_TOL)} - active.A
        op = {(int(i), int(j)) for i, j, v in zip(I, J, t) if abs(v) > NONZERO_TOL} - active.T
        assert set(m.new_main) == om
        assert set(m.new_pairs) == op


def test_fit_single_above_lambda_max_is_zero():
    data = _hier_data(2, p=10)
    lmax = lambda_max(data, 2.0)
    res = fit_single(data, PenaltyConfig(lmax, 2 * lmax))
    assert res.rounds == 1
    assert not np.any(res.coef.beta) and not any(res.coef.theta.values())


def test_fit_single_warm_at_optimum_stops_immediately():
    data = _hier_data(3, p=10)
    lmax = lambda_max(data, 2.0)
    pen = PenaltyConfig(0.2 * lmax, 0.4 * lmax)
    first = fit_single(data, pen, tol=1e-10)
    before = (set(first.active.A), set(first.active.T))
    again = fit_single(data, pen, warm=first.coef, tol=1e-10)
    assert again.rounds == 1
    mains, pairs = first.coef.support(0.0)
    assert again.active.A == set(mains) | {q[0] for q in pairs} | {q[1] for q in pairs}
    assert again.active.A <= before[0]


def test_fit_single_matches_full_pgd_oracle():
    rng = np.random.default_rng(51)
    for trial in range(4):
        data = random_data(rng, 50, 20)
        lmax = lambda_max(data, 2.0)
        for frac in (0.6, 0.3, 0.1):
            pen = PenaltyConfig(frac * lmax, 2 * frac * lmax)
            res = fit_single(data, pen, tol=1e-8)
            _, want = full_pgd(data, pen.lambda1, pen.lambda2, tol=1e-10)
            assert res.objective == pytest.approx(want, rel=1e-4)
            assert objective(data, res.coef, pen) == pytest.approx(res.objective, rel=1e-10)


def test_fit_single_termination_soundness():
    rng = np.random.default_rng(61)
    tol = 1e-6
    for trial in range(6):
        data = random_data(rng, 50, 12)
        lmax = lambda_max(data, 2.0)
        pen = PenaltyConfig(0.15 * lmax, 0.3 * lmax)
        res = fit_single(data, pen, tol=tol)
        c = res.coef
        gb, gt = full_gradient(data, c)
        I, J = K.pair_arrays(12)
        t0 = np.array([c.theta_value(i, j) for i, j in zip(I, J)])
        b, t, _ = prox_arrays(c.beta - gb / res.L, I, J, t0 - gt / res.L, pen.lambda1, pen.lambda2, res.L)
        old = set(np.flatnonzero(np.abs(c.beta) > NONZERO_TOL)) | {
            (int(i), int(j)) for i, j, v in zip(I, J, t0) if abs(v) > NONZERO_TOL}
        new = set(np.flatnonzero(np.abs(b) > NONZERO_TOL)) | {
            (int(i), int(j)) for i, j, v in zip(I, J, t) if abs(v) > NONZERO_TOL}
        assert new <= old
        scale = max(1.0, np.max(np.abs(np.concatenate([c.beta, t0]))))
        assert np.max(np.abs(np.concatenate([b - c.beta, t - t0]))) < 10 * tol * scale


def test_fit_single_rounds_monotone_and_growing():
    rng = np.random.default_rng(71)
    for trial in range(5):
        data = random_data(rng, 60, 25)
        lmax = lambda_max(data, 2.0)
        infos = []
        fit_single(data, PenaltyConfig(0.1 * lmax, 0.2 * lmax), callback=infos.append,
                   limits=FitLimits(cold_start_k=2))
        objs = [r.objective for r in infos]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(objs, objs[1:]))
        sizes = [(r.n_main_active, r.n_pair_active) for r in infos]
        assert all(b[0] >= a[0] and b[1] >= a[1] for a, b in zip(sizes, sizes[1:]))
        assert [r.round for r in infos] == list(range(1, len(infos) + 1))


def test_fit_single_refresh_and_memory_cap_agree():
    data = _hier_data(4, n=60, p=15)
    lmax = lambda_max(data, 2.0)
    pen = PenaltyConfig(0.1 * lmax, 0.2 * lmax)
    base = fit_single(data, pen, tol=1e-9)
    eager = fit_single(data, pen, tol=1e-9, limits=FitLimits(refresh_threshold=0))
    capped = fit_single(data, pen, tol=1e-9, snapshot=GradientSnapshot.empty(data, memory_cap=8))
    assert eager.snapshot.refreshes > 1
    assert capped.degenerate_screens == capped.rounds
    for other in (eager, capped):
        assert other.objective == pytest.approx(base.objective, rel=1e-8)
