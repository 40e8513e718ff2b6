import math

import numpy as np
import pytest

from hierprox.datagen import TruthSpec, generate, normalize_setting
from hierprox.metrics import audit_strong_hierarchy, fdr, interaction_fdr_share, predict, prediction_error
from hierprox.problem import Coefficients, DesignData, predict_processed


def test_setting_aliases():
    assert normalize_setting("main") == "main_only"
    assert normalize_setting("Hier") == "hierarchical"
    assert normalize_setting("anti-hierarchical") == "anti_hierarchical"
    with pytest.raises(ValueError):
        normalize_setting("sideways")


def test_truth_spec_validation():
    with pytest.raises(ValueError):
        TruthSpec("main", 10, 5, 6)
    with pytest.raises(ValueError):
        TruthSpec("hier", 10, 5, 2)  # one eligible pair for two interactions
    with pytest.raises(ValueError):
        TruthSpec("anti", 10, 5, 4)
    with pytest.raises(ValueError):
        TruthSpec("main", 10, 5, 2, snr=0)


def test_main_only_truth():
    data, truth = generate(TruthSpec("main", 50, 30, 7, seed=1))
    assert not truth.theta
    assert np.count_nonzero(truth.beta) == 7
    assert set(np.unique(truth.beta)) == {0.0, 1.0}


def test_hierarchical_truth():
    _, truth = generate(TruthSpec("hier", 50, 40, 5, seed=2))
    mains = set(np.flatnonzero(truth.beta))
    assert len(truth.theta) == 5
    assert all(i in mains and j in mains for i, j in truth.theta)
    assert all(v == 1.0 for v in truth.theta.values())


def test_anti_hierarchical_truth_exhaustive():
    for seed in range(10):
        _, truth = generate(TruthSpec("anti", 50, 200, 5, seed=seed))
        mains = set(np.flatnonzero(truth.beta))
        assert len(truth.theta) == 5
        for i, j in truth.theta:
            assert i not in mains and j not in mains


def test_noiseless_response_is_signal():
    data, truth = generate(TruthSpec("hier", 40, 10, 4, seed=3, snr=math.inf))
    np.testing.assert_array_equal(data.y, predict_processed(data, truth))


def test_realized_snr_and_determinism():
    spec = TruthSpec("hier", 2000, 20, 5, seed=4, snr=10.0)
    d1, t1 = generate(spec)
    d2, t2 = generate(spec)
    np.testing.assert_array_equal(d1.X, d2.X)
    np.testing.assert_array_equal(d1.y, d2.y)
    assert t1.theta == t2.theta
    signal = predict_processed(d1, t1)
    noise = d1.y - signal
    # sigma is set from the empirical signal variance; realized noise variance
    # fluctuates around it
    assert np.var(signal) / np.var(noise) == pytest.approx(10.0, rel=0.1)
    d3, _ = generate(TruthSpec("hier", 2000, 20, 5, seed=5))
    assert not np.array_equal(d1.y, d3.y)


def test_fdr_examples():
    assert fdr(([], []), ([1], [])) == 0.0
    assert fdr(([0, 1, 2], [(0, 1), (1, 2)]), ([0, 1, 2], [])) == 0.4
    assert fdr(([0, 1], [(0, 1)]), ([0, 1, 5], [(0, 1)])) == 0.0


def test_fdr_bounds_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        sel = (rng.choice(20, rng.integers(0, 10), replace=False).tolist(), [])
        tru = (rng.choice(20, rng.integers(0, 10), replace=False).tolist(), [])
        assert 0.0 <= fdr(sel, tru) <= 1.0


def test_interaction_fdr_share():
    truth = Coefficients(np.array([1.0, 1.0, 0, 0]), {})
    sel = Coefficients(np.array([1.0, 1.0, 0.5, 0]), {(0, 1): 0.3})
    assert interaction_fdr_share(sel, truth) == 0.25
    assert fdr(sel, truth) == 0.5


def test_prediction_error_truth_noiseless():
    data, truth = generate(TruthSpec("hier", 30, 8, 4, seed=5, snr=math.inf))
    assert prediction_error(truth, data) == 0.0


def test_prediction_error_zero_coef_is_variance():
    rng = np.random.default_rng(1)
    y = rng.standard_normal(25) + 2
    X = rng.standard_normal((25, 3))
    zero = Coefficients(np.zeros(3), {})
    centered = DesignData(X, y - y.mean())
    assert prediction_error(zero, centered) == pytest.approx(np.var(y), rel=1e-12)
    # on prepared data the stored response offset is added back, so the
    # intercept has to carry the mean
    data = DesignData.prepare(X, y)
    zero.intercept = y.mean()
    assert prediction_error(zero, data) == pytest.approx(np.var(y), rel=1e-12)
    assert prediction_error(zero, data, "rmse") == pytest.approx(np.std(y), rel=1e-12)
    with pytest.raises(ValueError):
        prediction_error(zero, data, "mae")


def test_prediction_error_matches_row_loop():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((12, 4))
    y = rng.standard_normal(12)
    data = DesignData(X, y)
    c = Coefficients(rng.standard_normal(4), {(0, 2): 0.7, (1, 3): -0.4}, intercept=0.3)
    total = 0.0
    for r in range(12):
        yhat = c.intercept + sum(c.beta[i] * X[r, i] for i in range(4))
        yhat += sum(v * X[r, i] * X[r, j] for (i, j), v in c.theta.items())
        total += (y[r] - yhat) ** 2
    assert prediction_error(c, data) == pytest.approx(total / 12, rel=1e-12)
    assert predict(c, data).shape == (12,)


def test_audit_strong_hierarchy():
    assert audit_strong_hierarchy(Coefficients(np.zeros(3), {})) == []
    c = Coefficients(np.array([1.0, 0.0, 0.0]), {(0, 1): 1.0})
    assert audit_strong_hierarchy(c) == [(0, 1)]
    ok = Coefficients(np.array([1.0, 1.0, 0.0]), {(0, 1): 1.0, (1, 2): 1e-9})
    assert audit_strong_hierarchy(ok, 1e-8) == []
