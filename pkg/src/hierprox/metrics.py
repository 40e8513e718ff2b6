"""Selection and prediction metrics."""

from __future__ import annotations

import numpy as np

from hierprox.problem import Coefficients, DesignData, predict_processed


def _as_sets(support):
    if isinstance(support, Coefficients):
        return support.support()
    mains, pairs = support
    return set(mains), {tuple(q) for q in pairs}


def fdr(selected, truth) -> float:
    """Fraction of selected coefficients (main and interaction together) that
    are not in the true support; 0 when nothing is selected.

    Both arguments are either :class:`Coefficients` or ``(mains, pairs)``.
    """
    sm, sp = _as_sets(selected)
    tm, tp = _as_sets(truth)
    total = len(sm) + len(sp)
    false = len(sm - tm) + len(sp - tp)
    return false / max(1, total)


def interaction_fdr_share(selected, truth) -> float:
    """False interaction selections divided by all selections (0 if none)."""
    sm, sp = _as_sets(selected)
    _, tp = _as_sets(truth)
    return len(sp - tp) / max(1, len(sm) + len(sp))


def predict(coef: Coefficients, data: DesignData) -> np.ndarray:
    """``intercept + X beta + X~ theta`` on ``data``'s stored columns."""
    return coef.intercept + predict_processed(data, coef)


def prediction_error(coef: Coefficients, data_test: DesignData, mode="mse") -> float:
    """Error of ``intercept + X beta + X~ theta`` against ``data_test.y``
    (plus its stored response offset)."""
    resid = (data_test.y + data_test.y_mean) - predict(coef, data_test)
    mse = float(np.mean(resid**2))
    if mode == "mse":
        return mse
    if mode == "rmse":
        return float(np.sqrt(mse))
    raise ValueError(f"unknown mode {mode!r}")


def audit_strong_hierarchy(coef: Coefficients, nonzero_threshold=1e-8) -> list:
    """Pairs with a nonzero interaction but a (near) zero main effect."""
    b = np.abs(coef.beta)
    bad = []
    for (i, j), v in sorted(coef.theta.items()):
        if abs(v) > nonzero_threshold and (b[i] <= nonzero_threshold or b[j] <= nonzero_threshold):
            bad.append((i, j))
    return bad
