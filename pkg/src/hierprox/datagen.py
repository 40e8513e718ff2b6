"""Synthetic interaction data with controlled signal-to-noise ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hierprox.problem import Coefficients, DesignData, predict_processed

SETTINGS = ("hierarchical", "anti_hierarchical", "main_only")
_ALIASES = {
    "hier": "hierarchical", "hierarchical": "hierarchical", "i": "hierarchical",
    "anti": "anti_hierarchical", "anti_hierarchical": "anti_hierarchical", "ii": "anti_hierarchical",
    "main": "main_only", "main_only": "main_only", "iii": "main_only",
}


def normalize_setting(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in _ALIASES:
        raise ValueError(f"unknown setting {name!r}; expected one of {SETTINGS}")
    return _ALIASES[key]


@dataclass
class TruthSpec:
    setting: str
    n: int
    p: int
    k_main: int
    seed: int = 0
    snr: float = 10.0

    def __post_init__(self):
        self.setting = normalize_setting(self.setting)
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not (0 <= self.k_main <= self.p):
            raise ValueError(f"k_main must lie in [0, p], got {self.k_main}")
        if not self.snr > 0:
            raise ValueError("snr must be positive (use math.inf for noiseless data)")
        eligible = self.eligible_pairs()
        if self.setting != "main_only" and eligible < self.k_main:
            raise ValueError(
                f"setting {self.setting} needs {self.k_main} interactions but only {eligible} pairs are eligible"
            )

    def eligible_pairs(self) -> int:
        if self.setting == "hierarchical":
            return math.comb(self.k_main, 2)
        if self.setting == "anti_hierarchical":
            return math.comb(self.p - self.k_main, 2)
        return 0


def _choose_pairs(rng, idx, k):
    idx = np.sort(np.asarray(idx))
    m = idx.size
    total = m * (m - 1) // 2
    picks = np.sort(rng.choice(total, size=k, replace=False))
    # decode row-major linear index into (a, b), a < b
    out = []
    for lin in picks:
        a = 0
        rem = int(lin)
        while rem >= m - 1 - a:
            rem -= m - 1 - a
            a += 1
        out.append((int(idx[a]), int(idx[a + 1 + rem])))
    return out


def generate(spec: TruthSpec) -> tuple[DesignData, Coefficients]:
    """Gaussian design, unit nonzero coefficients, noise scaled to ``snr``.

    Returns unprocessed data (``X`` and ``y`` exactly as drawn) and the true
    coefficients.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    main = np.sort(rng.choice(spec.p, size=spec.k_main, replace=False))
    beta = np.zeros(spec.p)
    beta[main] = 1.0
    if spec.setting == "hierarchical":
        pairs = _choose_pairs(rng, main, spec.k_main)
    elif spec.setting == "anti_hierarchical":
        rest = np.setdiff1d(np.arange(spec.p), main)
        pairs = _choose_pairs(rng, rest, spec.k_main)
    else:
        pairs = []
    truth = Coefficients(beta, {q: 1.0 for q in pairs})
    signal = predict_processed(DesignData(X, np.zeros(spec.n)), truth)
    if math.isinf(spec.snr):
        y = signal
    else:
        sigma = math.sqrt(float(np.var(signal)) / spec.snr)
        y = signal + sigma * rng.standard_normal(spec.n)
    return DesignData(X, y), truth
