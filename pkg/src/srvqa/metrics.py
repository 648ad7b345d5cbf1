"""Correlation metrics between predicted and subjective scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


class MetricError(ValueError):
    pass


@dataclass
class EvalReport:
    srcc: float
    plcc: float
    krcc: float
    rmse: float
    n: int
    degenerate: bool = False  # zero-variance input: correlations forced to 0

    def to_dict(self) -> dict:
        return {
            "srcc": self.srcc,
            "plcc": self.plcc,
            "krcc": self.krcc,
            "rmse": self.rmse,
            "n": self.n,
            "degenerate": self.degenerate,
        }


def _check(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("inputs must be equal-length 1-D vectors")
    if x.size < 2:
        raise MetricError("need at least 2 samples")
    return x, y


def _degenerate(x, y) -> bool:
    return bool(np.ptp(x) == 0.0 or np.ptp(y) == 0.0)


def srcc(x, y) -> float:
    """Spearman rank correlation, average ranks for ties; 0 if degenerate."""
    x, y = _check(x, y)
    if _degenerate(x, y):
        return 0.0
    return float(stats.spearmanr(x, y).statistic)


def _logistic_remap(x, y):
    """4-parameter logistic fit of x onto y, used optionally before PLCC."""
    from scipy.optimize import curve_fit

    def f(v, b1, b2, b3, b4):
        return b2 + (b1 - b2) / (1.0 + np.exp(-(v - b3) / abs(b4)))

    p0 = [y.max(), y.min(), x.mean(), x.std() or 1.0]
    try:
        popt, _ = curve_fit(f, x, y, p0=p0, maxfev=20000)
        return f(x, *popt)
    except RuntimeError:
        return x


def plcc(x, y, logistic: bool = False) -> float:
    """Pearson correlation; raw by default, optional 4-param logistic remap."""
    x, y = _check(x, y)
    if _degenerate(x, y):
        return 0.0
    if logistic:
        x = _logistic_remap(x, y)
        if np.ptp(x) == 0.0:
            return 0.0
    return float(stats.pearsonr(x, y).statistic)


def krcc(x, y) -> float:
    """Kendall tau-b (tie-adjusted)."""
    x, y = _check(x, y)
    if _degenerate(x, y):
        return 0.0
    return float(stats.kendalltau(x, y).statistic)


def rmse(x, y) -> float:
    x, y = _check(x, y)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def evaluate_pairs(pred, target) -> EvalReport:
    pred, target = _check(pred, target)
    return EvalReport(
        srcc=srcc(pred, target),
        plcc=plcc(pred, target),
        krcc=krcc(pred, target),
        rmse=rmse(pred, target),
        n=pred.size,
        degenerate=_degenerate(pred, target),
    )
