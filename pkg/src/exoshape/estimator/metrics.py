"""Accuracy figures for stiffness predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import FEATURE_NAMES, STRETCH_COLUMNS
from .forest import ForestModel, fit_forest

__all__ = ["AccuracyReport", "accuracy", "evaluate", "ablate_stretch"]


@dataclass(frozen=True)
class AccuracyReport:
    """Pearson ``r``, max absolute error, error variance and sample count.

    ``r`` is NaN (and ``r_defined`` False) when either series is constant.
    """

    r: float
    max_error: float
    error_variance: float
    n: int

    @property
    def r_defined(self) -> bool:
        return not math.isnan(self.r)

    def line(self) -> str:
        return f"R={self.r:.4f} max_error={self.max_error:.3f} error_variance={self.error_variance:.3f} n={self.n}"


def accuracy(pred, target) -> AccuracyReport:
    p = np.asarray(pred, dtype=float)
    y = np.asarray(target, dtype=float)
    if p.shape != y.shape or y.size == 0:
        raise ValueError("predictions and targets must be nonempty and equally shaped")
    err = p - y
    if np.ptp(y) == 0 or np.ptp(p) == 0:
        r = math.nan
    else:
        r = float(np.clip(np.corrcoef(p, y)[0, 1], -1.0, 1.0))
    return AccuracyReport(r, float(np.max(np.abs(err))), float(np.var(err)), int(y.size))


def evaluate(model: ForestModel, X_val, y_val) -> AccuracyReport:
    return accuracy(model.predict(X_val), y_val)


def ablate_stretch(train, val, *, trees=50, depth=10, min_leaf=5, seed=0, drop=STRETCH_COLUMNS, full_model=None):
    """Fit with all features and again without the stretch columns, using
    the same split and seed. Returns ``(full, reduced)`` reports.

    ``full_model`` reuses an already fitted all-feature forest.
    """
    (Xt, yt), (Xv, yv) = train, val
    Xt, Xv = np.asarray(Xt, dtype=float), np.asarray(Xv, dtype=float)
    keep = [j for j in range(Xt.shape[1]) if j not in set(drop)]
    names = [FEATURE_NAMES[j] for j in keep] if Xt.shape[1] == len(FEATURE_NAMES) else None
    full = full_model if full_model is not None else fit_forest(Xt, yt, trees, depth, min_leaf, seed)
    red = fit_forest(Xt[:, keep], yt, trees, depth, min_leaf, seed, feature_names=names)
    return evaluate(full, Xv, yv), evaluate(red, Xv[:, keep], yv)
