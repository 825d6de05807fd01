import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import pearsonr

from exoshape.estimator import FEATURE_NAMES, STRETCH_COLUMNS, ablate_stretch, evaluate, fit_forest
from exoshape.estimator.metrics import accuracy


def test_identical_series():
    y = np.linspace(5, 90, 50)
    rep = accuracy(y, y)
    assert rep.r == pytest.approx(1.0)
    assert rep.max_error == 0.0 and rep.error_variance == 0.0 and rep.n == 50


def test_constant_offset():
    y = np.linspace(5, 90, 50)
    rep = accuracy(y + 3.0, y)
    assert rep.r == pytest.approx(1.0)
    assert rep.max_error == pytest.approx(3.0)
    assert rep.error_variance == pytest.approx(0.0, abs=1e-20)


def test_constant_target_r_undefined():
    rep = accuracy(np.arange(5.0), np.full(5, 7.0))
    assert math.isnan(rep.r) and not rep.r_defined
    assert rep.max_error == 7.0


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.integers(3, 300))
def test_r_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=n)
    p = y + rng.normal(size=n)
    assert accuracy(p, y).r == pytest.approx(pearsonr(p, y).statistic, abs=1e-12)


def test_error_variance_is_population_variance():
    rng = np.random.default_rng(1)
    y, p = rng.normal(size=40), rng.normal(size=40)
    assert accuracy(p, y).error_variance == pytest.approx(np.var(p - y, ddof=0))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        accuracy([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_report_line():
    line = accuracy([1.0, 2.0, 3.5], [1.0, 2.0, 3.0]).line()
    assert line.startswith("R=") and "max_error=0.500" in line and line.endswith("n=3")


def _data(seed, n=900):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 7))
    y = 10 + 70 * X[:, 4] + 10 * X[:, 0] + rng.normal(0, 1, n)
    return X, y


def test_ablation_no_drop_identical():
    Xt, yt = _data(0)
    Xv, yv = _data(1, 300)
    full, red = ablate_stretch((Xt, yt), (Xv, yv), trees=5, drop=())
    assert full == red


def test_noise_stretch_control():
    # stretch columns are pure noise here, so dropping them costs nothing
    Xt, yt = _data(0)
    Xv, yv = _data(1, 300)
    full, red = ablate_stretch((Xt, yt), (Xv, yv), trees=10, seed=2)
    assert abs(full.r - red.r) < 0.01
    assert STRETCH_COLUMNS == (FEATURE_NAMES.index("S1"), FEATURE_NAMES.index("S2"))


def test_ablation_reuses_full_model():
    Xt, yt = _data(0)
    Xv, yv = _data(1, 300)
    m = fit_forest(Xt, yt, trees=5, seed=3)
    full, _ = ablate_stretch((Xt, yt), (Xv, yv), trees=5, seed=3, full_model=m)
    assert full == evaluate(m, Xv, yv)
