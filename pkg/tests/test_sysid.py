import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exoshape._csv import read_csv
from exoshape._rng import substream
from exoshape.sysid import (
    K_FLOOR,
    RegressionWindow,
    sliding_estimate,
    window_regress,
    write_estimate_log,
)

FS = 250.0


def excitation(n=400, phase=0.0):
    t = np.arange(n) / FS
    th = 0.05 * np.sin(2 * math.pi * 1.7 * t + phase) + 0.02 * np.sin(2 * math.pi * 0.6 * t + 1.0)
    thd = 0.05 * 2 * math.pi * 1.7 * np.cos(2 * math.pi * 1.7 * t + phase) + 0.02 * 2 * math.pi * 0.6 * np.cos(
        2 * math.pi * 0.6 * t + 1.0
    )
    return th, thd


def model_torque(th, thd, k, b, tau0):
    return k * th + b * thd - tau0


def lstsq_oracle(th, thd, tau):
    # regression on [theta, thetadot, -1]
    A = np.column_stack([th, thd, -np.ones_like(th)])
    return np.linalg.lstsq(A, tau, rcond=None)[0]


class TestWindowRegress:
    def test_exact_recovery(self):
        th, thd = excitation()
        est = window_regress((th, thd, model_torque(th, thd, 60.0, 2.0, 5.0)))
        assert est.valid and not est.clamped
        for got, want in zip((est.k_h, est.b_h, est.tau0), (60.0, 2.0, 5.0)):
            assert abs(got - want) / want < 1e-6
        assert est.residual_rms < 1e-9

    def test_matches_lstsq(self):
        th, thd = excitation()
        tau = model_torque(th, thd, 35.0, 1.2, -3.0) + np.random.default_rng(3).normal(0, 0.1, th.size)
        est = window_regress((th, thd, tau))
        np.testing.assert_allclose((est.k_h, est.b_h, est.tau0), lstsq_oracle(th, thd, tau), rtol=1e-9)

    def test_identical_samples_invalid(self):
        w = RegressionWindow(10)
        for _ in range(10):
            w.push(0.1, 0.0, 1.0)
        est = window_regress(w)
        assert not est.valid
        assert math.isnan(est.k_h)

    def test_collinear_invalid(self):
        th = np.linspace(0, 1, 50)
        est = window_regress((th, 2 * th, 3 * th))
        assert not est.valid

    def test_negative_stiffness_clamped(self):
        th, thd = excitation()
        est = window_regress((th, thd, model_torque(th, thd, -4.0, 0.5, 0.0)))
        assert est.valid and est.clamped
        assert est.k_h == K_FLOOR

    def test_partial_window_rejected(self):
        w = RegressionWindow(5)
        w.push(0, 0, 0)
        with pytest.raises(ValueError):
            window_regress(w)

    def test_ring_buffer(self):
        w = RegressionWindow(3)
        for i in range(5):
            w.push(i, 2 * i, 3 * i)
        assert w.full and len(w) == 3
        th, thd, tau = w.arrays()
        np.testing.assert_array_equal(th, [2, 3, 4])

    def test_capacity_floor(self):
        with pytest.raises(ValueError):
            RegressionWindow(2)

    def test_noise_tolerance_monte_carlo(self):
        # 100 seeds, sigma 0.05 Nm: at least 95 estimates within 2 Nm/rad
        th, thd = excitation()
        clean = model_torque(th, thd, 60.0, 2.0, 5.0)
        ours, oracle = [], []
        for s in range(100):
            tau = clean + substream(s, "sysid-mc").normal(0.0, 0.05, th.size)
            ours.append(window_regress((th, thd, tau)).k_h)
            oracle.append(lstsq_oracle(th, thd, tau)[0])
        err = np.abs(np.array(ours) - 60.0)
        assert np.sum(err <= 2.0) >= 95
        np.testing.assert_allclose(ours, oracle, rtol=1e-9)

    @settings(max_examples=50)
    @given(st.floats(0.01, 100), st.floats(1, 200), st.floats(-5, 5), st.floats(-10, 10))
    def test_scale_equivariance(self, c, k, b, tau0):
        th, thd = excitation(200)
        tau = model_torque(th, thd, k, b, tau0)
        e1 = window_regress((th, thd, tau), k_floor=-np.inf)
        e2 = window_regress((th, thd, c * tau), k_floor=-np.inf)
        np.testing.assert_allclose((e2.k_h, e2.b_h, e2.tau0), (c * e1.k_h, c * e1.b_h, c * e1.tau0),
                                   rtol=1e-9, atol=1e-9 * c * (abs(k) + abs(b) + abs(tau0)))

    @settings(max_examples=50)
    @given(st.floats(-1, 1), st.floats(1, 200))
    def test_shift_property(self, delta, k):
        th, thd = excitation(200)
        tau = model_torque(th, thd, k, 1.0, 2.0) + np.sin(np.arange(200))
        e1 = window_regress((th, thd, tau))
        e2 = window_regress((th + delta, thd, tau))
        assert e2.k_h == pytest.approx(e1.k_h, rel=1e-9)
        assert e2.b_h == pytest.approx(e1.b_h, rel=1e-9, abs=1e-9)
        assert e2.tau0 == pytest.approx(e1.tau0 + e1.k_h * delta, abs=1e-9 * max(1.0, k))


class TestSliding:
    def test_stride_count(self):
        th, thd = excitation(1200)
        est = sliding_estimate(th, thd, model_torque(th, thd, 20, 1, 0), window=400, stride=400)
        assert len(est) == 3
        np.testing.assert_array_equal(est.index, [399, 799, 1199])

    def test_short_record(self):
        est = sliding_estimate(np.zeros(10), np.zeros(10), np.zeros(10), window=400)
        assert len(est) == 0

    def test_matches_window_regress(self):
        th, thd = excitation(700)
        tau = model_torque(th, thd, 30, 0.8, 1.0) + np.random.default_rng(0).normal(0, 0.05, 700)
        est = sliding_estimate(th, thd, tau, window=400, stride=37)
        for i, end in enumerate(est.index):
            sl = slice(end - 399, end + 1)
            ref = window_regress((th[sl], thd[sl], tau[sl]))
            assert est.k_h[i] == pytest.approx(ref.k_h, rel=1e-9)
            assert est.tau0[i] == pytest.approx(ref.tau0, rel=1e-9, abs=1e-9)

    def test_constant_stream_invalid(self):
        n = 900
        est = sliding_estimate(np.full(n, 0.2), np.zeros(n), np.full(n, 1.0), window=400)
        assert not est.valid.any()
        assert np.all(np.isnan(est.k_h))
        np.testing.assert_array_equal(est.staleness, np.arange(1, len(est) + 1))

    def test_carries_last_valid(self):
        th, thd = excitation(800)
        tau = model_torque(th, thd, 25, 1, 0)
        th[500:], thd[500:], tau[500:] = 0.0, 0.0, 0.0
        est = sliding_estimate(th, thd, tau, window=200, stride=50)
        bad = ~est.valid
        assert bad.any()
        first_bad = np.flatnonzero(bad)[0]
        assert est.k_h[first_bad] == est.k_h[first_bad - 1]
        assert est.staleness[first_bad] == 1

    def test_stiffness_switch_transition(self):
        n, sw = 2000, 1000
        th, thd = excitation(n)
        k = np.where(np.arange(n) < sw, 20.0, 60.0)
        est = sliding_estimate(th, thd, k * th + 0.5 * thd, window=400)
        kk = est.k_h
        i0 = np.searchsorted(est.index, sw - 1)
        i1 = np.searchsorted(est.index, sw - 1 + 400)
        assert kk[i0] == pytest.approx(20.0, rel=1e-6)
        assert kk[i1] == pytest.approx(60.0, rel=1e-6)
        # mixed windows lie between the two levels
        assert np.all((kk[i0:i1 + 1] >= 20 - 1e-6) & (kk[i0:i1 + 1] <= 60 + 1e-6))

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            sliding_estimate(np.zeros(5), np.zeros(5), np.zeros(5), window=3, stride=0)

    def test_log_columns(self, tmp_path):
        th, thd = excitation(500)
        est = sliding_estimate(th, thd, model_torque(th, thd, 20, 1, 0), window=400, stride=50)
        p = tmp_path / "est.csv"
        est.to_csv(p)
        header, rows = read_csv(p)
        assert header == ["t_s", "k_h", "b_h", "tau0", "residual_rms", "valid"]
        assert float(rows[0][0]) == pytest.approx(399 / FS)
        assert rows[0][5] == "1"
        write_estimate_log(p, est.index / FS, est)
        assert read_csv(p)[0] == header
