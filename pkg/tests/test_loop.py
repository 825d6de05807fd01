import math

import numpy as np
import pytest

from exoshape.loop import CoupledLoop, make_actuator
from exoshape.plant import ExoModel, HumanModel, PlantState, contact_torque, coupled_step
from exoshape.shaper import ShaperConfig, feedback_law, synthesize


def test_ideal_actuator_is_none():
    assert make_actuator(None, 1000.0) is None
    assert make_actuator(10.0, 1000.0).dc_gain() == pytest.approx(1.0)


def test_open_loop_matches_coupled_step():
    # the inlined integrator and the reference stepper agree sample for sample
    h, e = HumanModel(30, 0.13, theta0=0.05), ExoModel()
    loop = CoupledLoop(h, e, log_every=1, state=PlantState(0.1, 0.0, 0.0))
    tr = loop.run(500, tau_e=0.3)
    s = PlantState(0.1, 0.0, 0.0)
    ref = []
    for _ in range(500):
        ref.append(s.theta)
        s = coupled_step(s, 0.0, 0.3, h, e, 1e-3)
    np.testing.assert_allclose(tr.theta, ref, rtol=0, atol=1e-14)


def test_logged_contact_matches_formula():
    h, e = HumanModel(30, 0.13, m_h=0.04), ExoModel()
    loop = CoupledLoop(h, e, log_every=1, state=PlantState(0.1, 0.2, 0.0))
    tr = loop.run(1, tau_e=0.5)
    assert tr.tau_c[0] == pytest.approx(contact_torque(PlantState(0.1, 0.2), 0.0, 0.5, h, e))


def test_log_decimation():
    loop = CoupledLoop(HumanModel(20), ExoModel(), log_every=4)
    tr = loop.run(1000)
    assert len(tr) == 250
    assert tr.t[1] == pytest.approx(0.004)


def test_settle_is_equilibrium():
    shape = synthesize(ShaperConfig(), 40.0)
    h = HumanModel(40, omega_ref=30.0)
    loop = CoupledLoop(h, ExoModel(), controller=feedback_law(shape, 1000.0))
    loop.settle(1.0, shape.alpha_ss)
    tr = loop.run(2000, tau_e=1.0)
    dev = tr.deviation()
    assert dev[0] == pytest.approx(1.0 / (4 * 40))
    assert np.ptp(dev) < 1e-9


def test_divergence_stops_run():
    # negative damping stand-in: a wildly mismatched shape
    shape = synthesize(ShaperConfig(lambda1=1.05, lambda2=1.05), 90.0)
    h = HumanModel(90)
    loop = CoupledLoop(h, ExoModel(), controller=feedback_law(shape, 1000.0), diverge_at=1.0,
                       state=PlantState(0.01, 0.0, 0.0))
    tr = loop.run(60000)
    assert tr.diverged
    assert len(tr) < 15000


def test_clamp_limits_excursion():
    h = HumanModel(10)
    loop = CoupledLoop(h, ExoModel(), clamp=0.05)
    tr = loop.run(2000, tau_e=5.0)
    assert np.max(np.abs(tr.deviation())) <= 0.05 + 1e-12
    assert tr.clamped.any()


def test_series_too_short():
    loop = CoupledLoop(HumanModel(10), ExoModel())
    with pytest.raises(ValueError):
        loop.run(100, tau_e=np.zeros(50))


def test_callback_can_swap_controller():
    cfg = ShaperConfig()
    a, b = synthesize(cfg, 20.0), synthesize(cfg, 60.0)
    loop = CoupledLoop(HumanModel(20), ExoModel(), controller=feedback_law(a, 1000.0))
    seen = []

    def cb(j, lp):
        seen.append(j)
        if j == 10:
            lp.controller.set_sos(feedback_law(b, 1000.0).sos)

    loop.run(100, tau_e=0.1, callback=cb)
    assert seen == list(range(25))
    np.testing.assert_array_equal(loop.controller.sos, feedback_law(b, 1000.0).sos)


def test_run_is_reproducible():
    def go():
        shape = synthesize(ShaperConfig(), 30.0)
        loop = CoupledLoop(HumanModel(30, omega_ref=25.0), ExoModel(), controller=feedback_law(shape, 1000.0),
                           actuator_bw_hz=10.0)
        loop.settle(0.5, shape.alpha_ss)
        return loop.run(3000, tau_e=np.where(np.arange(3000) < 1000, 0.5, 0.0))

    a, b = go(), go()
    for name in ("theta", "thetadot", "tau_s", "tau_c"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert math.isfinite(a.theta[-1])
