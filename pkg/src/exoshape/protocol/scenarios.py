"""Closed-loop validation scenarios: step release, locked-output bandwidth
and the mismatched-estimate instability test.

The time-domain plant needs a viscous stand-in for hysteretic damping.
Scenarios match it at the critical magnitude crossover of the nominal
(shape, human) pair, which is where the phase margin is judged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from .._rng import substream
from ..estimator.features import FeaturePipeline, SensorFrame, featurize
from ..estimator.forest import ForestModel
from ..loop import CoupledLoop, Trajectory, make_actuator
from ..plant import ExoModel
from ..shaper import AmplifierShape, ShapeAdapter, ShaperConfig, feedback_law, robust_shape, synthesize
from ..stability import phase_margin
from .experiments import LOG_EVERY, SIM_DT, RunLog
from .subject import VirtualSubject, grip_from_lb

__all__ = [
    "ScenarioResult",
    "GRIP_LB",
    "ROBUST_RANGE",
    "envelope_ratio",
    "envelope_verdict",
    "matrix_cell",
    "stability_scenario",
    "bandwidth_scenario",
    "instability_scenario",
    "SCENARIOS",
]

GRIP_LB = {"low": 0.0, "high": 72.0}
ROBUST_RANGE = (5.0, 90.0)
UPDATE_EVERY = 10  # log samples per shape update (25 Hz at 250 Hz)
SPAN = 5.0


def envelope_ratio(t, dev, t_start: float, t_end: float, span: float = SPAN) -> float:
    """Peak ``|dev|`` over the last ``span`` seconds of ``[t_start, t_end)``
    divided by the peak over its first ``span`` seconds."""
    t = np.asarray(t)
    d = np.abs(np.asarray(dev))
    first = d[(t >= t_start) & (t < t_start + span)]
    last = d[(t >= t_end - span) & (t < t_end)]
    if first.size == 0 or last.size == 0:
        raise ValueError("interval shorter than the logged record")
    a, b = float(first.max()), float(last.max())
    if a == 0.0:
        return 0.0 if b == 0.0 else math.inf
    return b / a


def envelope_verdict(ratio: float) -> str:
    """``stable`` below 1, ``unstable`` above 2, otherwise ``indeterminate``."""
    if ratio < 1.0:
        return "stable"
    if ratio > 2.0:
        return "unstable"
    return "indeterminate"


@dataclass
class ScenarioResult:
    name: str
    log: RunLog
    verdict: str
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        parts = [f"{self.name}: {self.verdict}"]
        for k in sorted(self.metrics):
            v = self.metrics[k]
            parts.append(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(parts)


def _exo(subject: VirtualSubject, m_e: float) -> ExoModel:
    return ExoModel(m_e=m_e, m_he=m_e + subject.p.m_h)


def _omega_ref(shape: AmplifierShape, subject: VirtualSubject, k: float, m_e: float) -> float:
    rep = phase_margin(shape, subject.human(k), m_e)
    if rep.indeterminate:
        return math.sqrt(k / (m_e + subject.p.m_h))
    return rep.critical_crossover


def _log_from_traj(tr, kind, meta, channels=None, k_hat=None, shapes=None) -> RunLog:
    n = tr.t.size
    ch = channels if channels is not None else np.full((n, 5), np.nan)
    return RunLog(
        None, tr.t, tr.theta, tr.thetadot, tr.tau_c, tr.tau_s, tr.tau_e, ch, tr.k_h, np.full(n, np.nan),
        k_hat=k_hat, theta0=tr.theta0, shapes=shapes or [], meta={"kind": kind, "version": __version__, **meta},
    )


def matrix_cell(
    shape: AmplifierShape,
    k_h: float,
    subject: VirtualSubject | None = None,
    m_e: float = 0.1,
    duration: float = 30.0,
    preload: float = 1.0,
    diverge_at: float = 1.0,
):
    """Release one (shape, human) pair from a static preload and classify
    the 30 s envelope. Returns ``(MarginReport, ratio, verdict, trajectory)``."""
    subject = subject if subject is not None else VirtualSubject()
    rep = phase_margin(shape, subject.human(k_h), m_e)
    w = rep.critical_crossover if not rep.indeterminate else None
    loop = CoupledLoop(
        subject.human(k_h, omega_ref=w), _exo(subject, m_e),
        controller=feedback_law(shape, 1.0 / SIM_DT), diverge_at=diverge_at,
    )
    loop.settle(preload, shape.alpha_ss)
    tr = loop.run(int(round(duration / SIM_DT)), tau_e=0.0)
    if tr.diverged:
        ratio = math.inf
    else:
        ratio = envelope_ratio(tr.t, tr.deviation(), 0.0, duration)
    return rep, ratio, envelope_verdict(ratio), tr


class _OnlineEstimator:
    """Sensors, features, forest and shape adapter wired into the loop callback."""

    def __init__(self, subject, model: ForestModel, cfg: ShaperConfig, grip: float, rng, fs_ctrl: float):
        self.subject = subject
        self.model = model
        self.grip = grip
        self.rng = rng
        self.fs_ctrl = fs_ctrl
        self.pipe = FeaturePipeline()
        # 20 s relaxed hold; the first 2 s only warm the filters
        n = 20 * 250
        ch = subject.sensors(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), rng).channels
        rest = [SensorFrame(i / 250.0, 0.0, 0.0, c[2], c[3], c[4], c[0], c[1]) for i, c in enumerate(ch)]
        for fr in rest[:500]:
            self.pipe.condition(fr)
        self.baseline = self.pipe.calibrate(rest[500:])
        # one second of steady gripping before the test begins
        for _ in range(250):
            f = featurize(self._frame(0.0, 0.0, grip, 0.0), self.baseline, self.pipe)
        self.adapter = ShapeAdapter(cfg, k_init=None)
        self.events = [self.adapter.update(float(model.predict(f)), 0.0)]
        self.k_hat = []
        self.channels = []

    def _frame(self, t, theta, a_g, a_b):
        ch = self.subject.sensors([a_g], [a_b], [theta], [0.0], self.rng).channels[0]
        return SensorFrame(t, theta, 0.0, ch[2], ch[3], ch[4], ch[0], ch[1])

    @property
    def shape(self) -> AmplifierShape:
        return self.adapter.shape

    def __call__(self, j, loop):
        st = loop.state
        fr = self._frame(st.t, st.theta - loop.human.theta0, self.grip, 0.0)
        fr = SensorFrame(fr.t, st.theta, st.thetadot, fr.E1, fr.E2, fr.E3, fr.S1, fr.S2)
        f = featurize(fr, self.baseline, self.pipe)
        self.channels.append(fr)
        if j % UPDATE_EVERY == 0 and j > 0:
            ev = self.adapter.update(float(self.model.predict(f)), st.t)
            self.events.append(ev)
            loop.controller.set_sos(feedback_law(ev.shape, self.fs_ctrl).sos)
        self.k_hat.append(self.adapter.k_state)

    def channel_array(self) -> np.ndarray:
        return np.array([[f.S1, f.S2, f.E1, f.E2, f.E3] for f in self.channels])


def _controller_shape(controller, cfg, k_true):
    if controller == "adaptive":
        return synthesize(cfg, k_true)
    if controller == "robust":
        return robust_shape(cfg, *ROBUST_RANGE)
    raise ValueError(f"unknown controller {controller!r}; use 'adaptive' or 'robust'")


def stability_scenario(
    controller: str,
    grip: str,
    model: ForestModel | None = None,
    *,
    subject: VirtualSubject | None = None,
    cfg: ShaperConfig | None = None,
    m_e: float = 0.1,
    preload_nm: float = 2.0,
    preload_s: float = 10.0,
    post_s: float = 10.0,
    seed: int = 0,
) -> ScenarioResult:
    """Hold a constant spring preload, release it and watch the step response.

    The adaptive controller needs ``model``; it then runs the full sensor to
    forest to shape chain online. Without a model it uses the true stiffness.
    """
    subject = subject if subject is not None else VirtualSubject()
    cfg = cfg if cfg is not None else ShaperConfig(m_he=m_e + subject.p.m_h)
    if grip not in GRIP_LB:
        raise ValueError(f"grip must be one of {sorted(GRIP_LB)}")
    g = grip_from_lb(GRIP_LB[grip])
    k_true = float(subject.stiffness(g, 0.0))
    nominal = _controller_shape(controller, cfg, k_true)
    human = subject.human(k_true, omega_ref=_omega_ref(nominal, subject, k_true, m_e))
    online = None
    shape = nominal
    if controller == "adaptive" and model is not None:
        online = _OnlineEstimator(subject, model, cfg, g, substream(seed, "scenario-noise"), 1.0 / SIM_DT)
        shape = online.shape
    loop = CoupledLoop(human, _exo(subject, m_e), controller=feedback_law(shape, 1.0 / SIM_DT), diverge_at=1.0)
    loop.settle(preload_nm, shape.alpha_ss)
    n_pre, n_post = int(round(preload_s / SIM_DT)), int(round(post_s / SIM_DT))
    tau_e = np.concatenate([np.full(n_pre, preload_nm), np.zeros(n_post)])
    tr = loop.run(n_pre + n_post, tau_e=tau_e, callback=online)
    dev = tr.deviation()
    after = tr.t >= preload_s
    pre_dev = float(np.mean(dev[(tr.t >= preload_s - 1.0) & ~after])) if np.any(~after) else 0.0
    overshoot = float(max(0.0, -dev[after].min()) / abs(pre_dev)) if pre_dev != 0 and after.any() else 0.0
    if tr.diverged:
        ratio, verdict = math.inf, "divergent"
    else:
        ratio = envelope_ratio(tr.t, dev, preload_s, preload_s + post_s)
        verdict = "bounded" if ratio < 1.0 or np.max(np.abs(dev[after]), initial=0.0) == 0.0 else "divergent"
    meta = {"controller": controller, "grip": grip, "k_true": k_true, "preload_nm": preload_nm, "seed": seed}
    log = _log_from_traj(
        tr, "stability", meta,
        channels=online.channel_array() if online else None,
        k_hat=np.array(online.k_hat) if online else None,
        shapes=online.events if online else [],
    )
    metrics = {"overshoot": overshoot, "envelope_ratio": ratio, "k_true": k_true, "w_p1": shape.w_p1}
    if online:
        metrics["k_hat_final"] = float(online.k_hat[-1])
    return ScenarioResult(f"stability {controller} {grip}", log, verdict, metrics)


def rise_time(t, y, target: float, t0: float, level: float = 0.9) -> float:
    """First time after ``t0`` at which ``y`` reaches ``level * target``."""
    t, y = np.asarray(t), np.asarray(y)
    hit = np.flatnonzero((t >= t0) & (np.sign(target) * y >= level * abs(target)))
    return float(t[hit[0]] - t0) if hit.size else math.inf


def bandwidth_scenario(
    controller: str,
    grip: str = "low",
    model: ForestModel | None = None,
    *,
    subject: VirtualSubject | None = None,
    cfg: ShaperConfig | None = None,
    m_e: float = 0.1,
    torque_nm: float = 2.0,
    ramp_s: float = 0.05,
    onset_s: float = 0.5,
    duration: float = 20.0,
    actuator_bw_hz: float | None = 10.0,
    shape: AmplifierShape | None = None,
    seed: int = 0,
) -> ScenarioResult:
    """Locked output: the human presses with a smoothed torque step and the
    actuator answers through ``alpha(s) - 1``. Reports the 90% rise time of
    ``tau_s`` toward its steady value ``(alpha_ss - 1) tau_c``; the logged
    ``tau_e`` column carries the amplified target ``alpha_ss tau_c``."""
    subject = subject if subject is not None else VirtualSubject()
    cfg = cfg if cfg is not None else ShaperConfig(m_he=m_e + subject.p.m_h)
    if grip not in GRIP_LB:
        raise ValueError(f"grip must be one of {sorted(GRIP_LB)}")
    g = grip_from_lb(GRIP_LB[grip])
    k_true = float(subject.stiffness(g, 0.0))
    k_hat = k_true
    if shape is None:
        if controller == "adaptive" and model is not None:
            est = _OnlineEstimator(subject, model, cfg, g, substream(seed, "scenario-noise"), 1.0 / SIM_DT)
            shape, k_hat = est.shape, float(est.adapter.k_state)
        else:
            shape = _controller_shape(controller, cfg, k_true)
    fs = 1.0 / SIM_DT
    ctrl = feedback_law(shape, fs)
    act = make_actuator(actuator_bw_hz, fs)
    n = int(round(duration / SIM_DT))
    t = np.arange(n) * SIM_DT
    x = np.clip((t - onset_s) / ramp_s, 0.0, 1.0)
    tau_c = torque_nm * 0.5 * (1.0 - np.cos(math.pi * x))
    cmd = ctrl.filter(tau_c)
    tau_s = act.filter(cmd) if act is not None else cmd
    sl = slice(0, n, LOG_EVERY)
    target = (shape.alpha_ss - 1.0) * torque_nm
    rt = rise_time(t, tau_s, target, onset_s)
    zeros = np.zeros(t[sl].size)
    tr = Trajectory(t[sl], zeros, zeros, tau_s[sl], tau_c[sl], shape.alpha_ss * tau_c[sl],
                    np.full(zeros.size, k_true), zeros, clamped=np.zeros(zeros.size, dtype=bool))
    meta = {"controller": controller, "grip": grip, "k_true": k_true, "k_hat": k_hat, "torque_nm": torque_nm,
            "actuator_bw_hz": actuator_bw_hz, "seed": seed}
    log = _log_from_traj(tr, "bandwidth", meta)
    steady = float(np.mean(tau_s[t >= duration - 0.5]) / torque_nm)
    metrics = {"rise_time_s": rt, "steady_gain": steady, "k_hat": k_hat, "w_p1": shape.w_p1}
    verdict = "reached" if math.isfinite(rt) else "not-reached"
    return ScenarioResult(f"bandwidth {controller} {grip}", log, verdict, metrics)


def instability_scenario(
    dummy_k: float = 60.0,
    *,
    relaxed_k: float = 10.0,
    tensed_k: float = 90.0,
    phase_s: float = 10.0,
    clamp: float = 0.35,
    perturb: float = 0.02,
    subject: VirtualSubject | None = None,
    cfg: ShaperConfig | None = None,
    m_e: float = 0.1,
) -> ScenarioResult:
    """Shape fixed at ``dummy_k`` while the wearer is relaxed, then tensed.

    The estimator is bypassed. Position is clamped at the rope limit
    ``clamp`` around the equilibrium.
    """
    subject = subject if subject is not None else VirtualSubject()
    cfg = cfg if cfg is not None else ShaperConfig(m_he=m_e + subject.p.m_h)
    shape = synthesize(cfg, dummy_k)
    w = _omega_ref(shape, subject, relaxed_k, m_e)
    human = subject.human(relaxed_k, omega_ref=w)
    loop = CoupledLoop(human, _exo(subject, m_e), controller=feedback_law(shape, 1.0 / SIM_DT), clamp=clamp)
    loop.settle(0.0, shape.alpha_ss)
    loop.state = type(loop.state)(human.theta0 + perturb, 0.0, 0.0)
    n = int(round(2 * phase_s / SIM_DT))
    cmd = np.where(np.arange(n) * SIM_DT < phase_s, 0.0, 1.0)
    a = subject.activation(cmd, SIM_DT)
    k = relaxed_k + (tensed_k - relaxed_k) * a
    tr = loop.run(n, k_h=k)
    dev = tr.deviation()
    r1 = envelope_ratio(tr.t, dev, 0.0, phase_s)
    r2 = envelope_ratio(tr.t, dev, phase_s, 2 * phase_s)
    hit = tr.clamped[tr.t < phase_s]
    t_clamp = float(tr.t[np.flatnonzero(hit)[0]]) if hit.any() else math.inf
    unstable1 = envelope_verdict(r1) == "unstable" or hit.any()
    stable2 = envelope_verdict(r2) == "stable"
    verdict = ("divergent" if unstable1 else "bounded") + "-then-" + ("stable" if stable2 else "unstable")
    meta = {"dummy_k": dummy_k, "relaxed_k": relaxed_k, "tensed_k": tensed_k, "clamp": clamp}
    log = _log_from_traj(tr, "instability", meta)
    metrics = {"ratio_phase1": r1, "ratio_phase2": r2, "t_clamp_s": t_clamp, "clamped": bool(hit.any())}
    return ScenarioResult(f"instability dummy_k={dummy_k:g}", log, verdict, metrics)


SCENARIOS = ("stability", "bandwidth", "instability")
