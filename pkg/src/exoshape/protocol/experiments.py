"""Training protocols run against the virtual subject.

Protocol I holds a constant equilibrium while the exoskeleton applies a
stepped bias plus a 1 Hz, 1.5 Nm sinusoid. Protocol II adds 0.5 Hz
voluntary motion, uses a 1.7 Hz, 2.5 Nm sinusoid and coarser, longer bias
steps. Each run starts with a 20 s relaxed hold that provides the sensor
baseline.

The reference stiffness comes from sliding-window regression on filtered
signals: low-pass for protocol I, band-pass 1.2-10 Hz for protocol II.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__
from .._rng import substream
from ..estimator.features import Baseline, _condition_block, featurize_block, write_dataset
from ..lti import butterworth_bandpass, discretize, second_order_lowpass
from ..loop import CoupledLoop
from ..plant import ExoModel
from ..shaper import write_shape_log
from ..sysid import SlidingEstimates, sliding_estimate, write_estimate_log
from .._csv import write_csv
from .subject import VirtualSubject, grip_from_lb

__all__ = [
    "ExperimentSpec",
    "RunLog",
    "Dataset",
    "protocol_I",
    "protocol_II",
    "experiment_I",
    "experiment_II",
    "run_experiment",
    "default_runs",
    "build_dataset",
    "TORQUE_LIMIT",
]

TORQUE_LIMIT = 15.0
FS = 250.0
SIM_DT = 1e-3
LOG_EVERY = 4
SYSID_WINDOW = 400
BIAS_I = tuple([0.5 * i for i in range(5)] + [0.5 * i for i in range(20)])
BIAS_II = (0.0, 2.0, 4.0, 6.0, 8.0)
GRIP_LB = (0.0,) + tuple(22.0 + 60.0 * i / 9 for i in range(10))


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    grip: float
    bias_levels: tuple
    dwell: float
    excitation_hz: float
    excitation_nm: float
    voluntary_hz: float = 0.0
    voluntary_rad: float = 0.0
    baseline_s: float = 20.0
    warmup_s: float = 2.0
    tau_noise: float = 0.02
    seed: int = 0
    run_index: int = 0

    def __post_init__(self):
        if self.protocol not in ("I", "II"):
            raise ValueError("protocol must be 'I' or 'II'")
        if not 0.0 <= self.grip <= 1.0:
            raise ValueError("grip must lie in [0, 1]")
        peak = max(abs(b) for b in self.bias_levels) + abs(self.excitation_nm)
        if peak > TORQUE_LIMIT:
            raise ValueError(f"schedule peak {peak:.3g} Nm exceeds the {TORQUE_LIMIT} Nm actuator limit")
        if self.warmup_s >= self.baseline_s or self.baseline_s - self.warmup_s < 1.0:
            raise ValueError("baseline must leave at least 1 s after warm-up")

    @property
    def duration(self) -> float:
        return self.baseline_s + self.dwell * len(self.bias_levels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bias_levels"] = list(self.bias_levels)
        return d


def protocol_I(grip: float, seed: int = 0, run_index: int = 0, **kw) -> ExperimentSpec:
    return ExperimentSpec("I", grip, BIAS_I, 3.0, 1.0, 1.5, seed=seed, run_index=run_index, **kw)


def protocol_II(grip: float, seed: int = 0, run_index: int = 0, voluntary_rad: float = 0.05, **kw) -> ExperimentSpec:
    return ExperimentSpec(
        "II", grip, BIAS_II, 15.0, 1.7, 2.5, voluntary_hz=0.5, voluntary_rad=voluntary_rad,
        seed=seed, run_index=run_index, **kw
    )


@dataclass
class RunLog:
    """250 Hz record of one run; every array shares ``t``."""

    spec: object
    t: np.ndarray
    theta: np.ndarray
    thetadot: np.ndarray
    tau_c: np.ndarray
    tau_s: np.ndarray
    tau_e: np.ndarray
    channels: np.ndarray
    k_true: np.ndarray
    k_ref: np.ndarray
    estimates: SlidingEstimates | None = None
    sysid_t: np.ndarray | None = None
    k_hat: np.ndarray | None = None
    theta0: np.ndarray | None = None
    shapes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    features: np.ndarray | None = None

    def __len__(self):
        return self.t.size

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        n = self.t.size
        k_hat = self.k_hat if self.k_hat is not None else np.full(n, np.nan)
        header = [
            "t_s", "theta_rad", "thetadot_rad_s", "S1", "S2", "E1", "E2", "E3",
            "tau_c_Nm", "tau_s_Nm", "tau_e_Nm", "k_true", "k_ref", "k_hat",
        ]
        rows = (
            (self.t[i], self.theta[i], self.thetadot[i], *self.channels[i], self.tau_c[i], self.tau_s[i],
             self.tau_e[i], self.k_true[i], self.k_ref[i], k_hat[i])
            for i in range(n)
        )
        write_csv(os.path.join(directory, "frames.csv"), header, rows)
        if self.estimates is not None:
            write_estimate_log(os.path.join(directory, "estimates.csv"), self.sysid_t, self.estimates)
        else:
            write_csv(os.path.join(directory, "estimates.csv"), ["t_s", "k_h", "b_h", "tau0", "residual_rms", "valid"], [])
        write_shape_log(os.path.join(directory, "shapes.csv"), self.shapes)
        write_meta(os.path.join(directory, "meta"), self.meta)


def write_meta(path, meta: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={meta[k]}\n")


def _schedule(spec: ExperimentSpec, dt: float):
    n_base = int(round(spec.baseline_s / dt))
    n_seg = int(round(spec.dwell / dt))
    n = n_base + n_seg * len(spec.bias_levels)
    t = np.arange(n) * dt
    bias = np.zeros(n)
    for i, b in enumerate(spec.bias_levels):
        bias[n_base + i * n_seg:n_base + (i + 1) * n_seg] = b
    active = t >= spec.baseline_s
    tt = t - spec.baseline_s
    exc = np.where(active, spec.excitation_nm * np.sin(2 * math.pi * spec.excitation_hz * tt), 0.0)
    grip = np.where(active, spec.grip, 0.0)
    if spec.voluntary_hz > 0:
        w = 2 * math.pi * spec.voluntary_hz
        theta0 = np.where(active, spec.voluntary_rad * np.sin(w * tt), 0.0)
        motion = np.where(active, spec.voluntary_rad * w * np.cos(w * tt), 0.0)
    else:
        theta0 = np.zeros(n)
        motion = np.zeros(n)
    return n, bias, exc, grip, theta0, motion


def sysid_inputs(spec: ExperimentSpec, theta, thetadot, tau_c, fs: float = FS):
    """Filtered regression inputs; the torque is flipped to act on the human."""
    if spec.protocol == "I":
        tf = second_order_lowpass(60.0, 0.707)
    else:
        tf = butterworth_bandpass(1.2, 10.0)
    return tuple(discretize(tf, fs).filter(np.asarray(x, dtype=float)) for x in (theta, thetadot, -np.asarray(tau_c)))


def run_experiment(
    spec: ExperimentSpec,
    subject: VirtualSubject | None = None,
    exo: ExoModel | None = None,
    noise: bool = True,
) -> RunLog:
    """Simulate one protocol run and derive its sensor, reference and feature
    records."""
    subject = subject if subject is not None else VirtualSubject()
    exo = exo if exo is not None else ExoModel(m_he=0.1 + subject.p.m_h)
    rng = substream(spec.seed, "subject-noise", spec.run_index) if noise else None
    n, bias, exc, grip, theta0, motion = _schedule(spec, SIM_DT)
    a_g = subject.activation(grip, SIM_DT)
    a_b = subject.activation(bias, SIM_DT)
    k = subject.stiffness_trace(a_g, a_b)
    loop = CoupledLoop(subject.human(float(k[0])), exo, dt=SIM_DT, log_every=LOG_EVERY)
    tr = loop.run(n, tau_cmd=bias + exc, k_h=k, theta0=theta0)
    idx = np.arange(0, n, LOG_EVERY)[: tr.t.size]
    tau_c = tr.tau_c + (rng.normal(0.0, spec.tau_noise, tr.t.size) if rng is not None else 0.0)
    sens = subject.sensors(a_g[idx], a_b[idx], tr.theta, motion[idx], rng)
    th_f, thd_f, tau_f = sysid_inputs(spec, tr.theta, tr.thetadot, tau_c)
    est = sliding_estimate(th_f, thd_f, tau_f, window=SYSID_WINDOW)
    k_ref = np.full(tr.t.size, np.nan)
    k_ref[est.index] = est.k_h
    cond = _condition_block(tr.theta, tr.thetadot, sens.channels, FS)
    rest = (tr.t >= spec.warmup_s) & (tr.t < spec.baseline_s)
    baseline = Baseline.from_conditioned(cond[rest, 2:], FS)
    feats = featurize_block(tr.theta, tr.thetadot, sens.channels, baseline, FS)
    meta = {
        "kind": f"experiment_{spec.protocol}",
        "version": __version__,
        "spec": spec.to_dict(),
        "subject": subject.p.to_dict(),
        "m_e": exo.m_e,
        "m_he": exo.m_he,
        "noise": noise,
        "baseline": list(baseline.values),
    }
    return RunLog(
        spec, tr.t, tr.theta, tr.thetadot, tau_c, tr.tau_s, tr.tau_e, sens.channels, k[idx], k_ref,
        estimates=est, sysid_t=tr.t[est.index], theta0=tr.theta0, meta=meta, features=feats,
    )


def experiment_I(subject: VirtualSubject | None, grip: float, seed: int = 0, run_index: int = 0, **kw) -> RunLog:
    return run_experiment(protocol_I(grip, seed, run_index), subject, **kw)


def experiment_II(subject: VirtualSubject | None, grip: float, seed: int = 0, run_index: int = 0, **kw) -> RunLog:
    return run_experiment(protocol_II(grip, seed, run_index), subject, **kw)


def default_runs(seed: int = 0, grips_lb=GRIP_LB, voluntary_rad: float = 0.05, tau_noise: float = 0.02) -> list[ExperimentSpec]:
    """Protocol I and II at every grip load: 22 runs for the default loads."""
    specs = []
    for lb in grips_lb:
        specs.append(protocol_I(grip_from_lb(lb), seed, len(specs), tau_noise=tau_noise))
    for lb in grips_lb:
        specs.append(protocol_II(grip_from_lb(lb), seed, len(specs), voluntary_rad=voluntary_rad, tau_noise=tau_noise))
    return specs


@dataclass
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    t_train: np.ndarray
    t_val: np.ndarray
    grip_train: np.ndarray
    grip_val: np.ndarray
    run_train: np.ndarray
    run_val: np.ndarray

    @property
    def train(self):
        return self.X_train, self.y_train

    @property
    def val(self):
        return self.X_val, self.y_val

    def save(self, directory) -> None:
        write_dataset(os.path.join(directory, "train.csv"), self.t_train, self.X_train, self.y_train)
        write_dataset(os.path.join(directory, "validation.csv"), self.t_val, self.X_val, self.y_val)


def run_samples(log: RunLog, stride: int = 5, window: int = SYSID_WINDOW):
    """Rows usable for training: after the baseline, once the regression
    window lies wholly past it, with a valid reference."""
    t0 = log.spec.baseline_s + window / FS
    start = int(np.searchsorted(log.t, t0 - 1e-9))
    sel = np.arange(start, log.t.size, stride)
    sel = sel[np.isfinite(log.k_ref[sel])]
    return sel


def build_dataset(runs, split_seed: int = 0, stride: int = 5, train_fraction: float = 2.0 / 3.0) -> Dataset:
    """Pool every run, shuffle with the ``split`` sub-stream and split 2:1."""
    runs = list(runs)
    if len(runs) < 2:
        raise ValueError("need at least two runs")
    X, y, t, g, r = [], [], [], [], []
    for i, log in enumerate(runs):
        sel = run_samples(log, stride)
        X.append(log.features[sel])
        y.append(log.k_ref[sel])
        t.append(log.t[sel])
        g.append(np.full(sel.size, log.spec.grip))
        r.append(np.full(sel.size, i))
    X, y, t, g, r = (np.concatenate(a) for a in (X, y, t, g, r))
    if y.size == 0:
        raise ValueError("no usable samples in the pooled runs")
    perm = substream(split_seed, "split").permutation(y.size)
    n_tr = int(round(train_fraction * y.size))
    a, b = perm[:n_tr], perm[n_tr:]
    return Dataset(X[a], y[a], X[b], y[b], t[a], t[b], g[a], g[b], r[a], r[b])
