"""Synthetic stand-in for the human wearer.

Two latent activations drive everything: ``a_g`` (hand-grip co-contraction)
and ``a_b`` (resistance to the bias torque, in Nm). Both follow their
commands through a first-order lag. Elbow stiffness is affine in the
activations and clipped to the configured range::

    k = clip(k_base + k_grip a_g + k_bias a_b, k_min, k_max)

The sEMG channels are hardware envelopes (amplified, rectified, integrated)
linear in the activations, with extra bursts during voluntary motion. The
stretch channels follow co-contraction and joint angle. All noise is
Gaussian and drawn from a caller-supplied generator.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import lfilter

from ..plant import DEFAULT_M_H, DEFAULT_ZETA_H, HumanModel

__all__ = ["SubjectParams", "VirtualSubject", "SensorTrace", "GRIP_FULL_LB", "grip_from_lb"]

GRIP_FULL_LB = 82.0


def grip_from_lb(lb: float) -> float:
    """Gripper load mapped linearly onto ``[0, 1]``."""
    return min(max(lb / GRIP_FULL_LB, 0.0), 1.0)


@dataclass(frozen=True)
class SubjectParams:
    k_base: float = 5.0
    k_grip: float = 60.0
    k_bias: float = 3.0
    k_min: float = 5.0
    k_max: float = 95.0
    zeta_h: float = DEFAULT_ZETA_H
    m_h: float = DEFAULT_M_H
    tau_act: float = 0.1
    emg_offset: tuple = (0.10, 0.12, 0.08)
    emg_grip_gain: tuple = (1.0, 0.35, 0.25)
    emg_bias_gain: tuple = (0.02, 0.08, 0.05)
    emg_motion_gain: tuple = (0.0, 0.25, 0.2)
    emg_noise: float = 0.05
    stretch_offset: tuple = (0.5, 0.4)
    stretch_cc_gain: tuple = (0.6, 0.45)
    stretch_angle_gain: tuple = (0.1, -0.08)
    stretch_noise: float = 0.02

    def __post_init__(self):
        if not (0 < self.k_min <= self.k_base <= self.k_max):
            raise ValueError("need 0 < k_min <= k_base <= k_max")
        if self.tau_act <= 0 or self.emg_noise < 0 or self.stretch_noise < 0:
            raise ValueError("tau_act must be positive and noise levels nonnegative")
        for name in ("emg_offset", "emg_grip_gain", "emg_bias_gain", "emg_motion_gain"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} needs 3 entries")
        for name in ("stretch_offset", "stretch_cc_gain", "stretch_angle_gain"):
            if len(getattr(self, name)) != 2:
                raise ValueError(f"{name} needs 2 entries")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class SensorTrace:
    """Sensor channels in ``(S1, S2, E1, E2, E3)`` order, one row per sample."""

    channels: np.ndarray

    @property
    def stretch(self) -> np.ndarray:
        return self.channels[:, :2]

    @property
    def emg(self) -> np.ndarray:
        return self.channels[:, 2:]


class VirtualSubject:
    def __init__(self, params: SubjectParams | None = None):
        self.p = params if params is not None else SubjectParams()

    def stiffness(self, grip, bias):
        """Steady-state stiffness for grip ``g`` and bias torque (Nm)."""
        p = self.p
        k = p.k_base + p.k_grip * np.asarray(grip, dtype=float) + p.k_bias * np.asarray(bias, dtype=float)
        return np.clip(k, p.k_min, p.k_max)

    def activation(self, command, dt: float, a0: float = 0.0) -> np.ndarray:
        """First-order lag response of a piecewise-constant command, exact
        for a zero-order-hold input."""
        u = np.asarray(command, dtype=float)
        c = math.exp(-dt / self.p.tau_act)
        y, _ = lfilter([1.0 - c], [1.0, -c], u, zi=[c * a0])
        return y

    def stiffness_trace(self, a_g, a_b) -> np.ndarray:
        p = self.p
        return np.clip(p.k_base + p.k_grip * np.asarray(a_g) + p.k_bias * np.asarray(a_b), p.k_min, p.k_max)

    def co_contraction(self, k) -> np.ndarray:
        p = self.p
        return (np.asarray(k, dtype=float) - p.k_min) / (p.k_max - p.k_min)

    def sensors(self, a_g, a_b, theta, motion, rng: np.random.Generator | None = None) -> SensorTrace:
        """Noisy channel values. ``motion`` is the voluntary speed (rad/s)
        that produces sEMG bursts; ``rng=None`` gives the noiseless trace."""
        p = self.p
        a_g, a_b = np.asarray(a_g, dtype=float), np.asarray(a_b, dtype=float)
        theta, motion = np.asarray(theta, dtype=float), np.abs(np.asarray(motion, dtype=float))
        n = a_g.size
        out = np.empty((n, 5))
        cc = self.co_contraction(self.stiffness_trace(a_g, a_b))
        for j in range(2):
            out[:, j] = p.stretch_offset[j] + p.stretch_cc_gain[j] * cc + p.stretch_angle_gain[j] * theta
        for j in range(3):
            out[:, 2 + j] = (
                p.emg_offset[j] + p.emg_grip_gain[j] * a_g + p.emg_bias_gain[j] * a_b + p.emg_motion_gain[j] * motion
            )
        if rng is not None:
            out[:, :2] += rng.normal(0.0, p.stretch_noise, (n, 2))
            out[:, 2:] += rng.normal(0.0, p.emg_noise, (n, 3))
        return SensorTrace(out)

    def human(self, k_h: float, theta0: float = 0.0, omega_ref: float | None = None) -> HumanModel:
        return HumanModel(k_h=k_h, zeta_h=self.p.zeta_h, m_h=self.p.m_h, theta0=theta0, omega_ref=omega_ref)
