"""Human and exoskeleton impedance models and the rigidly coupled 1-DOF plant.

Frequency-domain helpers use the complex (hysteretic) stiffness
``k + j c`` with ``c = 2 zeta k``. Time-domain simulation cannot realize a
frequency-independent loss, so the integrator substitutes an equivalent
viscous damper ``b_eq = c / omega_ref``.

Sign convention: ``tau_c`` is the torque the human applies to the
exoskeleton, ``m_e theta'' = tau_e + tau_c + tau_s``. The human side obeys
``m_h theta'' + b theta' + k (theta - theta0) = -tau_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ._csv import write_csv
from .lti import ParameterError

__all__ = [
    "HumanModel",
    "ExoModel",
    "PlantState",
    "hysteretic_c",
    "human_compliance",
    "exo_compliance",
    "coupled_step",
    "contact_torque",
    "rk4_step",
    "write_trajectory",
]

DEFAULT_M_E = 0.1
DEFAULT_M_H = 0.04
DEFAULT_ZETA_H = 0.13


def hysteretic_c(k_h: float, zeta_h: float) -> float:
    """Hysteretic damping ``c_h = 2 zeta_h k_h`` (Nm/rad)."""
    if not k_h > 0:
        raise ParameterError(f"k_h must be positive, got {k_h!r}")
    return 2.0 * zeta_h * k_h


@dataclass(frozen=True)
class HumanModel:
    """Elbow impedance of the human.

    ``omega_ref`` fixes the frequency at which the viscous stand-in matches
    the hysteretic loss; ``None`` means the coupled natural frequency
    ``sqrt(k_h / m_he)``.
    """

    k_h: float
    zeta_h: float = DEFAULT_ZETA_H
    m_h: float = DEFAULT_M_H
    theta0: float = 0.0
    omega_ref: float | None = None

    def __post_init__(self):
        if not self.k_h > 0:
            raise ParameterError("k_h must be positive")
        if self.zeta_h < 0 or self.m_h < 0:
            raise ParameterError("zeta_h and m_h must be nonnegative")
        if self.omega_ref is not None and not self.omega_ref > 0:
            raise ParameterError("omega_ref must be positive")

    @property
    def c_h(self) -> float:
        return hysteretic_c(self.k_h, self.zeta_h)

    @property
    def tau0(self) -> float:
        return self.k_h * self.theta0

    def b_eq(self, m_he: float) -> float:
        w = self.omega_ref if self.omega_ref is not None else math.sqrt(self.k_h / m_he)
        return self.c_h / w

    def with_stiffness(self, k_h: float) -> "HumanModel":
        return replace(self, k_h=k_h)


@dataclass(frozen=True)
class ExoModel:
    m_e: float = DEFAULT_M_E
    m_he: float = DEFAULT_M_E + DEFAULT_M_H

    def __post_init__(self):
        if not self.m_e > 0:
            raise ParameterError("m_e must be positive")
        if self.m_he < self.m_e:
            raise ParameterError("m_he must be at least m_e")

    @classmethod
    def coupled(cls, m_e: float, human: HumanModel) -> "ExoModel":
        return cls(m_e=m_e, m_he=m_e + human.m_h)


@dataclass(frozen=True)
class PlantState:
    theta: float = 0.0
    thetadot: float = 0.0
    t: float = 0.0

    @property
    def finite(self) -> bool:
        return math.isfinite(self.theta) and math.isfinite(self.thetadot)


def human_compliance(h: HumanModel, omega):
    """``1 / (-m_h w^2 + k_h + j c_h)`` in rad/Nm."""
    w = np.asarray(omega, dtype=float)
    return 1.0 / (-h.m_h * w * w + h.k_h + 1j * h.c_h)


def exo_compliance(e: ExoModel, omega):
    """``1 / (m_e (j w)^2)``, a negative real number."""
    w = np.asarray(omega, dtype=float)
    return -1.0 / (e.m_e * w * w) + 0j


def rk4_step(theta: float, thetadot: float, dt: float, accel: Callable[[float, float, float], float], t: float = 0.0):
    """One classical RK4 step of ``theta'' = accel(t, theta, thetadot)``."""
    k1x, k1v = thetadot, accel(t, theta, thetadot)
    h2 = 0.5 * dt
    k2x, k2v = thetadot + h2 * k1v, accel(t + h2, theta + h2 * k1x, thetadot + h2 * k1v)
    k3x, k3v = thetadot + h2 * k2v, accel(t + h2, theta + h2 * k2x, thetadot + h2 * k2v)
    k4x, k4v = thetadot + dt * k3v, accel(t + dt, theta + dt * k3x, thetadot + dt * k3v)
    theta_n = theta + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    thetadot_n = thetadot + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return theta_n, thetadot_n


def coupled_step(state: PlantState, tau_s: float, tau_e: float, h: HumanModel, e: ExoModel, dt: float) -> PlantState:
    """Advance ``m_he theta'' = tau_s + tau_e - b_eq theta' - k_h (theta - theta0)``
    by one RK4 step with the torques held constant."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    b = h.b_eq(e.m_he)
    k, th0, inv_m = h.k_h, h.theta0, 1.0 / e.m_he
    drive = tau_s + tau_e

    def accel(_t, x, v):
        return (drive - b * v - k * (x - th0)) * inv_m

    th, thd = rk4_step(state.theta, state.thetadot, dt, accel, state.t)
    return PlantState(th, thd, state.t + dt)


def contact_torque(state: PlantState, tau_s: float, tau_e: float, h: HumanModel, e: ExoModel) -> float:
    """Torque the human applies to the exoskeleton at ``state`` (what the cuff sensor reads)."""
    b = h.b_eq(e.m_he)
    r = -b * state.thetadot - h.k_h * (state.theta - h.theta0)
    acc = (tau_s + tau_e + r) / e.m_he
    return r - h.m_h * acc


def write_trajectory(path, t, theta, thetadot, tau_s, tau_c, tau_e) -> None:
    header = ["t_s", "theta_rad", "thetadot_rad_s", "tau_s_Nm", "tau_c_Nm", "tau_e_Nm"]
    write_csv(path, header, zip(t, theta, thetadot, tau_s, tau_c, tau_e))
