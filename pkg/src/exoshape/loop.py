"""Fixed-step closed-loop simulation of the coupled human-exoskeleton plant.

The integrator runs RK4 at ``dt`` (1 ms by default). Controller and actuator
are sampled once per step with zero-order hold: the contact torque is read at
the start of the step, under the torque applied during the previous step.
Everything is logged every ``log_every`` steps (250 Hz by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lti import DiscreteFilter, discretize, second_order_lowpass
from .plant import ExoModel, HumanModel, PlantState, write_trajectory

__all__ = ["Trajectory", "CoupledLoop", "make_actuator"]


def make_actuator(bandwidth_hz: float | None, fs: float, zeta: float = 0.707) -> DiscreteFilter | None:
    """Second-order torque-tracking lag, or ``None`` for an ideal source."""
    if bandwidth_hz is None:
        return None
    return discretize(second_order_lowpass(2 * math.pi * bandwidth_hz, zeta), fs)


@dataclass
class Trajectory:
    t: np.ndarray
    theta: np.ndarray
    thetadot: np.ndarray
    tau_s: np.ndarray
    tau_c: np.ndarray
    tau_e: np.ndarray
    k_h: np.ndarray
    theta0: np.ndarray
    diverged: bool = False
    clamped: np.ndarray = field(default=None)

    def __len__(self):
        return self.t.size

    def deviation(self) -> np.ndarray:
        return self.theta - self.theta0

    def to_csv(self, path) -> None:
        write_trajectory(path, self.t, self.theta, self.thetadot, self.tau_s, self.tau_c, self.tau_e)


def _series(value, n: int, default: float) -> np.ndarray:
    if value is None:
        return np.full(n, default)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.size < n:
        raise ValueError(f"input series has {arr.size} samples, need {n}")
    return arr[:n]


class CoupledLoop:
    """Owns the plant state, the torque feedback filter and the actuator.

    ``controller`` maps the measured contact torque to the actuator command
    (for amplification that is the ``alpha(s) - 1`` filter); ``None`` leaves
    the actuator to the open-loop ``tau_cmd`` schedule only.
    """

    def __init__(
        self,
        human: HumanModel,
        exo: ExoModel,
        *,
        controller: DiscreteFilter | None = None,
        actuator_bw_hz: float | None = None,
        dt: float = 1e-3,
        log_every: int = 4,
        clamp: float | None = None,
        diverge_at: float | None = None,
        state: PlantState | None = None,
    ):
        self.human = human
        self.exo = exo
        self.controller = controller
        self.dt = dt
        self.log_every = log_every
        self.actuator = make_actuator(actuator_bw_hz, 1.0 / dt)
        self.clamp = clamp
        self.diverge_at = diverge_at
        self.state = state if state is not None else PlantState(human.theta0, 0.0, 0.0)
        self.tau_applied = 0.0

    def measured_contact(self, k: float, theta0: float, tau_e: float) -> float:
        h, m_he = self.human, self.exo.m_he
        b = self._damping(k)
        r = -b * self.state.thetadot - k * (self.state.theta - theta0)
        return r - h.m_h * (self.tau_applied + tau_e + r) / m_he

    def _damping(self, k: float) -> float:
        h = self.human
        w = h.omega_ref if h.omega_ref is not None else math.sqrt(k / self.exo.m_he)
        return 2.0 * h.zeta_h * k / w

    def settle(self, tau_e: float, alpha_ss: float) -> None:
        """Start at the static equilibrium under a constant ``tau_e``.

        Requires a controller whose DC gain is ``alpha_ss - 1`` (or no
        controller with ``alpha_ss = 1``).
        """
        h = self.human
        dev = tau_e / (alpha_ss * h.k_h)
        tau_c = -h.k_h * dev
        self.state = PlantState(h.theta0 + dev, 0.0, self.state.t)
        if self.controller is not None:
            self.controller.settle(tau_c)
        self.tau_applied = (alpha_ss - 1.0) * tau_c
        if self.actuator is not None:
            self.actuator.settle(self.tau_applied)

    def run(
        self,
        n_steps: int,
        *,
        tau_e=None,
        tau_cmd=None,
        k_h=None,
        theta0=None,
        noise=None,
        callback: Optional[Callable[[int, "CoupledLoop"], None]] = None,
    ) -> Trajectory:
        """Integrate ``n_steps`` steps.

        Series arguments are either scalars or arrays with at least
        ``n_steps`` samples on the integrator grid. ``noise`` is added to the
        measured contact torque. ``callback(step, loop)`` fires at every
        logged sample, before the torques of that step are computed, and may
        swap controller coefficients.
        """
        h, m_he, dt = self.human, self.exo.m_he, self.dt
        tau_e = _series(tau_e, n_steps, 0.0)
        tau_cmd = _series(tau_cmd, n_steps, 0.0)
        k_arr = _series(k_h, n_steps, h.k_h)
        th0_arr = _series(theta0, n_steps, h.theta0)
        noise = _series(noise, n_steps, 0.0)

        n_log = (n_steps + self.log_every - 1) // self.log_every
        log = np.full((8, n_log), np.nan)
        clamped = np.zeros(n_log, dtype=bool)
        ctrl, act = self.controller, self.actuator
        theta, thetadot, t = self.state.theta, self.state.thetadot, self.state.t
        center = h.theta0
        zeta2 = 2.0 * h.zeta_h
        inv_m = 1.0 / m_he
        w_fixed = h.omega_ref
        diverged = False
        hit = False
        j = 0
        for i in range(n_steps):
            k = k_arr[i]
            th0 = th0_arr[i]
            te = tau_e[i]
            b = zeta2 * k / (w_fixed if w_fixed is not None else math.sqrt(k * inv_m))
            r = -b * thetadot - k * (theta - th0)
            tau_c = r - h.m_h * (self.tau_applied + te + r) * inv_m + noise[i]
            if i % self.log_every == 0:
                if callback is not None:
                    self.state = PlantState(theta, thetadot, t)
                    callback(j, self)
                    ctrl = self.controller
            cmd = tau_cmd[i]
            if ctrl is not None:
                cmd += ctrl.stream(tau_c)
            applied = act.stream(cmd) if act is not None else cmd
            self.tau_applied = applied
            if i % self.log_every == 0:
                log[:, j] = (t, theta, thetadot, applied, tau_c, te, k, th0)
                clamped[j] = hit
                j += 1
            # RK4 for theta'' = (drive - b theta' - k (theta - th0)) / m_he, inlined for speed
            drive = applied + te + k * th0
            bm, km, fm = b * inv_m, k * inv_m, drive * inv_m
            x1, v1 = theta, thetadot
            a1 = fm - bm * v1 - km * x1
            x2, v2 = x1 + 0.5 * dt * v1, v1 + 0.5 * dt * a1
            a2 = fm - bm * v2 - km * x2
            x3, v3 = x1 + 0.5 * dt * v2, v1 + 0.5 * dt * a2
            a3 = fm - bm * v3 - km * x3
            x4, v4 = x1 + dt * v3, v1 + dt * a3
            a4 = fm - bm * v4 - km * x4
            theta = x1 + dt / 6.0 * (v1 + 2 * v2 + 2 * v3 + v4)
            thetadot = v1 + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            t = t + dt
            hit = False
            if self.clamp is not None and abs(theta - center) > self.clamp:
                theta = center + math.copysign(self.clamp, theta - center)
                thetadot = 0.0
                hit = True
            if not (math.isfinite(theta) and math.isfinite(thetadot)):
                diverged = True
                break
            if self.diverge_at is not None and abs(theta - th0) > self.diverge_at:
                diverged = True
                break
        self.state = PlantState(theta, thetadot, t)
        log = log[:, :j]
        return Trajectory(*log, diverged=diverged, clamped=clamped[:j])
