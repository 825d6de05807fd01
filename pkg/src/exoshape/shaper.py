"""Amplification transfer function ``alpha(s)`` and its synthesis from a
stiffness estimate.

``alpha(s)`` is a ratio of two quadratic pairs over two quadratic pairs::

    (s^2 + 2 z0 wz1 s + wz1^2)(s^2 + 2 z1 wz2 s + wz2^2)
    ----------------------------------------------------
    (s^2 + 2 z0 wp1 s + wp1^2)(s^2 + 2 z0 wp2 s + wp2^2)

The torque feedback actually realized is ``tau_s = (alpha(s) - 1) tau_c``,
which is strictly proper.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ._csv import write_csv
from .lti import ContinuousTF, DiscreteFilter, ParameterError, discretize_cascade

__all__ = [
    "SynthesisError",
    "ShaperConfig",
    "AmplifierShape",
    "synthesize",
    "robust_shape",
    "feedback_law",
    "feedback_sections",
    "ShapeAdapter",
    "ShapeEvent",
    "adapt",
    "write_shape_log",
]

log = logging.getLogger(__name__)

OMEGA_Z2_DEFAULT = 2 * math.pi * 10.0


class SynthesisError(ValueError):
    """Raised when the requested shape violates the corner-frequency ordering."""


@dataclass(frozen=True)
class ShaperConfig:
    lambda1: float = 2.0
    lambda2: float = 2.0
    alpha_ss: float = 4.0
    omega_z2: float = OMEGA_Z2_DEFAULT
    zeta0: float = 0.2
    zeta1: float = 0.707
    m_he: float = 0.14

    def __post_init__(self):
        if self.lambda1 < 1 or self.lambda2 < 1:
            raise ParameterError("lambda1 and lambda2 must be >= 1")
        if self.alpha_ss < 1:
            raise ParameterError("alpha_ss must be >= 1")
        if not (self.omega_z2 > 0 and self.zeta0 > 0 and self.zeta1 > 0 and self.m_he > 0):
            raise ParameterError("omega_z2, zeta0, zeta1 and m_he must be positive")


def _quad(w: float, zeta: float) -> np.ndarray:
    return np.array([1.0, 2.0 * zeta * w, w * w])


@dataclass(frozen=True)
class AmplifierShape:
    w_p1: float
    w_z1: float
    w_p2: float
    w_z2: float
    zeta0: float = 0.2
    zeta1: float = 0.707

    @property
    def alpha_ss(self) -> float:
        return (self.w_z1 * self.w_z2) ** 2 / (self.w_p1 * self.w_p2) ** 2

    @property
    def in_order(self) -> bool:
        """True when ``w_p1 <= w_z1 <= w_p2 <= w_z2``."""
        return self.w_p1 <= self.w_z1 <= self.w_p2 <= self.w_z2

    @property
    def numerator(self) -> np.ndarray:
        return np.polymul(_quad(self.w_z1, self.zeta0), _quad(self.w_z2, self.zeta1))

    @property
    def denominator(self) -> np.ndarray:
        return np.polymul(_quad(self.w_p1, self.zeta0), _quad(self.w_p2, self.zeta0))

    @property
    def alpha(self) -> ContinuousTF:
        return ContinuousTF(self.numerator, self.denominator)

    @property
    def feedback_tf(self) -> ContinuousTF:
        """``alpha(s) - 1`` as one strictly proper TF."""
        return ContinuousTF(np.polysub(self.numerator, self.denominator), self.denominator)

    def alpha_at(self, omega) -> np.ndarray:
        s = 1j * np.asarray(omega, dtype=float)
        return np.polyval(self.numerator, s) / np.polyval(self.denominator, s)

    def alpha_phase(self, omega) -> np.ndarray:
        """Phase of ``alpha(j w)`` in radians, continuous from ``w -> 0``.

        Each quadratic factor contributes a phase in ``[0, pi)``, so summing
        factor phases gives the unwrapped phase without any grid dependence.
        """
        w = np.asarray(omega, dtype=float)

        def q(wn, z):
            return np.arctan2(2 * z * wn * w, wn * wn - w * w)

        return q(self.w_z1, self.zeta0) + q(self.w_z2, self.zeta1) - q(self.w_p1, self.zeta0) - q(self.w_p2, self.zeta0)


def _check_order(shape: AmplifierShape) -> AmplifierShape:
    pairs = [("w_z1", shape.w_z1, "w_p2", shape.w_p2), ("w_p2", shape.w_p2, "w_z2", shape.w_z2)]
    for na, a, nb, b in pairs:
        if a > b * (1 + 1e-12):
            raise SynthesisError(f"ordering violated: {na}={a:.4g} > {nb}={b:.4g} rad/s")
    if not shape.in_order:
        log.debug("w_p1=%.4g exceeds w_z1=%.4g; shape kept", shape.w_p1, shape.w_z1)
    return shape


def _shape(cfg: ShaperConfig, k_low: float, k_high: float) -> AmplifierShape:
    w_z1 = math.sqrt(k_low / cfg.m_he) / cfg.lambda1
    w_p2 = cfg.lambda2 * math.sqrt(k_high / cfg.m_he)
    w_p1 = w_z1 * cfg.omega_z2 / (math.sqrt(cfg.alpha_ss) * w_p2)
    return _check_order(AmplifierShape(w_p1, w_z1, w_p2, cfg.omega_z2, cfg.zeta0, cfg.zeta1))


def synthesize(cfg: ShaperConfig, k_hat: float) -> AmplifierShape:
    """Shape matched to the stiffness estimate ``k_hat`` (Nm/rad).

    ``w_he = sqrt(k_hat / m_he)``, ``w_z1 = w_he / lambda1``,
    ``w_p2 = lambda2 w_he`` and ``w_p1 = w_z1 w_z2 / (sqrt(alpha_ss) w_p2)``,
    which pins ``alpha(0) = alpha_ss``.
    """
    if not k_hat > 0:
        raise ParameterError(f"k_hat must be positive, got {k_hat!r}")
    return _shape(cfg, k_hat, k_hat)


def robust_shape(cfg: ShaperConfig, k_min: float, k_max: float) -> AmplifierShape:
    """Single fixed shape covering every stiffness in ``[k_min, k_max]``.

    The lowest stiffness sets ``w_z1`` and the highest sets ``w_p2``.
    """
    if not (0 < k_min <= k_max):
        raise ParameterError("need 0 < k_min <= k_max")
    return _shape(cfg, k_min, k_max)


def feedback_sections(shape: AmplifierShape) -> list[ContinuousTF]:
    """Split ``alpha - 1`` into two proper second-order sections.

    Section one always carries the ``w_p1`` poles and section two the
    ``w_p2`` poles, so a filter built from successive shapes keeps a
    consistent state layout.
    """
    rem = np.polysub(shape.numerator, shape.denominator)
    rem = rem[-4:] if rem.size > 4 else np.concatenate([np.zeros(4 - rem.size), rem])
    d1, d2 = _quad(shape.w_p1, shape.zeta0), _quad(shape.w_p2, shape.zeta0)
    if np.allclose(rem, 0.0, atol=1e-12 * max(1.0, np.abs(shape.denominator).max())):
        return [ContinuousTF([0.0], d1), ContinuousTF([0.0], d2)]
    c3 = rem[0]
    if abs(c3) < 1e-14 * np.abs(rem).max():
        # degree <= 2 remainder: all zeros go in section one
        return [ContinuousTF(rem[1:], d1), ContinuousTF([1.0], d2)]
    roots = np.roots(rem)
    real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots))].real
    r0 = real[np.argmax(np.abs(real))]
    quad, _ = np.polydiv(rem, [1.0, -r0])
    return [ContinuousTF(quad, d1), ContinuousTF([1.0, -r0], d2)]


def feedback_law(shape: AmplifierShape, fs: float) -> DiscreteFilter:
    """Streaming filter realizing ``tau_s = (alpha(s) - 1) tau_c`` at ``fs`` Hz."""
    tf = shape.feedback_tf
    if not tf.is_strictly_proper:
        raise SynthesisError("alpha(s) - 1 is not strictly proper; malformed shape")
    return discretize_cascade(feedback_sections(shape), fs)


@dataclass(frozen=True)
class ShapeEvent:
    t: float
    k_hat: float
    shape: AmplifierShape
    clamped: bool
    slew_limited: bool
    error: str | None = None


class ShapeAdapter:
    """Re-synthesizes the shape from a stream of stiffness estimates.

    Estimates are floor-clamped and slew-limited before synthesis. A failed
    synthesis keeps the previous shape and records the error on the event.
    """

    def __init__(
        self,
        cfg: ShaperConfig,
        *,
        update_hz: float = 25.0,
        slew_limit: float = 200.0,
        k_floor: float = 5.0,
        k_init: float | None = None,
    ):
        self.cfg = cfg
        self.update_hz = update_hz
        self.slew_limit = slew_limit
        self.k_floor = k_floor
        self.k_state = k_init
        self.shape: AmplifierShape | None = None

    def update(self, k_raw: float, t: float = 0.0) -> ShapeEvent:
        clamped = k_raw < self.k_floor or not math.isfinite(k_raw)
        k = self.k_floor if clamped else float(k_raw)
        slewed = False
        if self.k_state is not None:
            step = self.slew_limit / self.update_hz
            dk = k - self.k_state
            if abs(dk) > step:
                k = self.k_state + math.copysign(step, dk)
                slewed = True
        self.k_state = k
        err = None
        try:
            self.shape = synthesize(self.cfg, k)
        except SynthesisError as exc:
            err = str(exc)
            log.warning("shape synthesis failed at k=%.3g: %s; holding previous shape", k, exc)
            if self.shape is None:
                raise
        if clamped:
            log.debug("k_hat=%.3g clamped to floor %.3g", k_raw, self.k_floor)
        return ShapeEvent(t, k, self.shape, clamped, slewed, err)


def adapt(
    cfg: ShaperConfig,
    k_stream: Iterable[float],
    *,
    update_hz: float = 25.0,
    slew_limit: float = 200.0,
    k_floor: float = 5.0,
) -> Iterator[ShapeEvent]:
    """Yield one event per estimate in ``k_stream`` (taken at ``update_hz``)."""
    ad = ShapeAdapter(cfg, update_hz=update_hz, slew_limit=slew_limit, k_floor=k_floor)
    for i, k in enumerate(k_stream):
        yield ad.update(k, i / update_hz)


def write_shape_log(path, events: Iterable[ShapeEvent]) -> None:
    header = ["t_s", "k_hat", "w_p1", "w_z1", "w_p2", "w_z2", "clamped", "slew_limited"]
    rows = (
        (e.t, e.k_hat, e.shape.w_p1, e.shape.w_z1, e.shape.w_p2, e.shape.w_z2, e.clamped, e.slew_limited)
        for e in events
    )
    write_csv(path, header, rows)
