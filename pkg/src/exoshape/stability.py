"""Coupled stability of the human in the amplified exoskeleton.

The loop is ``C_ea(s) / C_h(s)`` with the human-side compliance
``C_ea = alpha(s) / (m_e s^2)`` and the complex-stiffness human compliance
``C_h``. Stability is judged at every magnitude crossover
``|C_ea| = |C_h|`` by the human phase margin::

    dphi = phase(C_ea) - (phase(C_h) - 180 deg)

with ``phase(C_ea)`` taken continuously from low frequency, where the
double integrator sits at -180 deg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._csv import write_csv
from .plant import HumanModel, human_compliance
from .shaper import AmplifierShape

__all__ = [
    "MarginReport",
    "DESIGN_MARGIN_DEG",
    "default_grid",
    "human_side_compliance",
    "coupled_compliance",
    "find_crossovers",
    "phase_margin",
    "zero_inertia_margin",
    "rhp_indicator",
    "write_margin_csv",
]

POINTS_PER_DECADE = 400
DESIGN_MARGIN_DEG = 20.0


@dataclass(frozen=True)
class MarginReport:
    crossovers: tuple[float, ...]
    delta_phi: tuple[float, ...]
    threshold: float = 0.0
    diagnostic: str = ""

    @property
    def indeterminate(self) -> bool:
        return len(self.crossovers) == 0

    @property
    def min_margin(self) -> float:
        return min(self.delta_phi) if self.delta_phi else math.nan

    @property
    def critical_crossover(self) -> float:
        if not self.delta_phi:
            return math.nan
        return self.crossovers[int(np.argmin(self.delta_phi))]

    @property
    def stable(self) -> bool | None:
        if self.indeterminate:
            return None
        return self.min_margin > self.threshold


def default_grid(shape: AmplifierShape, points_per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    lo = 0.01 * min(shape.w_z1, shape.w_p1)
    hi = 10.0 * shape.w_z2
    n = int(math.ceil(math.log10(hi / lo) * points_per_decade)) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


def human_side_compliance(shape: AmplifierShape, m_e: float, omega):
    """``alpha(j w) / (m_e (j w)^2)``."""
    w = np.asarray(omega, dtype=float)
    return shape.alpha_at(w) / (-m_e * w * w)


def coupled_compliance(shape: AmplifierShape, human: HumanModel, m_e: float, omega):
    """Harmonic sum ``(1/C_h + 1/C_ea)^-1``; exact cancellation gives ``inf``."""
    w = np.asarray(omega, dtype=float)
    stiff = -human.m_h * w * w + human.k_h + 1j * human.c_h
    inv_ea = -m_e * w * w / shape.alpha_at(w)
    tot = stiff + inv_ea
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(tot == 0, complex(np.inf, np.inf), 1.0 / np.where(tot == 0, 1.0, tot))
    return out if out.ndim else complex(out)


def _log_gap(shape, human, m_e, w):
    # log|C_ea| - log|C_h|; sign changes mark crossovers
    w = np.asarray(w, dtype=float)
    ea = np.abs(shape.alpha_at(w)) / (m_e * w * w)
    h = np.abs(human_compliance(human, w))
    with np.errstate(divide="ignore"):
        return np.log(ea) - np.log(h)


def find_crossovers(
    shape: AmplifierShape,
    human: HumanModel,
    m_e: float,
    grid: Sequence[float] | None = None,
    rtol: float = 1e-4,
) -> list[float]:
    """All frequencies where ``|C_ea| = |C_h|``, bisected to ``rtol``."""
    w = default_grid(shape) if grid is None else np.asarray(grid, dtype=float)
    g = _log_gap(shape, human, m_e, w)
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    exact = np.flatnonzero(g == 0)
    out = [float(w[i]) for i in exact]
    for i in idx:
        lo, hi = math.log(w[i]), math.log(w[i + 1])
        glo = g[i]
        while hi - lo > rtol * 0.5:
            mid = 0.5 * (lo + hi)
            gm = _log_gap(shape, human, m_e, [math.exp(mid)])[0]
            if gm == 0:
                lo = hi = mid
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        out.append(math.exp(0.5 * (lo + hi)))
    return sorted(out)


def _delta_phi_deg(shape: AmplifierShape, human: HumanModel, w: float) -> float:
    phi_ea = shape.alpha_phase(w) - math.pi
    stiff = -human.m_h * w * w + human.k_h + 1j * human.c_h
    phi_h = -math.atan2(stiff.imag, stiff.real)
    return math.degrees(phi_ea - (phi_h - math.pi))


def phase_margin(
    shape: AmplifierShape,
    human: HumanModel,
    m_e: float,
    threshold: float = 0.0,
    grid: Sequence[float] | None = None,
) -> MarginReport:
    """Human phase margin at every magnitude crossover.

    The report is stable only if every crossover clears ``threshold``
    degrees; without any crossover it is flagged indeterminate.
    """
    cs = find_crossovers(shape, human, m_e, grid)
    if not cs:
        return MarginReport((), (), threshold, "magnitudes never intersect on the grid")
    dphi = tuple(_delta_phi_deg(shape, human, w) for w in cs)
    return MarginReport(tuple(cs), dphi, threshold)


def zero_inertia_margin(
    shape: AmplifierShape, k_h: float, zeta_h: float, m_e: float, threshold: float = 0.0
) -> MarginReport:
    """Phase margin for a massless human, the conservative bound."""
    return phase_margin(shape, HumanModel(k_h=k_h, zeta_h=zeta_h, m_h=0.0), m_e, threshold)


def rhp_indicator(
    shape: AmplifierShape,
    human: HumanModel,
    m_e: float,
    grid: Sequence[float] | None = None,
) -> bool | None:
    """Rising-phase signature at the coupled-compliance resonance.

    A lightly damped pole pair in the left half plane drops the phase of the
    coupled compliance by 180 deg across its peak; a right-half-plane pair
    raises it. Returns ``None`` when no interior peak exists.
    """
    w = default_grid(shape) if grid is None else np.asarray(grid, dtype=float)
    c = coupled_compliance(shape, human, m_e, w)
    mag = np.abs(c)
    # resonance peak of |C| relative to the rigid-body 1/w^2 trend
    shaped = mag * w * w
    interior = (shaped[1:-1] > shaped[:-2]) & (shaped[1:-1] >= shaped[2:])
    peaks = np.flatnonzero(interior) + 1
    if peaks.size == 0:
        return None
    i = int(peaks[np.argmax(shaped[peaks])])
    ph = np.unwrap(np.angle(c))
    lo, hi = max(i - 2, 0), min(i + 2, w.size - 1)
    slope = (ph[hi] - ph[lo]) / (math.log(w[hi]) - math.log(w[lo]))
    return bool(slope > 0)


def write_margin_csv(path, rows) -> None:
    """Rows of ``(k_h, lambda1, lambda2, omega_c, delta_phi_deg, stable)``."""
    header = ["k_h", "lambda1", "lambda2", "omega_c", "delta_phi_deg", "stable"]
    write_csv(path, header, rows)
