"""Continuous transfer functions, filter design, Tustin discretization and
streaming biquad cascades.

Polynomials are stored in descending powers of ``s`` (numpy ``polyval``
convention). Every filter used by the estimator and the amplification
controller is built from the pieces in this module.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from ._csv import write_csv

__all__ = [
    "ParameterError",
    "ImproperTransferError",
    "ContinuousTF",
    "DiscreteFilter",
    "FrequencyResponse",
    "second_order_lowpass",
    "butterworth_bandpass",
    "discretize",
    "discretize_cascade",
    "freq_response",
]


class ParameterError(ValueError):
    """Raised for out-of-range design parameters."""


class ImproperTransferError(ValueError):
    """Raised when a streaming realization of an improper TF is requested."""


def _as_poly(coeffs) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ParameterError("coefficient array must be a nonempty 1-D sequence")
    nz = np.flatnonzero(arr)
    if nz.size == 0:
        return np.zeros(1)
    return arr[nz[0]:].copy()


@dataclass(frozen=True, eq=False)
class ContinuousTF:
    """Rational transfer function ``num(s) / den(s)``.

    Improper objects (numerator degree up to ``den + 2``) are allowed so that
    compliances such as ``alpha(s) / (m s^2)`` inverted or multiplied can be
    evaluated on a frequency grid. Only proper ones can be discretized.
    """

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _as_poly(self.num)
        den = _as_poly(self.den)
        if den[0] == 0.0:
            raise ParameterError("denominator must have a nonzero leading coefficient")
        if num.size - 1 > den.size - 1 + 2:
            raise ParameterError("numerator degree exceeds denominator degree + 2")
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def constant(cls, gain: float) -> "ContinuousTF":
        return cls([gain], [1.0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.num)

    @property
    def num_degree(self) -> int:
        return 0 if self.is_zero else self.num.size - 1

    @property
    def den_degree(self) -> int:
        return self.den.size - 1

    @property
    def is_proper(self) -> bool:
        return self.num_degree <= self.den_degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.is_zero or self.num_degree < self.den_degree

    @property
    def dc_gain(self) -> float:
        return float(self.num[-1] / self.den[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def _coerce(self, other) -> "ContinuousTF":
        if isinstance(other, ContinuousTF):
            return other
        return ContinuousTF.constant(float(other))

    def __mul__(self, other):
        other = self._coerce(other)
        return ContinuousTF(np.polymul(self.num, other.num), np.polymul(self.den, other.den))

    __rmul__ = __mul__

    def __add__(self, other):
        other = self._coerce(other)
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return ContinuousTF(num, np.polymul(self.den, other.den))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * self._coerce(other)

    def __neg__(self):
        return ContinuousTF(-self.num, self.den)

    def __repr__(self):
        return f"ContinuousTF(num={self.num.tolist()}, den={self.den.tolist()})"


def second_order_lowpass(omega_c: float, zeta: float) -> ContinuousTF:
    """``wc^2 / (s^2 + 2 zeta wc s + wc^2)`` with unit DC gain."""
    if not omega_c > 0 or not zeta > 0:
        raise ParameterError(f"need omega_c > 0 and zeta > 0, got {omega_c!r}, {zeta!r}")
    wc2 = omega_c * omega_c
    return ContinuousTF([wc2], [1.0, 2.0 * zeta * omega_c, wc2])


def butterworth_bandpass(f_lo: float, f_hi: float) -> ContinuousTF:
    """Second-order Butterworth band-pass (fourth-order rational TF).

    The low-pass prototype ``1 / (p^2 + sqrt(2) p + 1)`` is mapped with
    ``p = (s^2 + w0^2) / (B s)``, so both cutoffs (Hz) are -3 dB points of
    the composed filter and the gain at the geometric centre is one.
    """
    if not (0 < f_lo < f_hi):
        raise ParameterError(f"need 0 < f_lo < f_hi, got {f_lo!r}, {f_hi!r}")
    w_lo, w_hi = 2 * math.pi * f_lo, 2 * math.pi * f_hi
    bw = w_hi - w_lo
    w0sq = w_lo * w_hi
    q = np.array([1.0, 0.0, w0sq])  # s^2 + w0^2
    den = np.polyadd(
        np.polyadd(np.polymul(q, q), math.sqrt(2.0) * bw * np.polymul(q, [1.0, 0.0])),
        [bw * bw, 0.0, 0.0],
    )
    return ContinuousTF([bw * bw, 0.0, 0.0], den)


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    omega: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 1:
            raise ParameterError("frequency grid must be 1-D")
        if w.size and (np.any(w <= 0) or np.any(np.diff(w) <= 0)):
            raise ParameterError("frequency grid must be positive and strictly increasing")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "response", np.asarray(self.response, dtype=complex))

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.response)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.response)

    @property
    def magnitude_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.response))

    @property
    def phase_deg(self) -> np.ndarray:
        """Phase in degrees, unwrapped along the grid."""
        if self.response.size == 0:
            return np.zeros(0)
        return np.degrees(np.unwrap(np.angle(self.response)))

    def to_csv(self, path) -> None:
        header = ["omega_rad_s", "re", "im", "mag_db", "phase_deg"]
        rows = zip(self.omega, self.response.real, self.response.imag, self.magnitude_db, self.phase_deg)
        write_csv(path, header, rows)


def freq_response(tf: ContinuousTF, grid: Iterable[float]) -> FrequencyResponse:
    """Exact evaluation of ``tf(j w)`` on ``grid`` (rad/s).

    Grid points that land on an imaginary-axis pole come back as complex
    infinities and trigger a ``RuntimeWarning``.
    """
    w = np.asarray(list(grid) if not isinstance(grid, np.ndarray) else grid, dtype=float)
    fr = FrequencyResponse(w, np.zeros(w.shape, dtype=complex))
    s = 1j * w
    num = np.polyval(tf.num, s)
    den = np.polyval(tf.den, s)
    bad = den == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = num / np.where(bad, 1.0, den)
    if np.any(bad):
        vals = vals.astype(complex)
        vals[bad] = complex(np.inf, np.inf)
        warnings.warn(f"{int(bad.sum())} grid point(s) lie on an imaginary-axis pole", RuntimeWarning)
    return FrequencyResponse(w, vals)


@dataclass(eq=False)
class DiscreteFilter:
    """Cascade of second-order sections in transposed direct form II.

    ``sos`` has one row ``[b0, b1, b2, 1, a1, a2]`` per section. State is
    two numbers per section and starts at zero.
    """

    sos: np.ndarray
    fs: float
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        sos = np.atleast_2d(np.asarray(self.sos, dtype=float)).copy()
        if sos.shape[1] != 6:
            raise ParameterError("sos rows must have 6 coefficients")
        if np.any(sos[:, 3] != 1.0):
            sos = sos / sos[:, 3:4]
        self.sos = sos
        if self.state is None:
            self.state = np.zeros((sos.shape[0], 2))
        else:
            self.state = np.asarray(self.state, dtype=float).reshape(sos.shape[0], 2).copy()
        self._load()

    def _load(self):
        self._rows = [tuple(float(v) for v in row) for row in self.sos]

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    def reset(self) -> None:
        self.state[:] = 0.0

    def copy(self) -> "DiscreteFilter":
        return DiscreteFilter(self.sos.copy(), self.fs, self.state.copy())

    def set_sos(self, sos) -> None:
        """Swap coefficients in place; the section states are kept."""
        sos = np.atleast_2d(np.asarray(sos, dtype=float))
        if sos.shape != self.sos.shape:
            raise ParameterError("hot-swapped coefficients must keep the section count")
        self.sos = sos / sos[:, 3:4]
        self._load()

    def stream(self, x: float) -> float:
        """Filter one sample."""
        st = self.state
        y = float(x)
        for i, (b0, b1, b2, _, a1, a2) in enumerate(self._rows):
            s0, s1 = st[i, 0], st[i, 1]
            out = b0 * y + s0
            st[i, 0] = b1 * y - a1 * out + s1
            st[i, 1] = b2 * y - a2 * out
            y = out
        return y

    __call__ = stream

    def filter(self, x) -> np.ndarray:
        """Filter a block of samples, continuing from (and updating) the state."""
        x = np.asarray(x, dtype=float)
        y, zf = signal.sosfilt(self.sos, x, zi=self.state)
        self.state = np.array(zf)
        return y

    def settle(self, x: float) -> None:
        """Put every section in the steady state reached under constant input ``x``."""
        u = float(x)
        for i, (b0, b1, b2, _, a1, a2) in enumerate(self._rows):
            g = (b0 + b1 + b2) / (1.0 + a1 + a2)
            y = g * u
            s1 = b2 * u - a2 * y
            s0 = b1 * u - a1 * y + s1
            self.state[i] = (s0, s1)
            u = y

    def dc_gain(self) -> float:
        s = self.sos
        return float(np.prod(s[:, :3].sum(axis=1) / s[:, 3:].sum(axis=1)))

    def response(self, omega) -> np.ndarray:
        """Complex response at ``omega`` (rad/s) on the unit circle."""
        z = np.exp(1j * np.asarray(omega, dtype=float) / self.fs)
        h = np.ones_like(z)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h = h * (b0 * z**2 + b1 * z + b2) / (a0 * z**2 + a1 * z + a2)
        return h


def _tustin_fs(fs: float, prewarp: float | None) -> float:
    if prewarp is None:
        return fs
    if not 0 < prewarp < math.pi * fs:
        raise ParameterError("prewarp frequency must lie in (0, pi*fs)")
    return prewarp / (2.0 * math.tan(prewarp / (2.0 * fs)))


def _bilinear_section(tf: ContinuousTF, fs_eff: float) -> np.ndarray:
    # one proper TF of degree <= 2 -> one sos row
    num = np.concatenate([np.zeros(3 - tf.num.size), tf.num]) if not tf.is_zero else np.zeros(3)
    den = np.concatenate([np.zeros(3 - tf.den.size), tf.den])
    c = 2.0 * fs_eff
    # substitute s = c (z - 1)/(z + 1), multiply through by (z + 1)^2
    basis = (np.array([c * c, -2 * c * c, c * c]), np.array([c, 0.0, -c]), np.array([1.0, 2.0, 1.0]))
    b = num[0] * basis[0] + num[1] * basis[1] + num[2] * basis[2]
    a = den[0] * basis[0] + den[1] * basis[1] + den[2] * basis[2]
    return np.concatenate([b, a]) / a[0]


def discretize_cascade(sections: Sequence[ContinuousTF], fs: float, prewarp: float | None = None) -> DiscreteFilter:
    """Tustin-discretize each proper section (degree <= 2) separately.

    Keeps a fixed section-to-row mapping, which is what coefficient
    hot-swapping relies on.
    """
    if not fs > 0:
        raise ParameterError("fs must be positive")
    fs_eff = _tustin_fs(fs, prewarp)
    rows = []
    for sec in sections:
        if not sec.is_proper:
            raise ImproperTransferError("cascade section is improper")
        if sec.den_degree > 2:
            raise ParameterError("cascade sections must have degree <= 2")
        rows.append(_bilinear_section(sec, fs_eff))
    return DiscreteFilter(np.array(rows), fs)


def discretize(tf: ContinuousTF, fs: float, prewarp: float | None = None) -> DiscreteFilter:
    """Bilinear (Tustin) transform of a proper TF into a biquad cascade.

    ``prewarp`` (rad/s) matches the discrete and continuous responses exactly
    at that frequency; by default no pre-warping is applied.
    """
    if not tf.is_proper:
        raise ImproperTransferError("only proper transfer functions can be streamed")
    if not fs > 0:
        raise ParameterError("fs must be positive")
    if tf.is_zero:
        return DiscreteFilter(np.array([[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]]), fs)
    fs_eff = _tustin_fs(fs, prewarp)
    z, p, k = signal.tf2zpk(tf.num, tf.den)
    zd, pd, kd = signal.bilinear_zpk(z, p, k, fs_eff)
    sos = signal.zpk2sos(zd, pd, kd)
    return DiscreteFilter(sos, fs)
