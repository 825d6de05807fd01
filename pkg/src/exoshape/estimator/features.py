"""Sensor conditioning and the 7-D feature vector.

Feature order is fixed::

    abs_theta, abs_thetadot, S1, S2, E1, E2, E3

Every channel passes through the same second-order low-pass (60 rad/s,
zeta 0.707). sEMG channels are rectified first. Stretch and sEMG channels
then have their resting baseline subtracted, and all seven values are
taken in absolute value. Filtering happens before baseline subtraction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._csv import read_csv, write_csv
from ..lti import DiscreteFilter, discretize, second_order_lowpass

__all__ = [
    "FEATURE_NAMES",
    "CHANNELS",
    "STRETCH_COLUMNS",
    "SensorFrame",
    "Baseline",
    "BaselineError",
    "FeaturePipeline",
    "emg_condition",
    "featurize",
    "featurize_block",
    "write_dataset",
    "read_dataset",
]

FEATURE_NAMES = ("abs_theta", "abs_thetadot", "S1", "S2", "E1", "E2", "E3")
CHANNELS = ("S1", "S2", "E1", "E2", "E3")
STRETCH_COLUMNS = (2, 3)
FS = 250.0
LOWPASS_W = 60.0
LOWPASS_ZETA = 0.707


class BaselineError(ValueError):
    """Raised when features are requested without a resting baseline."""


@dataclass(frozen=True)
class SensorFrame:
    t: float
    theta: float
    thetadot: float
    E1: float
    E2: float
    E3: float
    S1: float
    S2: float
    tau_c: float = 0.0

    def channels(self) -> np.ndarray:
        return np.array([self.S1, self.S2, self.E1, self.E2, self.E3])


@dataclass(frozen=True)
class Baseline:
    """Mean of each conditioned channel over a resting interval, in
    ``CHANNELS`` order."""

    values: tuple
    duration: float

    def __post_init__(self):
        if len(self.values) != len(CHANNELS):
            raise ValueError(f"baseline needs {len(CHANNELS)} values")
        if self.duration < 1.0:
            raise ValueError("baseline must cover at least 1 s of data")

    @classmethod
    def from_conditioned(cls, conditioned: np.ndarray, fs: float = FS) -> "Baseline":
        c = np.asarray(conditioned, dtype=float)
        return cls(tuple(float(v) for v in c.mean(axis=0)), c.shape[0] / fs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _lowpass(fs: float) -> DiscreteFilter:
    return discretize(second_order_lowpass(LOWPASS_W, LOWPASS_ZETA), fs)


def emg_condition(raw, fs: float = FS) -> np.ndarray:
    """Rectify and low-pass a raw sEMG record (zero initial state)."""
    x = np.abs(np.asarray(raw, dtype=float))
    return _lowpass(fs).filter(x)


def _condition_block(theta, thetadot, chans, fs):
    # filtered theta, thetadot and the 5 conditioned channels
    chans = np.asarray(chans, dtype=float)
    out = np.empty((chans.shape[0], 7))
    out[:, 0] = _lowpass(fs).filter(np.asarray(theta, dtype=float))
    out[:, 1] = _lowpass(fs).filter(np.asarray(thetadot, dtype=float))
    for j in range(5):
        x = chans[:, j]
        out[:, 2 + j] = _lowpass(fs).filter(np.abs(x) if j >= 2 else x)
    return out


def featurize_block(theta, thetadot, chans, baseline: Baseline | None, fs: float = FS) -> np.ndarray:
    """Vectorized features for a whole record; ``chans`` is ``(n, 5)`` in
    ``CHANNELS`` order. Filters start from zero state."""
    if baseline is None:
        raise BaselineError("baseline required")
    c = _condition_block(theta, thetadot, chans, fs)
    c[:, 2:] -= baseline.as_array()
    return np.abs(c)


class FeaturePipeline:
    """Per-channel streaming filters; one sample in, one feature vector out."""

    def __init__(self, fs: float = FS):
        self.fs = fs
        self.filters = [_lowpass(fs) for _ in range(7)]

    def reset(self) -> None:
        for f in self.filters:
            f.reset()

    def condition(self, frame: SensorFrame) -> np.ndarray:
        raw = (frame.theta, frame.thetadot, frame.S1, frame.S2, abs(frame.E1), abs(frame.E2), abs(frame.E3))
        return np.array([f.stream(x) for f, x in zip(self.filters, raw)])

    def calibrate(self, frames) -> Baseline:
        """Stream ``frames`` and return their conditioned channel means."""
        c = np.array([self.condition(fr)[2:] for fr in frames])
        return Baseline.from_conditioned(c, self.fs)


def featurize(frame: SensorFrame, baseline: Baseline | None, filters: FeaturePipeline) -> np.ndarray:
    """Feature vector for one frame, advancing the filter states."""
    if baseline is None:
        raise BaselineError("baseline required")
    c = filters.condition(frame)
    c[2:] -= baseline.as_array()
    return np.abs(c)


def write_dataset(path, t, X, y) -> None:
    header = ["t_s", *FEATURE_NAMES, "k_ref"]
    X = np.asarray(X, dtype=float)
    write_csv(path, header, ((ti, *row, yi) for ti, row, yi in zip(t, X, y)))


def read_dataset(path):
    """Return ``(t, X, y)``; raises ``ValueError`` on a malformed file."""
    header, rows = read_csv(path)
    if tuple(header) != ("t_s", *FEATURE_NAMES, "k_ref"):
        raise ValueError(f"unexpected dataset header in {path}: {header}")
    try:
        a = np.array(rows, dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ValueError(f"malformed dataset {path}: {exc}") from None
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite values in {path}")
    return a[:, 0], a[:, 1:8], a[:, 8]
