"""Sliding-window least-squares identification of elbow impedance.

Each window fits ``tau = k theta + b theta' - tau0`` where ``tau`` is the
torque acting on the human (``-tau_c`` in the plant convention). The
inertial term is left out of the regressor, so a window with sinusoidal
motion at ``w`` sees ``k - m_h w^2`` rather than ``k``.

The fit is solved on mean-centred data: the slope pair comes from the 2x2
covariance system and ``tau0`` from the means, which is the same minimizer
as the three-column problem but far better conditioned.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._csv import write_csv

__all__ = [
    "RegressionWindow",
    "ImpedanceEstimate",
    "SlidingEstimates",
    "window_regress",
    "sliding_estimate",
    "write_estimate_log",
]

COND_LIMIT = 1e8
K_FLOOR = 1.0


class RegressionWindow:
    """Ring buffer of ``(theta, thetadot, tau)`` triples."""

    def __init__(self, capacity: int = 400):
        if capacity < 3:
            raise ValueError("capacity must be at least 3")
        self.capacity = capacity
        self._buf: deque = deque(maxlen=capacity)

    def push(self, theta: float, thetadot: float, tau: float) -> None:
        self._buf.append((float(theta), float(thetadot), float(tau)))

    def __len__(self):
        return len(self._buf)

    @property
    def full(self) -> bool:
        return len(self._buf) == self.capacity

    def arrays(self):
        a = np.array(self._buf, dtype=float).reshape(-1, 3)
        return a[:, 0], a[:, 1], a[:, 2]


@dataclass(frozen=True)
class ImpedanceEstimate:
    k_h: float
    b_h: float
    tau0: float
    residual_rms: float
    condition: float
    valid: bool = True
    clamped: bool = False
    staleness: int = 0


def _solve(sxx, sxv, svv, sxt, svt):
    # batched 2x2 solve with a scale-free condition indicator
    det = sxx * svv - sxv * sxv
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (sxt * svv - svt * sxv) / det
        b = (svt * sxx - sxt * sxv) / det
        d = np.sqrt(sxx * svv)
        rho = np.where(d > 0, sxv / d, 1.0)
        rho = np.clip(np.abs(rho), 0.0, 1.0)
        cond = np.where(d > 0, (1 + rho) / (1 - rho), np.inf)
    return k, b, cond


def window_regress(w: RegressionWindow | tuple, cond_limit: float = COND_LIMIT, k_floor: float = K_FLOOR) -> ImpedanceEstimate:
    """Least-squares fit over one full window.

    ``w`` is a :class:`RegressionWindow` or a ``(theta, thetadot, tau)``
    tuple of arrays. Rank-deficient data yields ``valid=False``.
    """
    if isinstance(w, RegressionWindow):
        if not w.full:
            raise ValueError("window is not full")
        th, thd, tau = w.arrays()
    else:
        th, thd, tau = (np.asarray(a, dtype=float) for a in w)
    mt, mv, mtau = th.mean(), thd.mean(), tau.mean()
    x, v, y = th - mt, thd - mv, tau - mtau
    k, b, cond = _solve(x @ x, x @ v, v @ v, x @ y, v @ y)
    k, b, cond = float(k), float(b), float(cond)
    if not (np.isfinite(k) and np.isfinite(b)) or cond > cond_limit:
        return ImpedanceEstimate(np.nan, np.nan, np.nan, np.nan, cond, valid=False)
    tau0 = k * mt + b * mv - mtau
    resid = y - k * x - b * v
    rms = float(np.sqrt(np.mean(resid * resid)))
    clamped = k < k_floor
    if clamped:
        k = k_floor
    return ImpedanceEstimate(k, b, tau0, rms, cond, valid=True, clamped=clamped)


@dataclass
class SlidingEstimates:
    """Per-stride estimates; invalid rows carry the last valid values forward."""

    index: np.ndarray
    k_h: np.ndarray
    b_h: np.ndarray
    tau0: np.ndarray
    residual_rms: np.ndarray
    valid: np.ndarray
    clamped: np.ndarray
    staleness: np.ndarray

    def __len__(self):
        return self.index.size

    def to_csv(self, path, fs: float = 250.0, t0: float = 0.0) -> None:
        write_estimate_log(path, t0 + self.index / fs, self)


def sliding_estimate(theta, thetadot, tau, window: int = 400, stride: int = 1,
                     cond_limit: float = COND_LIMIT, k_floor: float = K_FLOOR) -> SlidingEstimates:
    """Run :func:`window_regress` over every ``stride``-th full window.

    Estimate ``i`` covers samples ``index[i] - window + 1 .. index[i]``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if window < 3:
        raise ValueError("window must be >= 3")
    th = np.asarray(theta, dtype=float)
    thd = np.asarray(thetadot, dtype=float)
    y = np.asarray(tau, dtype=float)
    n = th.size
    if n < window:
        e = np.zeros(0)
        return SlidingEstimates(e.astype(int), e, e, e, e, e.astype(bool), e.astype(bool), e.astype(int))
    W = [sliding_window_view(a, window)[::stride] for a in (th, thd, y)]
    idx = np.arange(window - 1, n, stride)
    means = [a.mean(axis=1) for a in W]
    x, v, t = (a - m[:, None] for a, m in zip(W, means))
    sxx = np.einsum("ij,ij->i", x, x)
    sxv = np.einsum("ij,ij->i", x, v)
    svv = np.einsum("ij,ij->i", v, v)
    sxt = np.einsum("ij,ij->i", x, t)
    svt = np.einsum("ij,ij->i", v, t)
    k, b, cond = _solve(sxx, sxv, svv, sxt, svt)
    valid = np.isfinite(k) & np.isfinite(b) & (cond <= cond_limit)
    kk = np.where(valid, k, 0.0)
    bb = np.where(valid, b, 0.0)
    tau0 = kk * means[0] + bb * means[1] - means[2]
    resid = t - kk[:, None] * x - bb[:, None] * v
    rms = np.sqrt(np.mean(resid * resid, axis=1))
    clamped = valid & (kk < k_floor)
    kk = np.where(clamped, k_floor, kk)

    out_k = np.full(idx.size, np.nan)
    out_b, out_t0, out_rms = out_k.copy(), out_k.copy(), out_k.copy()
    stale = np.zeros(idx.size, dtype=int)
    last = None
    age = 0
    for i in range(idx.size):
        if valid[i]:
            last = (kk[i], bb[i], tau0[i], rms[i])
            age = 0
        else:
            age += 1
        stale[i] = age
        if last is not None:
            out_k[i], out_b[i], out_t0[i], out_rms[i] = last
    return SlidingEstimates(idx, out_k, out_b, out_t0, out_rms, valid, clamped, stale)


def write_estimate_log(path, t, est: SlidingEstimates) -> None:
    header = ["t_s", "k_h", "b_h", "tau0", "residual_rms", "valid"]
    write_csv(path, header, zip(t, est.k_h, est.b_h, est.tau0, est.residual_rms, est.valid))
