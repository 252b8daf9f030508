"""Power-law fits of kernel magnitudes and envelope sampling helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["DecayFit", "decay_fit", "window_max", "phase_peaks", "log_subset"]


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line through ``(log t, log |K|)``.

    Attributes
    ----------
    slope, intercept : float
        ``log|K| ~ intercept + slope * log t``.
    r_squared : float
    residuals : ndarray
        Per-point residuals in log space.
    """

    slope: float
    intercept: float
    r_squared: float
    residuals: np.ndarray


def decay_fit(t, magnitude, *, min_samples: int = 8) -> DecayFit:
    """Fit a power law to positive samples.

    Parameters
    ----------
    t, magnitude : array_like
        Positive times and magnitudes, at least `min_samples` of each.

    Returns
    -------
    DecayFit

    Raises
    ------
    DomainError
        Too few samples, nonpositive values or all times equal.

    Examples
    --------
    >>> t = np.geomspace(1, 100, 8)
    >>> round(decay_fit(t, 3 * t**-1.5).slope, 12)
    -1.5
    """
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(magnitude, dtype=float).ravel()
    if t.size != y.size:
        raise DomainError("t and magnitude differ in length")
    if t.size < min_samples:
        raise DomainError(f"need at least {min_samples} samples, got {t.size}")
    if np.any(t <= 0) or np.any(y <= 0):
        raise DomainError("times and magnitudes must be positive")
    lt, ly = np.log(t), np.log(y)
    if np.ptp(lt) == 0:
        raise DomainError("all sample times are equal")
    A = np.column_stack([lt, np.ones_like(lt)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (slope * lt + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, res)


def window_max(func, times, period: float, samples: int = 48) -> np.ndarray:
    """``max |func|`` over ``[t, t + period]`` for each ``t`` in `times`.

    `func` is called once with the flattened array of all sample points.
    Taking the maximum over a full period of the slowest beat removes the
    zeros of an oscillating quantity before a power-law fit.
    """
    times = np.asarray(times, dtype=float)
    grid = times[:, None] + np.linspace(0.0, period, samples)[None, :]
    vals = np.abs(np.asarray(func(grid.ravel()))).reshape(grid.shape)
    return vals.max(axis=1)


def log_subset(times, count: int | None) -> np.ndarray:
    """Roughly log-uniform subset of `count` entries of a sorted array."""
    times = np.asarray(times, dtype=float)
    if count is None or count >= times.size:
        return times
    idx = np.unique(np.round(np.geomspace(1, times.size, count)).astype(int) - 1)
    return times[idx]


def phase_peaks(omega: float, offset: float, t_min: float, t_max: float,
                count: int | None = None) -> np.ndarray:
    """Times in ``[t_min, t_max]`` with ``omega * t = offset (mod 2 pi)``."""
    if not omega > 0:
        raise DomainError("omega must be positive")
    k0 = math.ceil((omega * t_min - offset) / (2 * math.pi))
    k1 = math.floor((omega * t_max - offset) / (2 * math.pi))
    times = (offset + 2 * math.pi * np.arange(k0, k1 + 1)) / omega
    return log_subset(times, count)
