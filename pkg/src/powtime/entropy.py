"""Interval-level discovery probability and binary entropy (bits)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import DomainError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class DiscoveryEntropySample:
    interval: float
    p_at_discovery: float
    entropy_bits: float


@dataclass(frozen=True)
class EntropyProfile:
    rate: float
    times: np.ndarray
    entropies: np.ndarray

    @property
    def peak_time(self) -> float:
        return entropy_peak_time(self.rate)


def _check_rate(rate):
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate!r}")


def discovery_probability(rate: float, t: float) -> float:
    _check_rate(rate)
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    return -math.expm1(-rate * t)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    h = -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)
    return min(h, 1.0)


def binary_entropy_array(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.size and (np.any(p < 0) or np.any(p > 1) or np.any(np.isnan(p))):
        raise DomainError("probabilities must lie in [0, 1]")
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(q > 0, q * np.log2(q), 0.0)
    return np.clip(h, 0.0, 1.0)


def entropy_at(rate: float, t: float) -> float:
    return binary_entropy(discovery_probability(rate, t))


def entropy_peak_time(rate: float) -> float:
    """Elapsed time at which p(t) = 1/2 and the entropy reaches one bit."""
    _check_rate(rate)
    return LN2 / rate


def entropy_profile(rate: float, times: Sequence[float]) -> EntropyProfile:
    _check_rate(rate)
    t = np.asarray(times, dtype=float)
    if t.size and np.any(t < 0):
        raise DomainError("times must be nonnegative")
    return EntropyProfile(rate, t, binary_entropy_array(-np.expm1(-rate * t)))


def discovery_entropy_series(intervals: Sequence[float], rate: float) -> List[DiscoveryEntropySample]:
    """Entropy of each realised interval, evaluated at its own duration."""
    p, h = discovery_entropy_arrays(intervals, rate)
    x = np.asarray(intervals, dtype=float)
    return [DiscoveryEntropySample(float(a), float(b), float(c)) for a, b, c in zip(x, p, h)]


def discovery_entropy_arrays(intervals, rate):
    """Array form of :func:`discovery_entropy_series`: ``(p, entropy_bits)``.

    ``rate`` may be a scalar or an array matching ``intervals`` (per-epoch
    rates).
    """
    x = np.asarray(intervals, dtype=float)
    r = np.asarray(rate, dtype=float)
    if np.any(r <= 0):
        raise DomainError("rate must be positive")
    if x.size and np.any(x < 0):
        i = int(np.argmax(x < 0))
        raise DomainError(f"interval {i} is negative ({x[i]!r})")
    p = -np.expm1(-r * x)
    return p, binary_entropy_array(p)


def interval_rates(intervals, mode: str = "global", epoch_length: Optional[int] = None) -> np.ndarray:
    """Rate assigned to each interval for entropy evaluation.

    ``global`` uses 1/mean over the whole sample. ``epoch`` uses 1/mean
    within consecutive chunks of ``epoch_length`` intervals (the last chunk
    may be short), which tracks difficulty changes.
    """
    x = np.asarray(intervals, dtype=float)
    if x.size == 0:
        raise DomainError("no intervals")
    if mode == "global":
        m = x.mean()
        if not m > 0:
            raise DomainError("mean interval must be positive")
        return np.full(x.shape, 1.0 / m)
    if mode == "epoch":
        if not epoch_length or epoch_length < 1:
            raise DomainError("epoch mode needs a positive epoch_length")
        out = np.empty_like(x)
        for s in range(0, x.size, epoch_length):
            chunk = x[s:s + epoch_length]
            m = chunk.mean()
            if not m > 0:
                raise DomainError(f"epoch chunk starting at {s} has nonpositive mean")
            out[s:s + epoch_length] = 1.0 / m
        return out
    raise DomainError(f"unknown rate mode {mode!r}")
