"""Stochastic proof-of-work mining model.

Each hash attempt is a Bernoulli trial with success probability
``1 / (D * 2**32)``. In the rare-event limit the waiting time for a block is
exponential with rate ``H / (D * 2**32)``, which is what the sampler draws
from. The difficulty-1 reference target only ever enters through the
``2**32`` constant, so it has no runtime representation here.

Difficulties, hashrates (H/s) and rates (blocks/s) are plain floats.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import DomainError

#: Expected hashes per block at difficulty 1.
HASHES_PER_DIFFICULTY = 2.0**32


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0.0 or math.isinf(value):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return value


def per_trial_probability(difficulty: float) -> float:
    d = _positive("difficulty", difficulty)
    if d < 1.0 / HASHES_PER_DIFFICULTY:
        raise DomainError(f"difficulty {d!r} below 2**-32 gives a trial probability above 1")
    return 1.0 / (d * HASHES_PER_DIFFICULTY)


def arrival_rate(hashrate: float, difficulty: float) -> float:
    """Block arrival rate (blocks/s) for a hashrate at a given difficulty."""
    h = _positive("hashrate", hashrate)
    d = _positive("difficulty", difficulty)
    return h / (d * HASHES_PER_DIFFICULTY)


def survival_exact(theta: float, trials: int) -> float:
    """Probability that ``trials`` independent attempts all fail.

    Evaluated as ``exp(trials * log1p(-theta))`` so that theta near 2**-32
    and trial counts near 2**32 do not lose precision.
    """
    theta = float(theta)
    if not 0.0 < theta <= 1.0:
        raise DomainError(f"theta must lie in (0, 1], got {theta!r}")
    if trials < 0:
        raise DomainError(f"trials must be nonnegative, got {trials!r}")
    if trials == 0:
        return 1.0
    if theta == 1.0:
        return 0.0
    return math.exp(trials * math.log1p(-theta))


def survival_limit(rate: float, t: float) -> float:
    rate = _positive("rate", rate)
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t!r}")
    return math.exp(-rate * t)


def waiting_time_from_uniform(u: float, rate: float) -> float:
    """Inverse-CDF transform of a uniform on (0, 1] into an exponential wait."""
    if not 0.0 < u <= 1.0:
        raise DomainError(f"u must lie in (0, 1], got {u!r}")
    return -math.log(u) / rate


def sample_waiting_time(rate: float, rng: np.random.Generator) -> float:
    rate = _positive("rate", rate)
    return waiting_time_from_uniform(1.0 - rng.random(), rate)


def sample_waiting_times(rate: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Vectorised version of :func:`sample_waiting_time`; same draw sequence."""
    rate = _positive("rate", rate)
    return -np.log(1.0 - rng.random(n)) / rate


def aggregate_rate(rates: Iterable[float]) -> float:
    """Rate of the minimum of independent exponential waits."""
    rates = [_positive("rate", r) for r in rates]
    if not rates:
        raise DomainError("aggregate_rate needs at least one rate")
    return math.fsum(rates)


def estimate_hashrate(difficulty: float, mean_interval: float) -> float:
    d = _positive("difficulty", difficulty)
    mean_interval = _positive("mean_interval", mean_interval)
    return d * HASHES_PER_DIFFICULTY / mean_interval
