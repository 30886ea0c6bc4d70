"""Difficulty epochs and the multiplicative retarget rule.

An epoch spans ``blocks_per_epoch`` blocks. When the last block of an epoch
arrives, difficulty is rescaled by ``T_epoch / T_observed`` (optionally
clipped to ``[1/clamp, clamp]``, as the reference client does with 4).
Unlike the reference client, the observed duration spans the full epoch,
not 2015 intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, OrderingError, ValidationError
from .mining_core import HASHES_PER_DIFFICULTY


@dataclass(frozen=True)
class EpochPolicy:
    blocks_per_epoch: int = 2016
    target_block_interval: float = 600.0
    clamp_factor: Optional[float] = 4.0

    def __post_init__(self):
        if int(self.blocks_per_epoch) != self.blocks_per_epoch or self.blocks_per_epoch < 1:
            raise ValidationError("blocks_per_epoch must be a positive integer", field="blocks_per_epoch")
        if not self.target_block_interval > 0:
            raise ValidationError("target_block_interval must be positive", field="target_block_interval")
        if self.clamp_factor is not None and not self.clamp_factor >= 1:
            raise ValidationError("clamp_factor must be >= 1 or None", field="clamp_factor")

    @property
    def epoch_duration(self) -> float:
        return self.blocks_per_epoch * self.target_block_interval

    @property
    def half(self) -> int:
        return self.blocks_per_epoch // 2


@dataclass(frozen=True)
class EpochState:
    epoch_index: int
    current_difficulty: float
    epoch_start_time: float = 0.0
    blocks_in_epoch: int = 0


@dataclass(frozen=True)
class RetargetEvent:
    epoch_index: int
    observed_duration: float
    old_difficulty: float
    new_difficulty: float
    clamped: bool


def retarget_ratio(observed_duration: float, policy: EpochPolicy) -> Tuple[float, bool]:
    """Return the (possibly clipped) adjustment factor and whether it was clipped."""
    if not observed_duration > 0:
        raise DomainError(f"observed epoch duration must be positive, got {observed_duration!r}")
    ratio = policy.epoch_duration / observed_duration
    c = policy.clamp_factor
    if c is not None:
        if ratio > c:
            return c, True
        if ratio < 1.0 / c:
            return 1.0 / c, True
    return ratio, False


def retarget(difficulty: float, observed_duration: float, policy: EpochPolicy = EpochPolicy()) -> float:
    ratio, _ = retarget_ratio(observed_duration, policy)
    return difficulty * ratio


def record_block(state: EpochState, arrival_time: float, policy: EpochPolicy = EpochPolicy()
                 ) -> Tuple[EpochState, Optional[RetargetEvent]]:
    """Advance the epoch state machine by one block arrival.

    Returns the new state and, if the block closed an epoch, the retarget it
    triggered.
    """
    if arrival_time < state.epoch_start_time:
        raise OrderingError(
            f"arrival time {arrival_time!r} precedes epoch start {state.epoch_start_time!r}")
    n = state.blocks_in_epoch + 1
    if n < policy.blocks_per_epoch:
        return replace(state, blocks_in_epoch=n), None

    observed = arrival_time - state.epoch_start_time
    ratio, clamped = retarget_ratio(observed, policy)
    new_d = state.current_difficulty * ratio
    event = RetargetEvent(state.epoch_index, observed, state.current_difficulty, new_d, clamped)
    return EpochState(state.epoch_index + 1, new_d, arrival_time, 0), event


def replay_retargets(arrival_times, initial_difficulty: float, policy: EpochPolicy = EpochPolicy(),
                     start_time: float = 0.0) -> List[RetargetEvent]:
    """Feed a sequence of block arrival times through :func:`record_block`."""
    state = EpochState(0, float(initial_difficulty), start_time, 0)
    events = []
    for t in arrival_times:
        state, ev = record_block(state, float(t), policy)
        if ev is not None:
            events.append(ev)
    return events


def _fixed_point_gap(epoch_time: float, growth: float, policy: EpochPolicy) -> float:
    # log(T_epoch / T) - growth * T, strictly decreasing in T
    return math.log(policy.epoch_duration / epoch_time) - growth * epoch_time


def steady_state_interval(growth_rate_per_second: float, policy: EpochPolicy = EpochPolicy(),
                          rtol: float = 1e-10) -> float:
    """Mean block interval at the retarget fixed point under exponential hashrate growth.

    With hashrate growing as ``exp(g t)`` the loop settles where each epoch's
    difficulty increase ``T_epoch / T`` matches the hashrate growth over that
    epoch, ``exp(g T)``. The fixed point is found by bisection on
    ``[T_epoch / 64, T_epoch]`` and returned per block.
    """
    g = float(growth_rate_per_second)
    if g < 0 or math.isnan(g):
        raise DomainError(f"growth rate must be nonnegative, got {growth_rate_per_second!r}")
    te = policy.epoch_duration
    if g == 0.0:
        return policy.target_block_interval
    lo, hi = te / 64.0, te
    if _fixed_point_gap(lo, g, policy) <= 0:
        raise DomainError(f"growth rate {g!r} too large: no fixed point in [T_epoch/64, T_epoch]")
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if _fixed_point_gap(mid, g, policy) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) / policy.blocks_per_epoch


def growth_rate_for_speedup(speedup: float, policy: EpochPolicy = EpochPolicy()) -> float:
    """Growth rate whose fixed point runs ``speedup`` times faster than target."""
    if not speedup >= 1:
        raise DomainError("speedup must be >= 1")
    t_star = policy.epoch_duration / speedup
    return math.log(speedup) / t_star


def growth_rate_for_half_ratio(ratio: float, policy: EpochPolicy = EpochPolicy()) -> float:
    """Growth rate giving a late-half/early-half hashrate ratio of ``ratio`` at steady state.

    At the fixed point an epoch lasts ``T`` with ``g T = log(T_epoch / T)``,
    and the two halves are ``T/2`` apart, so ``g T / 2 = log(ratio)``.
    """
    if not ratio >= 1:
        raise DomainError("ratio must be >= 1")
    return growth_rate_for_speedup(ratio * ratio, policy)


@dataclass
class EpochSimulation:
    """Block times from :func:`simulate_epochs`; ``difficulties[k]`` applies to epoch k."""

    block_times: np.ndarray
    difficulties: np.ndarray
    retargets: List[RetargetEvent]

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.block_times)

    @property
    def epoch_durations(self) -> np.ndarray:
        return np.array([ev.observed_duration for ev in self.retargets])


def simulate_epochs(initial_hashrate: float, n_epochs: int, rng: np.random.Generator,
                    policy: EpochPolicy = EpochPolicy(), growth_rate: float = 0.0,
                    initial_difficulty: Optional[float] = None) -> EpochSimulation:
    """Closed-loop block times for a single aggregate miner, epoch by epoch.

    Uses exact time-change inversion of the inhomogeneous Poisson process
    ``rate(t) = H0 exp(g t) / (D 2^32)``: with unit exponentials ``E_i``
    summed to ``S``, the blocks of an epoch starting at ``s`` land at
    ``s + log1p(g S D 2^32 / H(s)) / g``. This is independent of the event
    loop in :mod:`powtime.netsim` and serves as its cross-check.

    ``initial_difficulty`` defaults to the value giving the target interval
    at ``initial_hashrate``.
    """
    if n_epochs < 1:
        raise DomainError("n_epochs must be >= 1")
    h0 = float(initial_hashrate)
    g = float(growth_rate)
    d = (h0 * policy.target_block_interval / HASHES_PER_DIFFICULTY
         if initial_difficulty is None else float(initial_difficulty))
    n = policy.blocks_per_epoch
    times = [np.zeros(1)]
    diffs = []
    events = []
    state = EpochState(0, d, 0.0, 0)
    start = 0.0
    for _ in range(n_epochs):
        d = state.current_difficulty
        diffs.append(d)
        work = np.cumsum(rng.standard_exponential(n)) * d * HASHES_PER_DIFFICULTY
        if g == 0.0:
            t = start + work / h0
        else:
            h_start = h0 * math.exp(g * start)
            t = start + np.log1p(g * work / h_start) / g
        times.append(t)
        # only the last block of the epoch can close it
        state = replace(state, blocks_in_epoch=n - 1)
        state, ev = record_block(state, float(t[-1]), policy)
        events.append(ev)
        start = float(t[-1])
    return EpochSimulation(np.concatenate(times), np.array(diffs), events)
