"""Discrete-event simulation of miners, block propagation and fork resolution.

Every miner is also a network node. Two event kinds drive the loop:

* block-found: a miner's exponential timer fires and it extends its tip;
* block-arrival: a block reaches another node after the link delay.

A node adopts an arriving block when it is strictly higher than its current
tip (first-seen wins among equal heights); adopting a block implies having
its ancestors. Whenever a miner's tip changes it redraws its find time,
which is distributionally exact because the exponential is memoryless.

Rates are frozen at the hashrate value of the instant the timer is drawn
(piecewise constant between events); for exponential growth this biases the
interval by O(gamma * interval), far below sampling noise at realistic
growth rates.

Difficulty follows the chain: each block's difficulty is derived from its
own ancestry using block creation times, which coincide with the arrival
clock of the omniscient observer. The run stops once every miner's tip
descends from a single block at height ``run_length_blocks``; that block's
ancestry is the canonical chain and every fork at or below it is resolved.
"""

from __future__ import annotations

import bisect
import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import rng as rngmod
from .difficulty import EpochPolicy, RetargetEvent, replay_retargets, retarget
from .errors import ValidationError
from .mining_core import HASHES_PER_DIFFICULTY

GLOBAL_OBSERVER = "global"

_ARRIVAL = 0
_FOUND = 1


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ConstantHashrate:
    h0: float

    def at(self, t: float) -> float:
        return self.h0

    def describe(self) -> str:
        return f"constant({self.h0!r})"


@dataclass(frozen=True)
class ExponentialGrowth:
    h0: float
    gamma: float

    def at(self, t: float) -> float:
        return self.h0 * math.exp(self.gamma * t)

    def describe(self) -> str:
        return f"exponential_growth({self.h0!r}, {self.gamma!r})"


@dataclass(frozen=True)
class ZeroDelay:
    def max_delay(self) -> float:
        return 0.0

    def describe(self) -> str:
        return "zero"


@dataclass(frozen=True)
class FixedDelay:
    d: float

    def max_delay(self) -> float:
        return self.d

    def describe(self) -> str:
        return f"fixed({self.d!r})"


@dataclass(frozen=True)
class PairwiseDelay:
    matrix: Tuple[Tuple[float, ...], ...]

    def max_delay(self) -> float:
        return max(max(row) for row in self.matrix)

    def describe(self) -> str:
        rows = ";".join(",".join(repr(v) for v in row) for row in self.matrix)
        return f"pairwise_matrix({rows})"


@dataclass(frozen=True)
class RandomExponentialDelay:
    mean: float

    def max_delay(self) -> float:
        return math.inf

    def describe(self) -> str:
        return f"random_exponential({self.mean!r})"


@dataclass(frozen=True)
class SimConfig:
    miners: Tuple[Tuple[str, float], ...]
    hashrate_trajectory: object
    delay_model: object = ZeroDelay()
    policy: EpochPolicy = EpochPolicy()
    initial_difficulty: float = 1.0
    run_length_blocks: int = 2016
    seed: int = 0
    observer: str = GLOBAL_OBSERVER

    def __post_init__(self):
        object.__setattr__(self, "miners", tuple((str(m), float(s)) for m, s in self.miners))
        self.validate()

    @property
    def miner_ids(self) -> List[str]:
        return [m for m, _ in self.miners]

    def validate(self) -> None:
        if not self.miners:
            raise ValidationError("at least one miner is required", field="miners")
        ids = self.miner_ids
        if len(set(ids)) != len(ids):
            raise ValidationError("miner ids must be unique", field="miners")
        for mid, share in self.miners:
            if not 0.0 < share <= 1.0:
                raise ValidationError(f"share of miner {mid!r} must lie in (0, 1]", field="miners")
        total = math.fsum(s for _, s in self.miners)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"hashrate shares sum to {total!r}, expected 1", field="miners")

        traj = self.hashrate_trajectory
        if not isinstance(traj, (ConstantHashrate, ExponentialGrowth)):
            raise ValidationError("unknown hashrate trajectory", field="hashrate_trajectory")
        if not (traj.h0 > 0 and math.isfinite(traj.h0)):
            raise ValidationError("initial hashrate must be positive", field="hashrate_trajectory")
        if isinstance(traj, ExponentialGrowth) and not math.isfinite(traj.gamma):
            raise ValidationError("growth rate must be finite", field="hashrate_trajectory")

        dm = self.delay_model
        if isinstance(dm, FixedDelay):
            if not dm.d >= 0:
                raise ValidationError("fixed delay must be >= 0", field="delay_model")
        elif isinstance(dm, RandomExponentialDelay):
            if not dm.mean >= 0:
                raise ValidationError("mean delay must be >= 0", field="delay_model")
        elif isinstance(dm, PairwiseDelay):
            n = len(self.miners)
            if len(dm.matrix) != n or any(len(r) != n for r in dm.matrix):
                raise ValidationError(f"pairwise delay matrix must be {n}x{n}", field="delay_model")
            if any(not v >= 0 for r in dm.matrix for v in r):
                raise ValidationError("pairwise delays must be >= 0", field="delay_model")
        elif not isinstance(dm, ZeroDelay):
            raise ValidationError("unknown delay model", field="delay_model")

        if not isinstance(self.policy, EpochPolicy):
            raise ValidationError("policy must be an EpochPolicy", field="policy")
        if not (self.initial_difficulty > 0 and math.isfinite(self.initial_difficulty)):
            raise ValidationError("initial_difficulty must be positive", field="initial_difficulty")
        if int(self.run_length_blocks) != self.run_length_blocks or self.run_length_blocks < 1:
            raise ValidationError("run_length_blocks must be a positive integer", field="run_length_blocks")
        try:
            rngmod.check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc), field="seed") from None
        if self.observer != GLOBAL_OBSERVER and self.observer not in ids:
            raise ValidationError(f"observer {self.observer!r} is neither 'global' nor a miner id",
                                  field="observer")


# -- outputs -----------------------------------------------------------------

@dataclass
class BlockEvent:
    block_id: int
    height: int
    miner_id: Optional[str]
    parent_id: Optional[int]
    created_at: float
    difficulty: float
    arrivals: Dict[str, float]


@dataclass(frozen=True)
class ForkRecord:
    height: int
    first_block_time: float
    last_competitor_time: float
    n_branches: int
    winning_block_id: int
    resolution_time: float
    competitor_ids: Tuple[int, ...] = ()

    @property
    def duration(self) -> float:
        return self.last_competitor_time - self.first_block_time


@dataclass
class SimOutput:
    blocks: List[BlockEvent]
    canonical_ids: List[int]
    canonical_times: np.ndarray
    canonical_intervals: np.ndarray
    forks: List[ForkRecord]
    retargets: List[RetargetEvent]
    collapse_completion_times: np.ndarray
    end_time: float
    replication: int = 0

    def block(self, block_id: int) -> BlockEvent:
        return self.blocks[block_id]

    @property
    def canonical_blocks(self) -> List[BlockEvent]:
        return [self.blocks[i] for i in self.canonical_ids]


# -- simulation --------------------------------------------------------------

class _Block:
    __slots__ = ("id", "height", "miner", "parent", "created", "difficulty", "epoch_start",
                 "seen", "_child_params")

    def __init__(self, bid, height, miner, parent, created, difficulty, epoch_start, n_nodes):
        self.id = bid
        self.height = height
        self.miner = miner
        self.parent = parent
        self.created = created
        self.difficulty = difficulty
        self.epoch_start = epoch_start
        self.seen = [math.nan] * n_nodes
        self._child_params = None


class _Simulator:
    def __init__(self, config: SimConfig, replication: int):
        self.cfg = config
        self.n = len(config.miners)
        self.shares = [s for _, s in config.miners]
        self.policy = config.policy
        self.traj = config.hashrate_trajectory
        self.miner_uniforms = [
            rngmod.UniformStream(rngmod.substream(config.seed, replication, rngmod.MINER_STREAM, i))
            for i in range(self.n)]
        self.net_uniforms = rngmod.UniformStream(
            rngmod.substream(config.seed, replication, rngmod.NETWORK_STREAM, 0))
        genesis = _Block(0, 0, None, None, 0.0, float(config.initial_difficulty), 0.0, self.n)
        genesis.seen = [0.0] * self.n
        self.blocks: List[_Block] = [genesis]
        self.tips = [genesis] * self.n
        self.gen = [0] * self.n
        self.adoptions: List[List[Tuple[float, int, int]]] = [[(0.0, 0, 0)] for _ in range(self.n)]
        self.heap: List[tuple] = []
        self.now = 0.0

    # difficulty for a child of ``parent`` along ``parent``'s branch
    def _child_params(self, parent: _Block) -> Tuple[float, float]:
        cp = parent._child_params
        if cp is None:
            bpe = self.policy.blocks_per_epoch
            if parent.height % bpe == 0 and parent.height > 0:
                d = retarget(parent.difficulty, parent.created - parent.epoch_start, self.policy)
                cp = (d, parent.created)
            elif parent.height == 0:
                cp = (parent.difficulty, parent.created)
            else:
                cp = (parent.difficulty, parent.epoch_start)
            parent._child_params = cp
        return cp

    def _schedule_find(self, m: int) -> None:
        self.gen[m] += 1
        tip = self.tips[m]
        d, _ = self._child_params(tip)
        rate = self.shares[m] * self.traj.at(self.now) / (d * HASHES_PER_DIFFICULTY)
        wait = -math.log(self.miner_uniforms[m].next()) / rate
        heapq.heappush(self.heap, (self.now + wait, _FOUND, tip.id, m, self.gen[m]))

    def _delay(self, src: int, dst: int) -> float:
        dm = self.cfg.delay_model
        if isinstance(dm, FixedDelay):
            return dm.d
        if isinstance(dm, ZeroDelay):
            return 0.0
        if isinstance(dm, PairwiseDelay):
            return dm.matrix[src][dst]
        return -math.log(self.net_uniforms.next()) * dm.mean

    def _adopt(self, m: int, block: _Block) -> None:
        self.tips[m] = block
        self.adoptions[m].append((self.now, block.id, block.height))
        self._schedule_find(m)

    def _mark_seen(self, node: int, block: _Block) -> None:
        b = block
        while b is not None and math.isnan(b.seen[node]):
            b.seen[node] = self.now
            b = self.blocks[b.parent] if b.parent is not None else None

    def _ancestor_at(self, block: _Block, height: int) -> _Block:
        b = block
        while b.height > height:
            b = self.blocks[b.parent]
        return b

    def _converged(self, target: int) -> Optional[_Block]:
        tips = self.tips
        if min(t.height for t in tips) < target:
            return None
        anc = self._ancestor_at(tips[0], target)
        for t in tips[1:]:
            if self._ancestor_at(t, target) is not anc:
                return None
        return anc

    def run(self) -> _Block:
        target = self.cfg.run_length_blocks
        for m in range(self.n):
            self._schedule_find(m)
        heap = self.heap
        blocks = self.blocks
        n = self.n
        while True:
            t, kind, bid, m, g = heapq.heappop(heap)
            self.now = t
            if kind == _FOUND:
                if g != self.gen[m]:
                    continue
                parent = self.tips[m]
                d, epoch_start = self._child_params(parent)
                b = _Block(len(blocks), parent.height + 1, m, parent.id, t, d, epoch_start, n)
                b.seen[m] = t
                blocks.append(b)
                for j in range(n):
                    if j != m:
                        heapq.heappush(heap, (t + self._delay(m, j), _ARRIVAL, b.id, j, 0))
                self._adopt(m, b)
                changed = b
            else:
                b = blocks[bid]
                if not math.isnan(b.seen[m]):
                    continue
                self._mark_seen(m, b)
                if b.height <= self.tips[m].height:
                    continue
                self._adopt(m, b)
                changed = b
            if changed.height >= target:
                anchor = self._converged(target)
                if anchor is not None:
                    return anchor

    # -- post-processing --

    def _in_subtree(self, block: _Block, root: _Block) -> bool:
        return block.height >= root.height and self._ancestor_at(block, root.height) is root

    def _resolution_time(self, winner: _Block, losers: Sequence[_Block], children) -> float:
        # highest block descending from any losing competitor
        lose_max = winner.height
        stack = list(losers)
        while stack:
            b = stack.pop()
            lose_max = max(lose_max, b.height)
            stack.extend(self.blocks[c] for c in children.get(b.id, ()))
        h = winner.height
        resolved = 0.0
        for log in self.adoptions:
            # tip heights strictly increase along a miner's log
            i = bisect.bisect_left(log, h, key=lambda e: e[2])
            last_out = i - 1
            for k in range(i, len(log)):
                _, bid, height = log[k]
                if not self._in_subtree(self.blocks[bid], winner):
                    last_out = k
                elif height > lose_max:
                    break
            join = log[last_out + 1][0] if last_out + 1 < len(log) else math.inf
            resolved = max(resolved, join)
        return resolved

    def collect(self, anchor: _Block, replication: int) -> SimOutput:
        cfg = self.cfg
        ids = cfg.miner_ids
        target = cfg.run_length_blocks
        obs = None if cfg.observer == GLOBAL_OBSERVER else ids.index(cfg.observer)

        chain = [anchor]
        while chain[-1].parent is not None:
            chain.append(self.blocks[chain[-1].parent])
        chain.reverse()

        def clock(b: _Block) -> float:
            return b.created if obs is None else b.seen[obs]

        kept = [b for b in self.blocks if b.height <= target]
        children: Dict[int, List[int]] = {}
        by_height: Dict[int, List[_Block]] = {}
        for b in self.blocks:
            if b.parent is not None:
                children.setdefault(b.parent, []).append(b.id)
        for b in kept:
            by_height.setdefault(b.height, []).append(b)

        forks = []
        for h in sorted(by_height):
            group = by_height[h]
            if len(group) < 2:
                continue
            visible = [b for b in group if not math.isnan(clock(b))]
            if len(visible) < 2:
                continue
            winner = chain[h]
            times = [clock(b) for b in visible]
            losers = [b for b in group if b is not winner]
            forks.append(ForkRecord(
                height=h,
                first_block_time=min(times),
                last_competitor_time=max(times),
                n_branches=len(visible),
                winning_block_id=winner.id,
                resolution_time=self._resolution_time(winner, losers, children),
                competitor_ids=tuple(b.id for b in visible),
            ))

        # renumber kept blocks densely so block_id indexes the output list
        new_id = {b.id: i for i, b in enumerate(kept)}
        events = [
            BlockEvent(
                block_id=new_id[b.id],
                height=b.height,
                miner_id=None if b.miner is None else ids[b.miner],
                parent_id=None if b.parent is None else new_id[b.parent],
                created_at=b.created,
                difficulty=b.difficulty,
                arrivals={ids[j]: s for j, s in enumerate(b.seen) if not math.isnan(s)},
            )
            for b in kept
        ]
        forks = [
            ForkRecord(f.height, f.first_block_time, f.last_competitor_time, f.n_branches,
                       new_id[f.winning_block_id], f.resolution_time,
                       tuple(new_id[c] for c in f.competitor_ids))
            for f in forks
        ]
        ctimes = np.array([clock(b) for b in chain])
        completion = np.array([max(b.seen) - b.created for b in chain[1:]])
        retargets = replay_retargets([b.created for b in chain[1:]], cfg.initial_difficulty, cfg.policy)
        return SimOutput(
            blocks=events,
            canonical_ids=[new_id[b.id] for b in chain],
            canonical_times=ctimes,
            canonical_intervals=np.diff(ctimes),
            forks=forks,
            retargets=retargets,
            collapse_completion_times=completion,
            end_time=self.now,
            replication=replication,
        )


def run(config: SimConfig, replication: int = 0) -> SimOutput:
    """Run one replication; identical inputs give bit-identical outputs."""
    config.validate()
    sim = _Simulator(config, replication)
    anchor = sim.run()
    return sim.collect(anchor, replication)


def _run_star(args):
    return run(*args)


def run_campaign(config: SimConfig, replications: int = 1, workers: int = 1) -> List[SimOutput]:
    """Run replications ``0..replications-1``; results are in replication order."""
    if replications < 1:
        raise ValidationError("replications must be >= 1", field="replications")
    jobs = [(config, r) for r in range(replications)]
    if workers <= 1 or replications == 1:
        return [run(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_star, jobs))


def fork_durations(output: SimOutput) -> List[float]:
    return [f.duration for f in sorted(output.forks, key=lambda f: f.height)]


def collapse_completion_times(output: SimOutput) -> List[float]:
    return output.collapse_completion_times.tolist()


def fork_frequency(output: SimOutput) -> float:
    """Forks per canonical block."""
    return len(output.forks) / (len(output.canonical_ids) - 1)
