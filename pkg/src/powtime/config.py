"""Flat ``key = value`` configuration files for simulation campaigns.

Example::

    # two equal miners, 10 s links
    miners = a:0.5, b:0.5
    hashrate_trajectory = constant(7158278.826666667)
    delay_model = fixed(10)
    policy = blocks_per_epoch:2016, target_block_interval:600, clamp_factor:4
    initial_difficulty = 1
    run_length_blocks = 50000
    seed = 7
    observer = global
    replications = 1

``delay_model``, ``policy``, ``observer`` and ``replications`` are optional.
``clamp_factor:none`` disables clipping. ``pairwise_matrix`` rows are
separated by ``;``: ``pairwise_matrix(0,5;5,0)``.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

from .difficulty import EpochPolicy
from .errors import ValidationError
from .netsim import (GLOBAL_OBSERVER, ConstantHashrate, ExponentialGrowth, FixedDelay, PairwiseDelay,
                     RandomExponentialDelay, SimConfig, ZeroDelay)

SIM_KEYS = ("miners", "hashrate_trajectory", "delay_model", "policy", "initial_difficulty",
            "run_length_blocks", "seed", "observer")
CAMPAIGN_KEYS = ("replications",)
REQUIRED = ("miners", "hashrate_trajectory", "initial_difficulty", "run_length_blocks", "seed")

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class Campaign:
    sim: SimConfig
    replications: int = 1


def read_pairs(text: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SIM_KEYS and key not in CAMPAIGN_KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}", field=key)
        if key in pairs:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}", field=key)
        pairs[key] = value
    return pairs


def _float(text: str, field: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"{field}: {text!r} is not a number", field=field) from None


def _int(text: str, field: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ValidationError(f"{field}: {text!r} is not an integer", field=field) from None


def _call(text: str, field: str):
    m = _CALL.match(text)
    if not m:
        raise ValidationError(f"{field}: cannot parse {text!r}", field=field)
    return m.group(1), m.group(2)


def parse_miners(text: str):
    miners = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        if ":" not in item:
            raise ValidationError(f"miners: expected id:share, got {item!r}", field="miners")
        mid, share = item.rsplit(":", 1)
        miners.append((mid.strip(), _float(share, "miners")))
    return tuple(miners)


def parse_trajectory(text: str):
    name, args = _call(text, "hashrate_trajectory")
    vals = [_float(a, "hashrate_trajectory") for a in (args or "").split(",") if a.strip()]
    if name == "constant" and len(vals) == 1:
        return ConstantHashrate(vals[0])
    if name == "exponential_growth" and len(vals) == 2:
        return ExponentialGrowth(*vals)
    raise ValidationError(f"hashrate_trajectory: cannot parse {text!r}", field="hashrate_trajectory")


def parse_delay(text: str):
    name, args = _call(text, "delay_model")
    if name == "zero" and not args:
        return ZeroDelay()
    if name == "fixed" and args:
        return FixedDelay(_float(args, "delay_model"))
    if name == "random_exponential" and args:
        return RandomExponentialDelay(_float(args, "delay_model"))
    if name == "pairwise_matrix" and args:
        rows = tuple(tuple(_float(v, "delay_model") for v in row.split(","))
                     for row in args.split(";") if row.strip())
        return PairwiseDelay(rows)
    raise ValidationError(f"delay_model: cannot parse {text!r}", field="delay_model")


def parse_policy(text: str) -> EpochPolicy:
    kw = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, _, value = item.partition(":")
        key, value = key.strip(), value.strip()
        if key == "blocks_per_epoch":
            kw[key] = _int(value, "policy")
        elif key == "target_block_interval":
            kw[key] = _float(value, "policy")
        elif key == "clamp_factor":
            kw[key] = None if value.lower() == "none" else _float(value, "policy")
        else:
            raise ValidationError(f"policy: unknown entry {key!r}", field="policy")
    try:
        return EpochPolicy(**kw)
    except ValidationError as exc:
        raise ValidationError(f"policy: {exc}", field="policy") from None


def build_campaign(pairs: Mapping[str, str], overrides: Optional[Mapping[str, object]] = None) -> Campaign:
    """Assemble a campaign; ``overrides`` (already typed) win over file values."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    missing = [k for k in REQUIRED if k not in pairs and k not in overrides]
    if missing:
        raise ValidationError(f"missing required key(s): {', '.join(missing)}", field=missing[0])

    def get(key, parser, default=None):
        if key in overrides:
            return overrides[key]
        if key in pairs:
            return parser(pairs[key])
        return default

    sim = SimConfig(
        miners=get("miners", parse_miners),
        hashrate_trajectory=get("hashrate_trajectory", parse_trajectory),
        delay_model=get("delay_model", parse_delay, ZeroDelay()),
        policy=get("policy", parse_policy, EpochPolicy()),
        initial_difficulty=get("initial_difficulty", lambda s: _float(s, "initial_difficulty")),
        run_length_blocks=get("run_length_blocks", lambda s: _int(s, "run_length_blocks")),
        seed=get("seed", lambda s: _int(s, "seed")),
        observer=get("observer", str.strip, GLOBAL_OBSERVER),
    )
    reps = get("replications", lambda s: _int(s, "replications"), 1)
    if reps < 1:
        raise ValidationError("replications must be >= 1", field="replications")
    return Campaign(sim, reps)


def load_campaign(path, overrides=None) -> Campaign:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return build_campaign(read_pairs(text), overrides)


def format_config(campaign: Campaign) -> str:
    """Canonical text form; parsing it back yields an equal campaign."""
    c = campaign.sim
    p = c.policy
    clamp = "none" if p.clamp_factor is None else repr(p.clamp_factor)
    lines = [
        "miners = " + ", ".join(f"{m}:{s!r}" for m, s in c.miners),
        f"hashrate_trajectory = {c.hashrate_trajectory.describe()}",
        f"delay_model = {c.delay_model.describe()}",
        f"policy = blocks_per_epoch:{p.blocks_per_epoch}, target_block_interval:{p.target_block_interval!r}, "
        f"clamp_factor:{clamp}",
        f"initial_difficulty = {c.initial_difficulty!r}",
        f"run_length_blocks = {c.run_length_blocks}",
        f"seed = {c.seed}",
        f"observer = {c.observer}",
        f"replications = {campaign.replications}",
    ]
    return "\n".join(lines) + "\n"


def config_hash(campaign: Campaign) -> str:
    return hashlib.sha256(format_config(campaign).encode("utf-8")).hexdigest()
