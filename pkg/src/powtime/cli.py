"""Command line front end: ``powtime simulate | analyze | report``.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 empty or degenerate data.

Command-line flags override values from the configuration file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from . import __version__, analysis, stats
from .config import config_hash, format_config, load_campaign
from .difficulty import EpochPolicy
from .errors import DegenerateInputError, DomainError, ValidationError
from .ingest_io import (ArrivalFormat, ForkFormat, parse_arrivals, parse_forks, parse_intervals,
                        extract_intervals, to_epochs)
from .netsim import SimOutput, fork_durations, run_campaign
from .stats import EpochRecord

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4

MANIFEST = "manifest.json"
ANALYSIS_SUMMARY = "analysis_summary.json"


class EmptyInput(Exception):
    pass


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows):
    analysis.write_table(path, (header, rows))


# -- simulate ----------------------------------------------------------------

def _sim_tables(out: SimOutput, ids: List[str]):
    rep = out.replication
    canon = set(out.canonical_ids)
    blocks = []
    for b in out.blocks:
        blocks.append([rep, b.block_id, b.height, b.miner_id, b.parent_id, b.created_at, b.difficulty,
                       b.block_id in canon] + [b.arrivals.get(m) for m in ids])
    cblocks = out.canonical_blocks
    arrivals = [[b.height, t, b.difficulty] for b, t in zip(cblocks, out.canonical_times)]
    intervals = [[rep, b.height, v] for b, v in zip(cblocks[1:], out.canonical_intervals)]
    forks = [[rep, f.height, f.duration, f.first_block_time, f.last_competitor_time, f.n_branches,
              f.winning_block_id, f.resolution_time] for f in sorted(out.forks, key=lambda f: f.height)]
    retargets = [[rep, r.epoch_index, r.observed_duration, r.old_difficulty, r.new_difficulty, r.clamped]
                 for r in out.retargets]
    completion = [[rep, b.height, c] for b, c in zip(cblocks[1:], out.collapse_completion_times)]
    return {
        "blocks.csv": (["replication", "block_id", "height", "miner_id", "parent_id", "created_at",
                        "difficulty", "canonical"] + [f"arrival_{m}" for m in ids], blocks),
        "arrivals.csv": (["height", "arrival_time", "difficulty"], arrivals),
        "intervals.csv": (["replication", "height", "interval_s"], intervals),
        "forks.csv": (["replication", "height", "duration", "first_block_time", "last_competitor_time",
                       "n_branches", "winning_block_id", "resolution_time"], forks),
        "retargets.csv": (["replication", "epoch_index", "observed_duration", "old_difficulty",
                           "new_difficulty", "clamped"], retargets),
        "completion.csv": (["replication", "height", "completion_s"], completion),
    }


def cmd_simulate(args) -> int:
    overrides = {"seed": args.seed, "replications": args.replications}
    campaign = load_campaign(args.config, overrides)
    outputs = run_campaign(campaign.sim, campaign.replications, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    ids = campaign.sim.miner_ids

    merged: Dict[str, tuple] = {}
    files = []
    for out in outputs:
        tables = _sim_tables(out, ids)
        sub = f"rep_{out.replication:03d}"
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)
        for name, (header, rows) in tables.items():
            _write_rows(os.path.join(args.out, sub, name), header, rows)
            files.append(f"{sub}/{name}")
            if name == "arrivals.csv":
                continue
            merged.setdefault(name, (header, []))[1].extend(rows)
    for name, (header, rows) in merged.items():
        _write_rows(os.path.join(args.out, name), header, rows)
        files.append(name)

    intervals = np.concatenate([o.canonical_intervals for o in outputs])
    durs = [d for o in outputs for d in fork_durations(o)]
    summary = analysis.interval_summary(intervals)
    summary.update({
        "epoch_count": sum(len(o.retargets) for o in outputs),
        "fork_count": len(durs),
        "max_fork_duration_s": max(durs) if durs else None,
    })
    with open(os.path.join(args.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_config(campaign))
    manifest = {
        "kind": "simulate",
        "version": __version__,
        "config_hash": config_hash(campaign),
        "seed": campaign.sim.seed,
        "replications": campaign.replications,
        "files": sorted(files + ["config.txt"]),
        "summary": {k: _num(v) if isinstance(v, float) else v for k, v in summary.items()},
    }
    _dump_json(os.path.join(args.out, MANIFEST), manifest)
    print(f"wrote {len(outputs)} replication(s) to {args.out}")
    return EXIT_OK


# -- analyze -----------------------------------------------------------------

def _sniff_header(path) -> List[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        for raw in fh:
            text = raw.strip()
            if text and not text.startswith("#"):
                return [c.strip() for c in next(csv.reader([text]))]
    return []


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _report_diags(diags):
    for d in diags:
        print(d.format(), file=sys.stderr)


def _load_inputs(args):
    intervals: List[np.ndarray] = []
    epochs: List[EpochRecord] = []
    dropped = 0
    fork_h, fork_d = [], []
    policy = EpochPolicy(blocks_per_epoch=args.epoch_blocks)
    afmt = ArrivalFormat(time_source=args.time_source)
    for path in args.inputs:
        cols = _sniff_header(path)
        with open(path, encoding="utf-8", newline="") as fh:
            if afmt.time_col in cols:
                ds = parse_arrivals(fh, afmt, strict=args.strict)
                _report_diags(ds.diagnostics)
                ex = extract_intervals(ds)
                intervals.append(ex.values)
                grouping = to_epochs(ds, policy, relative=args.relative_epochs)
                epochs.extend(grouping.epochs)
                dropped += grouping.dropped
            elif "duration" in cols:
                fd = parse_forks(fh, ForkFormat(), strict=args.strict)
                _report_diags(fd.diagnostics)
                fork_h.append(fd.heights)
                fork_d.append(fd.durations)
            elif "interval_s" in cols:
                s = parse_intervals(fh)
                intervals.append(s.values)
                n = policy.blocks_per_epoch
                for k in range(s.values.size // n):
                    epochs.append(EpochRecord(len(epochs), s.values[k * n:(k + 1) * n]))
            elif not cols:
                continue
            else:
                raise ValidationError(f"{path}: unrecognised columns {cols}")
    iv = np.concatenate(intervals) if intervals else np.array([])
    fh_ = np.concatenate(fork_h) if fork_h else np.array([], dtype=np.int64)
    fd_ = np.concatenate(fork_d) if fork_d else np.array([])
    return iv, epochs, dropped, fh_, fd_


def cmd_analyze(args) -> int:
    requested = None
    if args.analyses:
        requested = [a.strip() for a in args.analyses.split(",") if a.strip()]
        unknown = [a for a in requested if a not in analysis.ANALYSES]
        if unknown:
            print(f"error: unknown analysis {', '.join(unknown)}; choose from {','.join(analysis.ANALYSES)}",
                  file=sys.stderr)
            return EXIT_USAGE
    intervals, epochs, dropped, fork_heights, durations = _load_inputs(args)
    if intervals.size == 0 and durations.size == 0:
        raise EmptyInput("no intervals or fork durations in input")

    if requested is None:
        todo = []
        if intervals.size:
            todo += ["hist", "acf", "entropy"]
            if epochs:
                todo.append("epochs")
            if len(epochs) >= 2:
                todo.append("halfsplit")
        if durations.size:
            todo += list(analysis.FORK_ANALYSES)
    else:
        todo = requested
        if any(a in analysis.INTERVAL_ANALYSES for a in todo) and intervals.size == 0:
            raise EmptyInput("interval analyses requested but no interval data supplied")
        if any(a in analysis.FORK_ANALYSES for a in todo) and durations.size == 0:
            raise EmptyInput("fork analyses requested but no fork data supplied")

    os.makedirs(args.out, exist_ok=True)
    out = lambda name: os.path.join(args.out, name)  # noqa: E731
    summary: dict = {"inputs": [os.path.basename(p) for p in args.inputs]}
    written = []

    def emit(name, table):
        analysis.write_table(out(name), table)
        written.append(name)

    if intervals.size:
        summary.update(analysis.interval_summary(intervals))
    summary["epoch_count"] = len(epochs)
    summary["epochs_dropped"] = dropped

    for a in analysis.ANALYSES:
        if a not in todo:
            continue
        if a == "hist":
            trunc = args.hist_trunc_s if args.hist_trunc_s > 0 else None
            emit("histogram.csv", analysis.histogram_table(intervals, args.hist_bin_s, trunc))
        elif a == "acf":
            emit("acf.csv", analysis.acf_table(intervals, args.max_lag, args.trim_pct))
        elif a == "epochs":
            if not epochs:
                raise DegenerateInputError("no complete epochs")
            emit("epochs.csv", analysis.epochs_table(epochs))
        elif a == "halfsplit":
            if len(epochs) < 2:
                raise DegenerateInputError("half-split needs at least two complete epochs")
            res = stats.half_split_analysis(epochs, args.epoch_blocks)
            emit("halfsplit.csv", analysis.halfsplit_table(res))
            header, rows = analysis.halfsplit_table(res)
            summary["halfsplit"] = {k: _num(v) if isinstance(v, float) else v for k, v in zip(header, rows[0])}
        elif a == "entropy":
            emit("entropy_hist.csv", analysis.entropy_table(
                intervals, args.entropy_bin, args.entropy_rate, args.epoch_blocks))
        elif a == "forks":
            emit("fork_segments.csv", analysis.fork_segments_table(fork_heights, durations, args.segments))
        elif a == "survival":
            emit("survival.csv", analysis.survival_table(durations, args.survival_grid))
            emit("survival_segments.csv",
                 analysis.survival_segments_table(fork_heights, durations, args.segments, args.survival_grid))
    if durations.size:
        summary["fork_count"] = int(durations.size)
        summary["max_fork_duration_s"] = float(durations.max())
    summary["files"] = sorted(written)
    _dump_json(out(ANALYSIS_SUMMARY), {k: _num(v) if isinstance(v, float) else v for k, v in summary.items()})
    if not os.path.exists(out(MANIFEST)):
        _dump_json(out(MANIFEST), {
            "kind": "analyze",
            "version": __version__,
            "inputs": {os.path.basename(p): _sha256(p) for p in args.inputs},
        })
    print(f"wrote {', '.join(sorted(written)) or 'nothing'} to {args.out}")
    return EXIT_OK


# -- report ------------------------------------------------------------------

REPORT_KEYS = ("mean_interval_s", "implied_rate_per_s", "epoch_count", "halfsplit_p_value", "fork_count",
               "max_fork_duration_s")


def _fmt_report(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.10g}"


def cmd_report(args) -> int:
    mpath = os.path.join(args.dir, MANIFEST)
    if not os.path.isfile(mpath):
        print(f"error: no {MANIFEST} in {args.dir}", file=sys.stderr)
        return EXIT_USAGE
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    values = dict(manifest.get("summary", {}))
    apath = os.path.join(args.dir, ANALYSIS_SUMMARY)
    if os.path.isfile(apath):
        with open(apath, encoding="utf-8") as fh:
            a = json.load(fh)
        values.update({k: v for k, v in a.items() if k in REPORT_KEYS})
        if "halfsplit" in a:
            values["halfsplit_p_value"] = a["halfsplit"].get("p_value")
    lines = [f"kind={manifest.get('kind', 'NA')}"]
    if "config_hash" in manifest:
        lines.append(f"config_hash={manifest['config_hash']}")
    lines += [f"{k}={_fmt_report(values.get(k))}" for k in REPORT_KEYS]
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="powtime", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation campaign from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--replications", type=int)
    s.add_argument("--workers", type=int, default=1, help="parallel processes for replications")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="compute tables from arrival, interval or fork CSVs")
    a.add_argument("inputs", nargs="+", help="CSV files; kind is detected from the header")
    a.add_argument("--out", required=True)
    a.add_argument("--analyses", help=f"comma list from {','.join(analysis.ANALYSES)}")
    a.add_argument("--max-lag", type=int, default=20)
    a.add_argument("--trim-pct", type=float, default=1.0)
    a.add_argument("--hist-trunc-s", type=float, default=3000.0, help="0 disables truncation")
    a.add_argument("--hist-bin-s", type=float, default=60.0)
    a.add_argument("--entropy-bin", type=float, default=0.02)
    a.add_argument("--entropy-rate", choices=("global", "epoch"), default="global")
    a.add_argument("--segments", type=int, default=3)
    a.add_argument("--survival-grid", choices=("unique", "log"), default="unique")
    a.add_argument("--epoch-blocks", type=int, default=2016)
    a.add_argument("--relative-epochs", action="store_true",
                   help="align epochs to the first height instead of multiples of the epoch length")
    a.add_argument("--time-source", choices=("arrival", "timestamp"), default="arrival")
    a.add_argument("--strict", action="store_true", help="treat data diagnostics as errors")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="print a fixed-order summary of an artifact directory")
    r.add_argument("dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        field = f" [{exc.field}]" if getattr(exc, "field", None) else ""
        print(f"error{field}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EmptyInput, DegenerateInputError) as exc:
        print(f"error: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
