"""Figure-ready tables built from interval and fork data.

Each ``*_table`` function returns ``(header, rows)``; :func:`write_table`
writes one to CSV. Column contracts:

========================  ===================================================
histogram.csv             bin_left,bin_right,count,density,fitted_density
acf.csv                   lag,rho
epochs.csv                epoch_index,start_height,epoch_mean_s,early_mean_s,
                          late_mean_s,difficulty,implied_hashrate
halfsplit.csv             one row of HalfSplitResult fields
entropy_hist.csv          bin_left,bin_right,count,density
fork_segments.csv         segment,n_forks,first_height,last_height,
                          mean_duration_s,max_duration_s
survival.csv              tau,survival
survival_segments.csv     segment,tau,survival
========================  ===================================================
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import entropy, stats
from .mining_core import estimate_hashrate
from .stats import EpochRecord, HalfSplitResult

ANALYSES = ("hist", "acf", "epochs", "halfsplit", "entropy", "forks", "survival")
INTERVAL_ANALYSES = ("hist", "acf", "epochs", "halfsplit", "entropy")
FORK_ANALYSES = ("forks", "survival")

Table = Tuple[List[str], List[list]]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, table: Table) -> None:
    header, rows = table
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def histogram_table(intervals, bin_width: float = 60.0, truncate: Optional[float] = 3000.0) -> Table:
    """Interval histogram with the exponential density at rate 1/mean.

    The rate is estimated from the full sample; ``truncate`` only limits the
    displayed range. ``fitted_density`` is evaluated at bin midpoints.
    """
    x = np.asarray(intervals, dtype=float)
    rate = 1.0 / stats.sample_mean(x)
    hi = truncate if truncate is not None else float(x.max())
    left, right, counts, dens = stats.histogram(x, bin_width, 0.0, hi)
    mid = 0.5 * (left + right)
    fitted = rate * np.exp(-rate * mid)
    rows = [[a, b, int(c), d, f] for a, b, c, d, f in zip(left, right, counts, dens, fitted)]
    return ["bin_left", "bin_right", "count", "density", "fitted_density"], rows


def acf_table(intervals, max_lag: int = 20, trim_pct: float = 1.0) -> Table:
    x = stats.trim_percentiles(np.asarray(intervals, dtype=float), trim_pct, trim_pct)
    return ["lag", "rho"], [[k, r] for k, r in stats.autocorrelation(x, max_lag)]


def epochs_table(epochs: Sequence[EpochRecord]) -> Table:
    rows = []
    for e in epochs:
        hr = estimate_hashrate(e.difficulty, e.epoch_mean) if e.difficulty and e.epoch_mean > 0 else None
        rows.append([e.epoch_index, e.start_height, e.epoch_mean, e.early_mean, e.late_mean,
                     e.difficulty, hr])
    header = ["epoch_index", "start_height", "epoch_mean_s", "early_mean_s", "late_mean_s",
              "difficulty", "implied_hashrate"]
    return header, rows


def halfsplit_table(result: HalfSplitResult) -> Table:
    d = asdict(result)
    return list(d), [list(d.values())]


def entropy_table(intervals, bin_width: float = 0.02, rate_mode: str = "global",
                  epoch_length: Optional[int] = None) -> Table:
    x = np.asarray(intervals, dtype=float)
    rates = entropy.interval_rates(x, rate_mode, epoch_length)
    _, h = entropy.discovery_entropy_arrays(x, rates)
    left, right, counts, dens = stats.histogram(h, bin_width, 0.0, 1.0)
    return ["bin_left", "bin_right", "count", "density"], [
        [a, b, int(c), d] for a, b, c, d in zip(left, right, counts, dens)]


def _thresholds(durations, grid: str):
    if grid == "log":
        return np.concatenate([[0.0], stats.log_thresholds(durations)])
    return None


def survival_table(durations, grid: str = "unique") -> Table:
    curve = stats.empirical_survival(durations, _thresholds(durations, grid))
    return ["tau", "survival"], [[t, s] for t, s in curve]


def fork_segments(heights, durations, k: int = 3):
    h_parts = stats.split_consecutive(heights, k)
    d_parts = stats.split_consecutive(durations, k)
    return list(zip(h_parts, d_parts))


def fork_segments_table(heights, durations, k: int = 3) -> Table:
    rows = []
    for i, (h, d) in enumerate(fork_segments(heights, durations, k)):
        if d.size == 0:
            rows.append([i, 0, None, None, None, None])
            continue
        rows.append([i, int(d.size), int(h[0]), int(h[-1]), float(d.mean()), float(d.max())])
    return ["segment", "n_forks", "first_height", "last_height", "mean_duration_s", "max_duration_s"], rows


def survival_segments_table(heights, durations, k: int = 3, grid: str = "unique") -> Table:
    rows = []
    for i, (_, d) in enumerate(fork_segments(heights, durations, k)):
        if d.size == 0:
            continue
        for t, s in stats.empirical_survival(d, _thresholds(d, grid)):
            rows.append([i, t, s])
    return ["segment", "tau", "survival"], rows


def interval_summary(intervals) -> dict:
    x = np.asarray(intervals, dtype=float)
    m = stats.sample_mean(x)
    return {
        "n_intervals": int(x.size),
        "mean_interval_s": m,
        "sd_interval_s": float(x.std(ddof=1)) if x.size > 1 else math.nan,
        "implied_rate_per_s": 1.0 / m if m > 0 else math.nan,
    }
