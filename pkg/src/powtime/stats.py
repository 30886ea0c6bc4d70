"""Estimators for inter-arrival and fork-duration data.

All functions take plain sequences or numpy arrays of seconds. The small
record types below carry results that are serialised to CSV by the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from .errors import DegenerateInputError, DomainError, ValidationError

SIMULATED = "simulated"
INGESTED = "ingested"


@dataclass
class IntervalSeries:
    values: np.ndarray
    origin: str = SIMULATED

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DomainError("interval series must be one-dimensional")
        if self.values.size and (np.any(self.values < 0) or np.any(np.isnan(self.values))):
            raise DomainError("intervals must be nonnegative")

    def __len__(self):
        return self.values.size


@dataclass
class EpochRecord:
    epoch_index: int
    intervals: np.ndarray
    difficulty: Optional[float] = None
    start_height: Optional[int] = None

    def __post_init__(self):
        self.intervals = np.asarray(self.intervals, dtype=float)

    @property
    def half(self) -> int:
        return self.intervals.size // 2

    @property
    def early_mean(self) -> float:
        return float(self.intervals[:self.half].mean())

    @property
    def late_mean(self) -> float:
        return float(self.intervals[-self.half:].mean())

    @property
    def epoch_mean(self) -> float:
        return float(self.intervals.mean())


@dataclass(frozen=True)
class HalfSplitResult:
    n_epochs: int
    mean_early: float
    mean_late: float
    mean_paired_diff: float
    ci95_low: float
    ci95_high: float
    frac_late_shorter: float
    t_statistic: float
    p_value: float
    degenerate: bool = False


@dataclass
class SurvivalCurve:
    thresholds: np.ndarray
    survival: np.ndarray

    def __iter__(self):
        return iter(zip(self.thresholds.tolist(), self.survival.tolist()))


def _values(s) -> np.ndarray:
    if isinstance(s, IntervalSeries):
        return s.values
    return np.asarray(s, dtype=float)


def sample_mean(s) -> float:
    x = _values(s)
    if x.size == 0:
        raise DomainError("sample mean of an empty series")
    return float(math.fsum(x.tolist()) / x.size)


def _rank_bounds(n: int, lower_pct: float, upper_pct: float) -> Tuple[int, int]:
    # exact rational arithmetic so 1% of 100 is exactly 1
    lo = Fraction(str(lower_pct)) * n / 100
    hi = Fraction(100 - Fraction(str(upper_pct))) * n / 100
    lo_rank = math.floor(lo) + 1
    hi_rank = max(math.ceil(hi), 1)
    return lo_rank, hi_rank


def trim_percentiles(s, lower_pct: float = 1.0, upper_pct: float = 1.0):
    """Drop values outside the ``[lower_pct, 100 - upper_pct]`` percentile band.

    Percentiles use the nearest-rank rule. The upper cutoff is the order
    statistic of rank ``ceil((100 - upper_pct) n / 100)``; the lower cutoff
    applies the same rule from the top of the sample, i.e. rank
    ``floor(lower_pct n / 100) + 1``, so both tails lose the same number of
    points for equal percentages. Values strictly outside the two cutoffs
    are removed; survivors keep their original order.

    Returns the same type as the input (``IntervalSeries`` or ndarray).
    """
    if lower_pct < 0 or upper_pct < 0 or lower_pct + upper_pct >= 100:
        raise DomainError(f"invalid trim bounds lower={lower_pct!r} upper={upper_pct!r}")
    x = _values(s)
    if x.size:
        lo_rank, hi_rank = _rank_bounds(x.size, lower_pct, upper_pct)
        srt = np.sort(x)
        lo_v, hi_v = srt[lo_rank - 1], srt[hi_rank - 1]
        x = x[(x >= lo_v) & (x <= hi_v)]
    if isinstance(s, IntervalSeries):
        return IntervalSeries(x, s.origin)
    return x


def autocorrelation(s, max_lag: int = 20) -> List[Tuple[int, float]]:
    """Sample autocorrelation at lags ``1..max_lag``.

    Numerator sums the ``N - k`` centred lagged products; the denominator is
    the full centred sum of squares, so ``rho(0) == 1``.
    """
    x = _values(s)
    if max_lag < 1 or x.size <= max_lag:
        raise DomainError(f"need series length > max_lag >= 1 (length {x.size}, max_lag {max_lag})")
    c = x - x.mean()
    denom = float(np.dot(c, c))
    if denom == 0.0 or not np.any(c):
        raise DegenerateInputError("constant series has no autocorrelation")
    return [(k, float(np.dot(c[:-k], c[k:]) / denom)) for k in range(1, max_lag + 1)]


def empirical_survival(durations, thresholds=None) -> SurvivalCurve:
    """Fraction of durations at least as large as each threshold.

    ``thresholds`` defaults to the sorted unique durations (an exact step
    curve). They must be ascending and nonnegative.
    """
    d = np.sort(np.asarray(durations, dtype=float))
    if d.size == 0:
        raise DomainError("survival function of an empty sample")
    if thresholds is None:
        th = np.unique(d)
    else:
        th = np.asarray(thresholds, dtype=float)
        if th.size and (np.any(th < 0) or np.any(np.diff(th) < 0)):
            raise DomainError("thresholds must be ascending and nonnegative")
    # count of d >= tau is n minus the count strictly below tau
    below = np.searchsorted(d, th, side="left")
    return SurvivalCurve(th, (d.size - below) / d.size)


def log_thresholds(durations, n: int = 50) -> np.ndarray:
    """Log-spaced threshold grid spanning the positive durations."""
    d = np.asarray(durations, dtype=float)
    pos = d[d > 0]
    if pos.size == 0:
        return np.array([0.0])
    return np.geomspace(pos.min(), pos.max(), n)


def split_consecutive(values: Sequence, k: int = 3) -> List[np.ndarray]:
    """Split into ``k`` consecutive groups; earlier groups take the remainder."""
    if k < 1:
        raise DomainError("k must be >= 1")
    return np.array_split(np.asarray(values), k)


# -- Student t ---------------------------------------------------------------

def student_t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularised incomplete beta function."""
    if not df > 0:
        raise DomainError("df must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    x = df / (df + t * t)
    tail = 0.5 * float(special.betainc(0.5 * df, 0.5, x))
    return 1.0 - tail if t > 0 else tail


def student_t_ppf(q: float, df: float) -> float:
    if not 0.0 < q < 1.0:
        raise DomainError("quantile must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    hi = 1.0
    while student_t_cdf(hi, df) < max(q, 1 - q):
        hi *= 2.0
    root = optimize.brentq(lambda t: student_t_cdf(t, df) - max(q, 1 - q), 0.0, hi, xtol=1e-13, rtol=1e-14)
    return root if q > 0.5 else -root


def paired_t_test(diffs) -> Tuple[float, float, float, float, bool]:
    """Return ``(t, p_two_sided, ci_low, ci_high, degenerate)`` for paired differences."""
    d = np.asarray(diffs, dtype=float)
    n = d.size
    if n < 2:
        raise DomainError("paired t-test needs at least two pairs")
    m = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return math.nan, 1.0, m, m, True
    se = sd / math.sqrt(n)
    t = m / se
    p = 2.0 * (1.0 - student_t_cdf(abs(t), n - 1))
    half = student_t_ppf(0.975, n - 1) * se
    return t, min(max(p, 0.0), 1.0), m - half, m + half, False


def half_split_analysis(epochs: Sequence[EpochRecord], epoch_length: int = 2016) -> HalfSplitResult:
    """Compare first-half and last-half mean intervals across epochs."""
    if len(epochs) < 2:
        raise DomainError("half-split analysis needs at least two epochs")
    if epoch_length % 2:
        raise ValidationError("epoch_length must be even", field="epoch_length")
    for e in epochs:
        if e.intervals.size != epoch_length:
            raise ValidationError(
                f"epoch {e.epoch_index} has {e.intervals.size} intervals, expected {epoch_length}",
                field="intervals")
    early = np.array([e.early_mean for e in epochs])
    late = np.array([e.late_mean for e in epochs])
    diffs = late - early
    t, p, lo, hi, degenerate = paired_t_test(diffs)
    return HalfSplitResult(
        n_epochs=len(epochs),
        mean_early=float(early.mean()),
        mean_late=float(late.mean()),
        mean_paired_diff=float(diffs.mean()),
        ci95_low=lo,
        ci95_high=hi,
        frac_late_shorter=float(np.mean(diffs < 0)),
        t_statistic=t,
        p_value=p,
        degenerate=degenerate,
    )


def hashrate_ratio(mean_early: float, mean_late: float) -> float:
    """Late/early hashrate ratio implied by half means at fixed difficulty."""
    if not (mean_early > 0 and mean_late > 0):
        raise DomainError("half means must be positive")
    return mean_early / mean_late


# -- goodness of fit ---------------------------------------------------------

def ks_uniform(values) -> float:
    """One-sample Kolmogorov-Smirnov statistic against Uniform(0, 1)."""
    u = np.sort(np.asarray(values, dtype=float))
    n = u.size
    if n == 0:
        raise DomainError("KS statistic of an empty sample")
    if np.any(u < 0) or np.any(u > 1) or np.any(np.isnan(u)):
        raise DomainError("values must lie in [0, 1]")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def ks_exponential(values, rate: float) -> float:
    """KS statistic of ``values`` against Exp(rate), via the probability integral transform."""
    x = np.asarray(values, dtype=float)
    return ks_uniform(-np.expm1(-rate * x))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DomainError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def histogram(values, bin_width: float, lo: float = 0.0, hi: Optional[float] = None):
    """Fixed-width histogram over ``[lo, hi]``; values outside are dropped.

    Returns ``(left_edges, right_edges, counts, density)`` where density is
    normalised over the retained values, so it integrates to one.
    """
    x = np.asarray(values, dtype=float)
    if not bin_width > 0:
        raise DomainError("bin width must be positive")
    if hi is None:
        hi = float(x.max()) if x.size else lo + bin_width
    nbins = max(int(math.ceil((hi - lo) / bin_width - 1e-9)), 1)
    edges = lo + bin_width * np.arange(nbins + 1)
    edges[-1] = max(edges[-1], hi)
    kept = x[(x >= lo) & (x <= hi)]
    counts, _ = np.histogram(kept, bins=edges)
    widths = np.diff(edges)
    total = counts.sum()
    density = counts / (total * widths) if total else np.zeros_like(widths)
    return edges[:-1], edges[1:], counts, density
