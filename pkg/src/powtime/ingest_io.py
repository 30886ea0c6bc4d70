"""Reading and validating block-arrival and fork-duration CSV files.

Input is comma-delimited UTF-8 text with a header row; lines starting with
``#`` are ignored. Problems that do not prevent parsing (height gaps,
duplicate heights, clock regressions, unsorted fork heights) are collected
as :class:`Diagnostic` records instead of being silently repaired. With
``strict=True`` the first such problem raises :class:`ParseError`.

Diagnostics render as ``LEVEL line=N code=<name> detail=<text>``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, TextIO, Tuple

import numpy as np

from .difficulty import EpochPolicy
from .errors import DomainError, ParseError, ValidationError
from .stats import INGESTED, EpochRecord, IntervalSeries

WARN = "WARN"
ERROR = "ERROR"
INFO = "INFO"


@dataclass(frozen=True)
class Diagnostic:
    level: str
    line: int
    code: str
    detail: str

    def format(self) -> str:
        return f"{self.level} line={self.line} code={self.code} detail={self.detail}"

    __str__ = format


@dataclass(frozen=True)
class ArrivalFormat:
    height_col: str = "height"
    time_col: str = "arrival_time"
    difficulty_col: Optional[str] = "difficulty"
    #: "arrival" for node-observed times, "timestamp" for header timestamps
    time_source: str = "arrival"


@dataclass(frozen=True)
class ForkFormat:
    height_col: str = "height"
    duration_col: str = "duration"


@dataclass
class ArrivalDataset:
    heights: np.ndarray
    times: np.ndarray
    lines: np.ndarray
    difficulties: Optional[np.ndarray] = None
    diagnostics: List[Diagnostic] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)

    def __len__(self):
        return int(self.heights.size)

    def __eq__(self, other):
        if not isinstance(other, ArrivalDataset):
            return NotImplemented
        same_d = (self.difficulties is None) == (other.difficulties is None) and (
            self.difficulties is None or np.array_equal(self.difficulties, other.difficulties))
        return (np.array_equal(self.heights, other.heights) and np.array_equal(self.times, other.times)
                and same_d)


@dataclass
class ForkDataset:
    heights: np.ndarray
    durations: np.ndarray
    lines: np.ndarray
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def __len__(self):
        return int(self.durations.size)


@dataclass
class IntervalExtraction:
    """Successive differences of an arrival dataset with exclusion accounting.

    ``start_heights[i]`` is the height of the block that opens interval i.
    Each adjacent row pair is counted exactly once in ``usable`` or one of
    the ``excluded`` buckets.
    """

    start_heights: np.ndarray
    values: np.ndarray
    end_difficulties: Optional[np.ndarray]
    excluded: Dict[str, int]
    diagnostics: List[Diagnostic]

    @property
    def usable(self) -> int:
        return int(self.values.size)

    @property
    def pairs(self) -> int:
        return self.usable + sum(self.excluded.values())


@dataclass
class EpochGrouping:
    epochs: List[EpochRecord]
    dropped: int

    def __len__(self):
        return len(self.epochs)

    def __iter__(self) -> Iterator[EpochRecord]:
        return iter(self.epochs)

    def __getitem__(self, i):
        return self.epochs[i]


def _rows(stream: TextIO) -> Iterator[Tuple[int, List[str]]]:
    """Yield ``(line_number, fields)`` skipping blank and ``#`` lines."""
    for lineno, raw in enumerate(stream, 1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        yield lineno, next(csv.reader([text]))


def _header(rows, required: Iterable[str]):
    first = next(rows, None)
    if first is None:
        return None
    lineno, names = first
    names = [n.strip() for n in names]
    missing = [c for c in required if c not in names]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", line=lineno)
    return {n: i for i, n in enumerate(names)}


def _field(fields, idx, lineno, name):
    if idx >= len(fields):
        raise ParseError(f"row has {len(fields)} fields, column {name!r} missing", line=lineno)
    return fields[idx].strip()


def _parse_int(text, lineno, name) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{name} {text!r} is not numeric", line=lineno) from None
    if not v.is_integer():
        raise ParseError(f"{name} {text!r} is not an integer", line=lineno)
    return int(v)


def _parse_float(text, lineno, name) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{name} {text!r} is not numeric", line=lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"{name} {text!r} is not finite", line=lineno)
    return v


def _emit(diags: List[Diagnostic], diag: Diagnostic, strict: bool) -> None:
    if strict:
        raise ParseError(f"{diag.code}: {diag.detail}", line=diag.line)
    diags.append(diag)


def parse_arrivals(stream: TextIO, fmt: ArrivalFormat = ArrivalFormat(), strict: bool = False) -> ArrivalDataset:
    """Parse ``height,arrival_time`` rows (extra columns are ignored).

    A ``difficulty`` column, when present under ``fmt.difficulty_col``, is
    carried along for epoch tables.
    """
    rows = _rows(stream)
    cols = _header(rows, (fmt.height_col, fmt.time_col))
    diags: List[Diagnostic] = []
    meta = {"time_source": fmt.time_source}
    if cols is None:
        diags.append(Diagnostic(WARN, 0, "empty", "no header row"))
        empty = np.array([], dtype=np.int64)
        return ArrivalDataset(empty, np.array([]), empty.copy(), None, diags, meta)
    hi, ti = cols[fmt.height_col], cols[fmt.time_col]
    di = cols.get(fmt.difficulty_col) if fmt.difficulty_col else None

    heights, times, lines, diffs = [], [], [], []
    for lineno, fields in rows:
        h = _parse_int(_field(fields, hi, lineno, fmt.height_col), lineno, fmt.height_col)
        t = _parse_float(_field(fields, ti, lineno, fmt.time_col), lineno, fmt.time_col)
        if di is not None:
            diffs.append(_parse_float(_field(fields, di, lineno, fmt.difficulty_col), lineno,
                                      fmt.difficulty_col))
        if heights:
            ph, pt = heights[-1], times[-1]
            if h == ph:
                _emit(diags, Diagnostic(WARN, lineno, "duplicate", f"duplicate height {h}"), strict)
            elif h != ph + 1:
                _emit(diags, Diagnostic(WARN, lineno, "gap", f"gap at height {h}"), strict)
            if t < pt:
                _emit(diags, Diagnostic(WARN, lineno, "regression",
                                        f"time regression at height {h} ({t!r} < {pt!r})"), strict)
        heights.append(h)
        times.append(t)
        lines.append(lineno)
    return ArrivalDataset(
        np.array(heights, dtype=np.int64), np.array(times, dtype=float), np.array(lines, dtype=np.int64),
        np.array(diffs, dtype=float) if di is not None else None, diags, meta)


def read_arrivals(path, fmt: ArrivalFormat = ArrivalFormat(), strict: bool = False) -> ArrivalDataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_arrivals(fh, fmt, strict)


def extract_intervals(d: ArrivalDataset) -> IntervalExtraction:
    """Differences between adjacent rows whose heights differ by exactly one.

    Pairs across a gap or duplicate height, and pairs whose difference is
    negative, are excluded and counted.
    """
    h, t = d.heights, d.times
    excluded = {"gap": 0, "duplicate": 0, "regression": 0}
    diags: List[Diagnostic] = []
    if h.size < 2:
        return IntervalExtraction(h[:0], t[:0], None, excluded, diags)
    dh = np.diff(h)
    dt = np.diff(t)
    dup = dh == 0
    gap = (dh != 1) & ~dup
    reg = (dh == 1) & (dt < 0)
    ok = (dh == 1) & (dt >= 0)
    excluded["duplicate"] = int(dup.sum())
    excluded["gap"] = int(gap.sum())
    excluded["regression"] = int(reg.sum())
    for i in np.flatnonzero(reg):
        diags.append(Diagnostic(WARN, int(d.lines[i + 1]), "regression",
                                f"interval ending at height {int(h[i + 1])} excluded"))
    end_d = d.difficulties[1:][ok] if d.difficulties is not None else None
    return IntervalExtraction(h[:-1][ok], dt[ok], end_d, excluded, diags)


def to_intervals(d: ArrivalDataset) -> IntervalSeries:
    ex = extract_intervals(d)
    if ex.usable < 1:
        raise DomainError("fewer than two usable contiguous rows")
    return IntervalSeries(ex.values, INGESTED)


def to_epochs(d: ArrivalDataset, policy: EpochPolicy = EpochPolicy(), relative: bool = False) -> EpochGrouping:
    """Group intervals into complete difficulty epochs.

    Interval i belongs to the epoch containing its opening height. With the
    default protocol alignment, epochs open at heights divisible by
    ``blocks_per_epoch``; ``relative=True`` aligns to the first height in
    the dataset instead. Epochs missing any interval are dropped and counted.
    """
    ex = extract_intervals(d)
    n = policy.blocks_per_epoch
    if ex.usable == 0:
        return EpochGrouping([], 0)
    offset = int(d.heights[0]) if relative else 0
    keys = (ex.start_heights - offset) // n
    records, dropped = [], 0
    bounds = np.flatnonzero(np.diff(keys)) + 1
    for idx in np.split(np.arange(keys.size), bounds):
        if idx.size != n:
            dropped += 1
            continue
        k = int(keys[idx[0]])
        diff = float(ex.end_difficulties[idx[0]]) if ex.end_difficulties is not None else None
        records.append(EpochRecord(k, ex.values[idx], difficulty=diff, start_height=k * n + offset))
    return EpochGrouping(records, dropped)


def parse_intervals(stream: TextIO, column: str = "interval_s") -> IntervalSeries:
    rows = _rows(stream)
    cols = _header(rows, (column,))
    if cols is None:
        return IntervalSeries(np.array([]), INGESTED)
    ci = cols[column]
    vals = []
    for lineno, fields in rows:
        v = _parse_float(_field(fields, ci, lineno, column), lineno, column)
        if v < 0:
            raise ValidationError(f"line {lineno}: negative interval {v!r}", field=column)
        vals.append(v)
    return IntervalSeries(np.array(vals), INGESTED)


def parse_forks(stream: TextIO, fmt: ForkFormat = ForkFormat(), strict: bool = False) -> ForkDataset:
    rows = _rows(stream)
    cols = _header(rows, (fmt.height_col, fmt.duration_col))
    diags: List[Diagnostic] = []
    empty = np.array([], dtype=np.int64)
    if cols is None:
        diags.append(Diagnostic(WARN, 0, "empty", "no header row"))
        return ForkDataset(empty, np.array([]), empty.copy(), diags)
    hi, di = cols[fmt.height_col], cols[fmt.duration_col]
    heights, durs, lines = [], [], []
    for lineno, fields in rows:
        h = _parse_int(_field(fields, hi, lineno, fmt.height_col), lineno, fmt.height_col)
        v = _parse_float(_field(fields, di, lineno, fmt.duration_col), lineno, fmt.duration_col)
        if v < 0:
            raise ParseError(f"negative fork duration {v!r}", line=lineno, field=fmt.duration_col)
        if heights and h <= heights[-1]:
            code = "duplicate" if h == heights[-1] else "unsorted"
            _emit(diags, Diagnostic(WARN, lineno, code, f"height {h} after {heights[-1]}"), strict)
        heights.append(h)
        durs.append(v)
        lines.append(lineno)
    h = np.array(heights, dtype=np.int64)
    order = np.argsort(h, kind="stable")
    return ForkDataset(h[order], np.array(durs, dtype=float)[order],
                       np.array(lines, dtype=np.int64)[order], diags)


def read_forks(path, fmt: ForkFormat = ForkFormat(), strict: bool = False) -> ForkDataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_forks(fh, fmt, strict)


# -- writers -----------------------------------------------------------------

def write_arrivals(d: ArrivalDataset, stream: TextIO, fmt: ArrivalFormat = ArrivalFormat()) -> None:
    w = csv.writer(stream, lineterminator="\n")
    with_d = d.difficulties is not None and fmt.difficulty_col
    w.writerow([fmt.height_col, fmt.time_col] + ([fmt.difficulty_col] if with_d else []))
    for i in range(len(d)):
        row = [int(d.heights[i]), repr(float(d.times[i]))]
        if with_d:
            row.append(repr(float(d.difficulties[i])))
        w.writerow(row)


def arrivals_to_text(d: ArrivalDataset, fmt: ArrivalFormat = ArrivalFormat()) -> str:
    buf = io.StringIO()
    write_arrivals(d, buf, fmt)
    return buf.getvalue()


def write_forks(d: ForkDataset, stream: TextIO, fmt: ForkFormat = ForkFormat()) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow([fmt.height_col, fmt.duration_col])
    for h, v in zip(d.heights.tolist(), d.durations.tolist()):
        w.writerow([h, repr(v)])
