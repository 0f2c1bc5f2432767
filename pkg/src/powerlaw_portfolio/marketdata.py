"""Price panels, returns and time buckets.

A price file is delimiter-separated text: a header row of symbols after a
leading date column, ISO-8601 dates in the first column, decimal prices
elsewhere, and empty cells for missing values.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError, ParseError, ValidationError

DEFAULT_PERIODS_PER_YEAR = 252
DEFAULT_MIN_OBS = 30


def _to_date(value) -> dt.date:
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").astype(dt.date)
    return dt.date.fromisoformat(str(value).strip())


@dataclass(frozen=True)
class PriceTable:
    """Dated price panel; ``prices[t, i]`` is NaN where symbol ``i`` is unobserved."""

    dates: np.ndarray  # datetime64[D], strictly increasing
    symbols: tuple
    prices: np.ndarray  # (T, N) float
    warnings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "dates", np.asarray(self.dates, dtype="datetime64[D]"))
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        prices = np.asarray(self.prices, dtype=float)
        if prices.ndim != 2:
            raise ValidationError("prices must be a 2-d grid")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if prices.shape != (len(self.dates), len(self.symbols)):
            raise ValidationError(
                f"price grid shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.symbols)} symbols"
            )

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    @property
    def is_dense(self) -> bool:
        return not np.isnan(self.prices).any()

    def column(self, symbol: str) -> np.ndarray:
        return self.prices[:, self.symbols.index(symbol)]


@dataclass(frozen=True)
class ReturnMatrix:
    returns: np.ndarray  # (T-1, N)
    means: np.ndarray  # (N,)
    period_per_year: int = DEFAULT_PERIODS_PER_YEAR
    kind: str = "arithmetic"
    symbols: tuple = ()
    dates: np.ndarray = field(default_factory=lambda: np.array([], dtype="datetime64[D]"))

    @property
    def n_periods(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    @classmethod
    def from_array(cls, returns, period_per_year=DEFAULT_PERIODS_PER_YEAR, symbols=None):
        """Wrap a raw (T, N) array, e.g. synthetic returns in tests."""
        returns = np.asarray(returns, dtype=float)
        if returns.ndim == 1:
            returns = returns[:, None]
        if symbols is None:
            symbols = tuple(f"X{i}" for i in range(returns.shape[1]))
        return cls(returns, returns.mean(axis=0), period_per_year, "arithmetic", tuple(symbols))


@dataclass(frozen=True)
class BucketSpec:
    """Inclusive calendar window ``[start, end]``."""

    start: dt.date
    end: dt.date
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "start", _to_date(self.start))
        object.__setattr__(self, "end", _to_date(self.end))
        if not self.start < self.end:
            raise ValidationError(f"bucket {self.label!r}: start {self.start} is not before end {self.end}")
        if not self.label:
            object.__setattr__(self, "label", f"{self.start.isoformat()}..{self.end.isoformat()}")

    def mask(self, dates: np.ndarray) -> np.ndarray:
        return (dates >= np.datetime64(self.start)) & (dates <= np.datetime64(self.end))

    def to_dict(self) -> dict:
        return {"label": self.label, "start": self.start.isoformat(), "end": self.end.isoformat()}


def validate_bucket_sequence(buckets: Sequence[BucketSpec]) -> None:
    for a, b in zip(buckets, buckets[1:]):
        if not a.end < b.start:
            raise ValidationError(f"buckets {a.label!r} and {b.label!r} overlap or are out of order")


def calendar_buckets(first, last, years: int) -> list[BucketSpec]:
    """Consecutive buckets of ``years`` calendar years covering ``[first, last]``.

    Buckets start on 1 January of the year of ``first``; the last one is
    truncated at 31 December of its final year.
    """
    first, last = _to_date(first), _to_date(last)
    if years < 1:
        raise ValidationError("bucket length must be at least one year")
    out = []
    year = first.year
    while year <= last.year:
        end_year = year + years - 1
        out.append(BucketSpec(dt.date(year, 1, 1), dt.date(end_year, 12, 31), f"{year}-{end_year}"))
        year += years
    return out


def load_bucket_specs(path) -> tuple[list[BucketSpec], dict | None]:
    """Read buckets (and optional membership lists) from a JSON document.

    Accepted layout::

        {"buckets": [{"label": "2007-2009", "start": "2007-01-01", "end": "2009-12-31"}, ...],
         "membership": {"2007-2009": ["AAA", "BBB"], ...}}

    A bare list of bucket objects is also accepted.
    """
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, list):
        doc = {"buckets": doc}
    try:
        buckets = [BucketSpec(b["start"], b["end"], b.get("label", "")) for b in doc["buckets"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed bucket document {path}: {exc}") from exc
    validate_bucket_sequence(buckets)
    membership = doc.get("membership")
    if membership is not None:
        membership = {str(k): [str(s) for s in v] for k, v in membership.items()}
    return buckets, membership


def parse_bucket_arg(text: str, table: PriceTable | None = None) -> tuple[list[BucketSpec], dict | None]:
    """Interpret the ``--buckets`` flag.

    Either a path to a JSON bucket document, ``calendar:<years>`` (needs
    ``table`` for the date range), or comma-separated ``START:END[:LABEL]``.
    """
    if os.path.exists(text):
        return load_bucket_specs(text)
    if text.startswith("calendar:"):
        if table is None:
            raise ValidationError("calendar buckets need a price table")
        years = int(text.split(":", 1)[1])
        return calendar_buckets(table.dates[0], table.dates[-1], years), None
    buckets = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ValidationError(f"cannot parse bucket {item!r}; expected START:END[:LABEL]")
        try:
            buckets.append(BucketSpec(parts[0], parts[1], parts[2] if len(parts) == 3 else ""))
        except ValueError as exc:
            raise ValidationError(f"cannot parse bucket {item!r}: {exc}") from exc
    if not buckets:
        raise ValidationError("no buckets given")
    validate_bucket_sequence(buckets)
    return buckets, None


def _check_gaps(symbols, prices, allow_leading_gaps=True):
    for j, sym in enumerate(symbols):
        observed = ~np.isnan(prices[:, j])
        n_obs = int(observed.sum())
        if n_obs < 2:
            raise InsufficientDataError(f"symbol {sym!r} has {n_obs} observed prices; at least 2 required")
        idx = np.flatnonzero(observed)
        first, last = idx[0], idx[-1]
        if not allow_leading_gaps and first != 0:
            raise ValidationError(f"symbol {sym!r} has missing prices before its first observation")
        if last - first + 1 != n_obs:
            raise ValidationError(f"symbol {sym!r} has an interior gap: prices resume after missing entries")


def load_price_table(source, delimiter: str = ",", allow_leading_gaps: bool = True) -> PriceTable:
    """Read a price file into a validated :class:`PriceTable`.

    Rows are sorted by date. Row numbers in error messages count data rows
    from 1 (the header is not counted).
    """
    with open(source, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{source}: empty file") from None
        symbols = [h.strip() for h in header[1:]]
        if not symbols:
            raise ValidationError(f"{source}: header names no symbols")
        if len(set(symbols)) != len(symbols):
            raise ValidationError(f"{source}: duplicate symbols in header")
        dates, rows = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"row {row_no}: expected {len(header)} fields, found {len(row)}", row=row_no
                )
            try:
                dates.append(dt.date.fromisoformat(row[0].strip()))
            except ValueError:
                raise ParseError(
                    f"row {row_no}, column 'date': cannot parse date {row[0]!r}", row=row_no, column="date"
                ) from None
            values = []
            for sym, cell in zip(symbols, row[1:]):
                cell = cell.strip()
                if not cell:
                    values.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                    ok = False
                else:
                    ok = math.isfinite(v) and v > 0
                if not ok:
                    raise ParseError(
                        f"row {row_no}, column {sym!r}: invalid price {cell!r}", row=row_no, column=sym
                    )
                values.append(v)
            rows.append(values)
    if len(rows) < 2:
        raise InsufficientDataError(f"{source}: fewer than 2 data rows")
    dates_arr = np.array(dates, dtype="datetime64[D]")
    prices = np.array(rows, dtype=float)
    order = np.argsort(dates_arr, kind="stable")
    dates_arr, prices = dates_arr[order], prices[order]
    dup = np.flatnonzero(np.diff(dates_arr) == np.timedelta64(0, "D"))
    if dup.size:
        raise ValidationError(f"{source}: duplicate date {dates_arr[dup[0]]}")
    _check_gaps(symbols, prices, allow_leading_gaps)
    return PriceTable(dates_arr, tuple(symbols), prices)


def write_price_table(table: PriceTable, path, delimiter: str = ",") -> None:
    """Write ``table`` in the format read by :func:`load_price_table` (temp file, then rename)."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".prices.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(["date", *table.symbols])
            for d, row in zip(table.dates, table.prices):
                w.writerow([str(d), *("" if np.isnan(v) else repr(float(v)) for v in row)])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def apply_delisting_rule(table: PriceTable, bucket: BucketSpec, min_obs: int = DEFAULT_MIN_OBS) -> PriceTable:
    """Restrict ``table`` to ``bucket`` and make every surviving column dense.

    Prices after a symbol's last in-bucket observation are carried forward,
    so the symbol earns 0% until the bucket ends. Prices before its first
    in-bucket observation (late listing) are back-filled the same way.
    Symbols with fewer than ``min_obs`` in-bucket observations are dropped;
    every fill and drop is recorded in ``warnings``.
    """
    mask = bucket.mask(table.dates)
    if not mask.any():
        raise ValidationError(f"bucket {bucket.label!r} has no dates in the price table")
    prices = table.prices[mask]
    keep, notes = [], list(table.warnings)
    out = np.empty_like(prices)
    for j, sym in enumerate(table.symbols):
        col = prices[:, j]
        observed = ~np.isnan(col)
        n_obs = int(observed.sum())
        if n_obs == 0:
            notes.append(f"{bucket.label}: dropped {sym} (no observations in bucket)")
            continue
        if n_obs < min_obs:
            notes.append(f"{bucket.label}: dropped {sym} ({n_obs} observations < {min_obs})")
            continue
        idx = np.flatnonzero(observed)
        first, last = idx[0], idx[-1]
        if last - first + 1 != n_obs:
            raise ValidationError(f"symbol {sym!r} has an interior gap inside bucket {bucket.label!r}")
        filled = col.copy()
        if last < len(col) - 1:
            filled[last + 1:] = col[last]
            notes.append(f"{bucket.label}: {sym} delisted after {table.dates[mask][last]}, carried forward")
        if first > 0:
            filled[:first] = col[first]
            notes.append(f"{bucket.label}: {sym} first observed {table.dates[mask][first]}, back-filled")
        out[:, len(keep)] = filled
        keep.append(sym)
    return PriceTable(table.dates[mask], tuple(keep), out[:, : len(keep)], tuple(notes))


def slice_buckets(
    table: PriceTable,
    buckets: Sequence[BucketSpec],
    membership: Mapping[str, Sequence[str]] | None = None,
    min_obs: int = DEFAULT_MIN_OBS,
) -> list[PriceTable]:
    """Cut ``table`` into one dense table per bucket.

    ``membership`` optionally maps bucket labels to the symbols in that
    bucket's basket; symbols outside it are removed before the delisting rule.
    """
    buckets = list(buckets)
    validate_bucket_sequence(buckets)
    out = []
    for b in buckets:
        sub = table
        if membership is not None and b.label in membership:
            wanted = list(membership[b.label])
            missing = [s for s in wanted if s not in table.symbols]
            cols = [table.symbols.index(s) for s in wanted if s in table.symbols]
            notes = tuple(f"{b.label}: member {s} not in price table" for s in missing)
            sub = PriceTable(table.dates, tuple(table.symbols[c] for c in cols), table.prices[:, cols], notes)
        if not b.mask(sub.dates).any():
            raise ValidationError(f"bucket {b.label!r} has no dates in the price table")
        out.append(apply_delisting_rule(sub, b, min_obs=min_obs))
    return out


def compute_returns(
    table: PriceTable, kind: str = "arithmetic", period_per_year: int = DEFAULT_PERIODS_PER_YEAR
) -> ReturnMatrix:
    """Per-period returns of a dense table; ``kind`` is ``arithmetic`` or ``log``."""
    if kind not in ("arithmetic", "log"):
        raise ValidationError(f"unknown return kind {kind!r}")
    if period_per_year < 1:
        raise ValidationError("period_per_year must be a positive integer")
    p = table.prices
    if np.isnan(p).any():
        raise ValidationError("price table has missing entries; apply the delisting rule first")
    if p.shape[0] < 2:
        raise InsufficientDataError("need at least two dates to form a return")
    if kind == "log":
        if (p <= 0).any():
            raise ValidationError("log returns need strictly positive prices")
        r = np.log(p[1:] / p[:-1])
    else:
        if (p[:-1] == 0).any():
            raise ValidationError("arithmetic returns undefined after a zero price")
        r = (p[1:] - p[:-1]) / p[:-1]
    return ReturnMatrix(r, r.mean(axis=0), int(period_per_year), kind, table.symbols, table.dates[1:])


def reconstruct_prices(first_prices, returns: ReturnMatrix) -> np.ndarray:
    """Invert :func:`compute_returns` given the first row of prices."""
    growth = np.exp(returns.returns) if returns.kind == "log" else 1.0 + returns.returns
    path = np.vstack([np.ones((1, growth.shape[1])), np.cumprod(growth, axis=0)])
    return np.asarray(first_prices, dtype=float)[None, :] * path
