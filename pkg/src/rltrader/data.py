"""Price-series ingestion and OHLC resampling.

The engine consumes nothing but ``timestamp,price`` rows. Everything that
needs candlesticks gets them from :func:`resample_bars`.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, OrderingError, ParseError

SECONDS_PER_DAY = 86_400


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def parse_timestamp(text: str) -> int:
    """ISO-8601 text to integer UTC epoch seconds (sub-second part dropped).

    A trailing ``Z`` is accepted; a timestamp without an offset is read as UTC.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def to_datetime(seconds: int) -> datetime:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)


def format_timestamp(seconds: int) -> str:
    return to_datetime(seconds).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class PricePoint:
    timestamp: int
    price: float


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Immutable, strictly time-ordered sequence of prices.

    ``timestamps`` holds UTC epoch seconds as int64.
    """

    timestamps: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        px = np.asarray(self.prices, dtype=np.float64)
        if ts.ndim != 1 or ts.shape != px.shape:
            raise DomainError("timestamps and prices must be 1-D arrays of equal length")
        if len(ts) and not np.all(np.isfinite(px) & (px > 0)):
            raise DomainError("prices must be finite and > 0")
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise OrderingError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "prices", _readonly(px))

    def __len__(self) -> int:
        return len(self.prices)

    def __getitem__(self, i: int) -> PricePoint:
        return PricePoint(int(self.timestamps[i]), float(self.prices[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(
            self.prices, other.prices
        )

    @classmethod
    def from_points(cls, points: Iterable[PricePoint | tuple]) -> "PriceSeries":
        pts = [p if isinstance(p, PricePoint) else PricePoint(*p) for p in points]
        return cls(
            np.array([p.timestamp for p in pts], dtype=np.int64),
            np.array([p.price for p in pts], dtype=np.float64),
        )


def _open_text(source) -> tuple[io.TextIOBase, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def load_price_series(source) -> PriceSeries:
    """Read a ``timestamp,price`` CSV into a :class:`PriceSeries`.

    ``source`` may be a path, raw bytes, or a text/binary stream. Errors carry
    the 1-based file line number (the header is line 1).
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected header 'timestamp,price'", line=1)
        cols = [h.strip().lower() for h in header]
        if "timestamp" not in cols or "price" not in cols:
            raise ParseError(f"header must contain 'timestamp' and 'price', got {header!r}", line=1)
        i_ts, i_px = cols.index("timestamp"), cols.index("price")

        stamps: list[int] = []
        prices: list[float] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise ParseError(f"expected {len(cols)} fields, got {len(row)}", line=line)
            try:
                t = parse_timestamp(row[i_ts])
            except ValueError as exc:
                raise ParseError(f"bad timestamp {row[i_ts]!r}: {exc}", line=line) from None
            try:
                p = float(row[i_px])
            except ValueError:
                raise ParseError(f"bad price {row[i_px]!r}", line=line) from None
            if not math.isfinite(p):
                raise ParseError(f"non-finite price {row[i_px]!r}", line=line)
            if p <= 0:
                raise DomainError(f"line {line}: price must be > 0, got {p!r}")
            if stamps and t <= stamps[-1]:
                raise OrderingError(
                    f"timestamp {row[i_ts].strip()} is not after the previous row", line=line
                )
            stamps.append(t)
            prices.append(p)
    finally:
        if owned:
            fh.close()
    if not prices:
        raise ParseError("no data rows")
    return PriceSeries(np.array(stamps, dtype=np.int64), np.array(prices, dtype=np.float64))


def write_price_csv(path, series: PriceSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "price"])
        for t, p in zip(series.timestamps, series.prices):
            w.writerow([format_timestamp(int(t)), repr(float(p))])


@dataclass(frozen=True)
class Bar:
    open: float
    high: float
    low: float
    close: float
    start: int  # UTC epoch seconds
    duration: int  # seconds

    def __post_init__(self):
        if not (self.low <= self.open <= self.high and self.low <= self.close <= self.high):
            raise DomainError(f"inconsistent OHLC: {self}")

    @property
    def start_datetime(self) -> datetime:
        return to_datetime(self.start)


@dataclass(frozen=True, eq=False)
class BarArray:
    """Column view of a bar sequence, used by the vectorised indicators."""

    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    start: np.ndarray
    duration: int = field(default=SECONDS_PER_DAY)

    def __len__(self) -> int:
        return len(self.close)

    def __getitem__(self, i: int) -> Bar:
        return Bar(
            float(self.open[i]), float(self.high[i]), float(self.low[i]),
            float(self.close[i]), int(self.start[i]), int(self.duration),
        )

    def to_bars(self) -> list[Bar]:
        return [self[i] for i in range(len(self))]

    @classmethod
    def from_bars(cls, bars: Sequence[Bar]) -> "BarArray":
        if isinstance(bars, BarArray):
            return bars
        return cls(
            np.array([b.open for b in bars], dtype=float),
            np.array([b.high for b in bars], dtype=float),
            np.array([b.low for b in bars], dtype=float),
            np.array([b.close for b in bars], dtype=float),
            np.array([b.start for b in bars], dtype=np.int64),
            int(bars[0].duration) if len(bars) else SECONDS_PER_DAY,
        )


def _duration_seconds(duration) -> int:
    if isinstance(duration, timedelta):
        duration = duration.total_seconds()
    d = int(duration)
    if d <= 0 or d != duration:
        raise DomainError(f"bar duration must be a positive whole number of seconds, got {duration!r}")
    return d


def resample_bars_array(series: PriceSeries, duration=SECONDS_PER_DAY) -> BarArray:
    """Resample into epoch-aligned bars of ``duration`` seconds; empty intervals are skipped."""
    dur = _duration_seconds(duration)
    if len(series) == 0:
        raise DomainError("cannot resample an empty series")
    bucket = np.floor_divide(series.timestamps, dur)
    starts = np.flatnonzero(np.r_[True, bucket[1:] != bucket[:-1]])
    ends = np.r_[starts[1:], len(bucket)] - 1
    px = series.prices
    return BarArray(
        open=px[starts].copy(),
        high=np.maximum.reduceat(px, starts),
        low=np.minimum.reduceat(px, starts),
        close=px[ends].copy(),
        start=bucket[starts] * dur,
        duration=dur,
    )


def resample_bars(series: PriceSeries, duration=SECONDS_PER_DAY) -> list[Bar]:
    return resample_bars_array(series, duration).to_bars()
