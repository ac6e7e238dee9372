"""Load, validate and resample minute price data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SECONDS_PER_MINUTE = 60


class IngestError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Price path P(t) sampled every ``base_interval`` minutes.

    ``timestamps`` are epoch seconds. ``session_breaks`` holds the index of
    the first sample of every session after the first one, so a break sits
    between samples ``i - 1`` and ``i``.
    """

    timestamps: np.ndarray
    prices: np.ndarray
    session_breaks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    base_interval: int = 1
    dropped_rows: int = 0

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.int64)
        px = _frozen(self.prices, np.float64)
        br = _frozen(self.session_breaks, np.int64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "prices", px)
        object.__setattr__(self, "session_breaks", br)

        if ts.ndim != 1 or ts.shape != px.shape:
            raise IngestError("timestamps and prices must be 1-d arrays of equal length")
        if self.base_interval < 1:
            raise IngestError("base_interval must be a positive number of minutes")
        if np.any(np.diff(ts) <= 0):
            raise IngestError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(px)) or np.any(px <= 0):
            raise IngestError("prices must be finite and positive")
        if br.size:
            if np.any(np.diff(br) <= 0) or br[0] < 1 or br[-1] >= ts.size:
                raise IngestError("session breaks must be increasing interior indices")
            gaps = ts[br] - ts[br - 1]
            if np.any(gaps <= self.base_interval * SECONDS_PER_MINUTE):
                raise IngestError("session break placed where no gap exceeds the base interval")

    def __len__(self):
        return self.prices.size

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return (
            self.base_interval == other.base_interval
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.prices, other.prices)
            and np.array_equal(self.session_breaks, other.session_breaks)
        )

    __hash__ = None

    @property
    def session_ids(self) -> np.ndarray:
        """Session number of every sample."""
        ids = np.zeros(len(self), dtype=np.int64)
        ids[self.session_breaks] = 1
        return np.cumsum(ids)

    def sessions(self):
        """Yield ``(start, stop)`` index ranges of contiguous sessions."""
        bounds = np.concatenate([[0], self.session_breaks, [len(self)]])
        for start, stop in zip(bounds[:-1], bounds[1:]):
            yield int(start), int(stop)

    def without_session_breaks(self) -> "PriceSeries":
        return PriceSeries(self.timestamps, self.prices, base_interval=self.base_interval,
                           dropped_rows=self.dropped_rows)


def detect_session_breaks(timestamps, base_interval=1):
    """Indices whose gap to the previous sample exceeds the base interval."""
    ts = np.asarray(timestamps, dtype=np.int64)
    return np.flatnonzero(np.diff(ts) > base_interval * SECONDS_PER_MINUTE) + 1


@dataclass(frozen=True)
class FormatSpec:
    """Column mapping for delimited price files.

    When ``price`` is None the loader uses ``close`` if present, else ``price``.
    ``timestamp_format`` is ``"auto"``, ``"iso"`` or ``"epoch"`` (seconds).
    """

    timestamp: str = "timestamp"
    price: str | None = None
    timestamp_format: str = "auto"
    delimiter: str = ","
    strict: bool = False
    base_interval: int = 1
    include_cross_session: bool = False


def _parse_timestamps(col: pd.Series, fmt: str) -> np.ndarray:
    if fmt not in ("auto", "iso", "epoch"):
        raise IngestError(f"unknown timestamp format {fmt!r}")
    if fmt == "epoch" or (fmt == "auto" and pd.api.types.is_numeric_dtype(col)):
        vals = pd.to_numeric(col, errors="coerce")
        if vals.isna().any():
            raise IngestError("unparseable epoch timestamps")
        return np.round(vals.to_numpy(dtype=np.float64)).astype(np.int64)
    try:
        parsed = pd.to_datetime(col, utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise IngestError(f"unparseable ISO-8601 timestamps: {exc}") from exc
    return parsed.astype("int64").to_numpy() // 1_000_000_000


def load_prices(path, format_spec: FormatSpec | None = None) -> PriceSeries:
    """Read a delimited file into a canonical :class:`PriceSeries`.

    Rows with missing or non-positive prices are dropped and counted in
    ``dropped_rows``. Duplicate timestamps keep the last record. Gaps larger
    than the base interval become session breaks unless
    ``include_cross_session`` is set.
    """
    spec = format_spec or FormatSpec()
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=spec.delimiter, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc

    price_col = spec.price
    if price_col is None:
        price_col = "close" if "close" in frame.columns else "price"
    for col in (spec.timestamp, price_col):
        if col not in frame.columns:
            raise IngestError(f"column {col!r} not found in {path} (have {list(frame.columns)})")

    prices = pd.to_numeric(frame[price_col], errors="coerce").to_numpy(dtype=np.float64)
    valid = np.isfinite(prices) & (prices > 0)
    dropped = int((~valid).sum())
    if dropped:
        logger.info("dropped %d rows with missing or non-positive prices", dropped)
    if not valid.any():
        raise IngestError(f"no valid price rows in {path}")

    ts = _parse_timestamps(frame[spec.timestamp][valid].reset_index(drop=True), spec.timestamp_format)
    prices = prices[valid]

    if np.any(np.diff(ts) < 0):
        if spec.strict:
            raise IngestError("timestamps are not monotone (strict mode)")
        order = np.argsort(ts, kind="stable")
        ts, prices = ts[order], prices[order]

    # duplicates: keep the last record
    keep = np.ones(ts.size, dtype=bool)
    keep[:-1] = ts[1:] != ts[:-1]
    if not keep.all():
        if spec.strict:
            raise IngestError("duplicate timestamps (strict mode)")
        ts, prices = ts[keep], prices[keep]

    breaks = (np.empty(0, dtype=np.int64) if spec.include_cross_session
              else detect_session_breaks(ts, spec.base_interval))
    return PriceSeries(ts, prices, breaks, spec.base_interval, dropped)


def write_prices(series: PriceSeries, path) -> None:
    """Write ``timestamp,price`` CSV readable by :func:`load_prices`."""
    with open(path, "w", newline="") as fh:
        fh.write("timestamp,price\n")
        for t, p in zip(series.timestamps.tolist(), series.prices.tolist()):
            fh.write(f"{t},{p!r}\n")


def resample(series: PriceSeries, n: int) -> PriceSeries:
    """Keep the last price of every full ``n``-sample bucket within each session.

    The bucket counter restarts at every session break and trailing partial
    buckets are dropped, so no resampled pair straddles a break.
    """
    if int(n) != n or n < 1:
        raise IngestError("resampling factor must be a positive integer")
    n = int(n)
    if n == 1:
        return series

    keep = []
    new_breaks = []
    for start, stop in series.sessions():
        idx = np.arange(start + n - 1, stop, n)
        if idx.size == 0:
            continue
        if keep:
            new_breaks.append(sum(k.size for k in keep))
        keep.append(idx)
    if not keep:
        raise IngestError(f"no session has {n} samples")
    idx = np.concatenate(keep)
    return PriceSeries(series.timestamps[idx], series.prices[idx], np.asarray(new_breaks, dtype=np.int64),
                       series.base_interval * n, series.dropped_rows)
