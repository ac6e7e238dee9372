"""Log returns, windowed volatilities and autocorrelation diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from volmix.ingest import PriceSeries


class EmptyResultError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Non-overlapping log returns over ``n`` base intervals.

    ``timestamps`` are the right endpoints of each return and
    ``session_ids`` the session both of its prices belong to.
    """

    values: np.ndarray
    n: int
    timestamps: np.ndarray
    session_ids: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("aggregation level n must be >= 1")
        if not (len(self.values) == len(self.timestamps) == len(self.session_ids)):
            raise ValueError("values, timestamps and session_ids must have equal length")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class VolatilitySeries:
    sigmas: np.ndarray
    window_length: int
    window_starts: np.ndarray

    def __len__(self):
        return len(self.sigmas)


def log_returns(series: PriceSeries, n: int = 1) -> ReturnSeries:
    """Returns ``ln(P_k / P_{k-n})`` with stride ``n``, restarted in every session."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    logp = np.log(series.prices)
    vals, ts, sids = [], [], []
    for sid, (start, stop) in enumerate(series.sessions()):
        if stop - start < n + 1:
            continue
        idx = np.arange(start, stop, n)
        lp = logp[idx]
        vals.append(np.diff(lp))
        ts.append(series.timestamps[idx[1:]])
        sids.append(np.full(idx.size - 1, sid, dtype=np.int64))
    if not vals:
        raise EmptyResultError(f"no session has at least {n + 1} samples")
    return ReturnSeries(np.concatenate(vals), n, np.concatenate(ts), np.concatenate(sids))


def windowed_volatility(returns: ReturnSeries, window_length: int = 390) -> VolatilitySeries:
    """Sample standard deviation (ddof=1) over non-overlapping windows.

    Windows never cross a session boundary; a session's trailing partial
    window is discarded.
    """
    if returns.n != 1:
        raise ValueError("windowed volatility needs base-interval returns (n == 1)")
    if int(window_length) != window_length or window_length < 2:
        raise ValueError("window_length must be an integer >= 2")
    window_length = int(window_length)

    sids = returns.session_ids
    cut = np.flatnonzero(np.diff(sids) != 0) + 1
    bounds = np.concatenate([[0], cut, [len(sids)]])
    sigmas, starts = [], []
    for start, stop in zip(bounds[:-1], bounds[1:]):
        m = (stop - start) // window_length
        if m == 0:
            continue
        block = returns.values[start:start + m * window_length].reshape(m, window_length)
        sigmas.append(block.std(axis=1, ddof=1))
        starts.append(returns.timestamps[start:start + m * window_length:window_length])
    if not sigmas:
        return VolatilitySeries(np.empty(0), window_length, np.empty(0, dtype=np.int64))
    return VolatilitySeries(np.concatenate(sigmas), window_length, np.concatenate(starts))


def autocorrelation(values, max_lag: int = 20) -> np.ndarray:
    """Biased sample autocorrelation for lags ``0..max_lag``.

    Every lag is normalized by the full-sample variance times N, so
    ``rho[0] == 1`` exactly.
    """
    x = np.asarray(values, dtype=np.float64)
    if max_lag < 1 or x.size <= max_lag + 1:
        raise ValueError("sequence must be longer than max_lag + 1")
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0 or not np.isfinite(denom):
        raise ValueError("autocorrelation undefined for a constant sequence")
    rho = np.empty(max_lag + 1)
    rho[0] = 1.0
    for lag in range(1, max_lag + 1):
        rho[lag] = np.dot(x[:-lag], x[lag:]) / denom
    return rho


def autocorrelation_band(values, max_lag: int = 20, width: float = 3.0) -> np.ndarray:
    """Per-lag null band for :func:`autocorrelation` that tolerates volatility clustering.

    For uncorrelated but heteroskedastic data the standard error of the
    lag-``l`` estimate is ``sqrt(sum x_t^2 x_{t+l}^2) / sum x_t^2``, which
    reduces to ``1/sqrt(N)`` for i.i.d. data. Returns ``width`` times it for
    lags ``1..max_lag``.
    """
    x = np.asarray(values, dtype=np.float64)
    x = x - x.mean()
    x2 = x * x
    denom = x2.sum()
    return np.array([width * np.sqrt(np.dot(x2[:-lag], x2[lag:])) / denom
                     for lag in range(1, max_lag + 1)])


def write_series_csv(timestamps, values, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "value"])
        for t, v in zip(np.asarray(timestamps).tolist(), np.asarray(values).tolist()):
            w.writerow([t, repr(float(v))])


def read_series_csv(path):
    """Inverse of :func:`write_series_csv`; returns ``(timestamps, values)``."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64, ndmin=2)
    if data.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return data[:, 0].astype(np.int64), data[:, 1]
