"""Synthetic conditionally independent returns and stylized-fact diagnostics.

Volatility is drawn once per window from a :class:`VolatilityModel` and held
fixed while ``window_length`` i.i.d. ``N(0, sigma^2)`` returns are drawn. The
output is the ground truth against which the estimators are checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from volmix.distribution import CollapseReport, collapse_metric, empirical_density
from volmix.ingest import SECONDS_PER_MINUTE, PriceSeries
from volmix.mixture import EmpiricalVolatility, ModelError, VolatilityModel
from volmix.returns import ReturnSeries, VolatilitySeries, autocorrelation, autocorrelation_band, log_returns
from volmix.tailfit import tail_slope

DEFAULT_START = 1_577_836_800  # 2020-01-01T00:00:00Z


@dataclass(frozen=True)
class SynthSpec:
    model: VolatilityModel
    window_length: int = 390
    total_returns: int = 390 * 1000
    seed: int = 0
    initial_price: float = 100.0
    start: int = DEFAULT_START

    def __post_init__(self):
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2")
        if self.total_returns < self.window_length or self.total_returns % self.window_length:
            raise ValueError(f"total_returns ({self.total_returns}) must be a positive multiple "
                             f"of window_length ({self.window_length})")
        if not self.initial_price > 0:
            raise ValueError("initial_price must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def prices_from_returns(returns, initial_price=100.0, start=DEFAULT_START) -> PriceSeries:
    """Price path ``P0 * exp(cumsum(r))`` on a contiguous one-minute grid."""
    r = np.asarray(returns, dtype=np.float64)
    prices = initial_price * np.exp(np.concatenate([[0.0], np.cumsum(r)]))
    ts = start + SECONDS_PER_MINUTE * np.arange(r.size + 1, dtype=np.int64)
    return PriceSeries(ts, prices)


def generate(spec: SynthSpec) -> tuple[PriceSeries, VolatilitySeries]:
    """Draw one synthetic price path; deterministic in ``spec.seed``."""
    if isinstance(spec.model, EmpiricalVolatility) and not spec.model.probabilities.sum() > 0:
        raise ModelError("empirical model has zero mass")
    rng = np.random.default_rng(spec.seed)
    n_windows = spec.total_returns // spec.window_length
    sigmas = np.asarray(spec.model.sample(n_windows, rng), dtype=np.float64)
    r = rng.standard_normal(spec.total_returns) * np.repeat(sigmas, spec.window_length)
    series = prices_from_returns(r, spec.initial_price, spec.start)
    starts = series.timestamps[1::spec.window_length][:n_windows]
    return series, VolatilitySeries(sigmas, spec.window_length, starts)


def shuffle_returns(series: PriceSeries, seed: int = 0) -> PriceSeries:
    """Same one-step returns in random order; destroys any time dependence."""
    r = log_returns(series, 1).values.copy()
    np.random.default_rng(seed).shuffle(r)
    return prices_from_returns(r, float(series.prices[0]), int(series.timestamps[0]))


@dataclass(frozen=True, eq=False)
class StylizedFactsReport:
    n_returns: int
    acf_returns: np.ndarray
    acf_abs_returns: np.ndarray
    robust_band: np.ndarray
    abs_tail_slope: float
    tail_range: tuple
    collapse: CollapseReport

    @property
    def noise_band(self) -> float:
        """``3 / sqrt(N)``, the null band for sample autocorrelations."""
        return 3.0 / np.sqrt(self.n_returns)

    def to_dict(self) -> dict:
        return {
            "n_returns": self.n_returns,
            "acf_returns": self.acf_returns.tolist(),
            "acf_abs_returns": self.acf_abs_returns.tolist(),
            "robust_band": self.robust_band.tolist(),
            "abs_tail_slope": self.abs_tail_slope,
            "tail_range": list(self.tail_range),
            "noise_band": self.noise_band,
            "collapse": self.collapse.to_dict(),
        }


def stylized_facts_report(series: PriceSeries, max_lag: int = 20, scales=(5, 15, 30, 60),
                          tail_quantiles=(0.99, 0.9999), min_returns: int = 100_000,
                          tail_bins: int = 20) -> StylizedFactsReport:
    """Autocorrelation of returns and ``|returns|``, tail slope and collapse.

    Lags run from 1 to ``max_lag``. Besides the i.i.d. band ``3/sqrt(N)`` the
    report carries a clustering-robust band per lag (see
    :func:`~volmix.returns.autocorrelation_band`). The tail slope of the ``|return|``
    density is measured on ``tail_bins`` log bins spanning the given quantiles.
    """
    base: ReturnSeries = log_returns(series, 1)
    if len(base) < min_returns:
        raise ValueError(f"need at least {min_returns} base returns, got {len(base)}")
    r = base.values
    acf = autocorrelation(r, max_lag)[1:]
    acf_abs = autocorrelation(np.abs(r), max_lag)[1:]
    band = autocorrelation_band(r, max_lag)
    a = np.abs(r)
    lo, hi = np.quantile(a, tail_quantiles)
    dist = empirical_density(r, "absolute", bin_edges=np.geomspace(lo, hi, tail_bins + 1))
    slope = tail_slope(dist, (lo, hi))
    collapse = collapse_metric({n: log_returns(series, n) for n in scales})
    return StylizedFactsReport(len(base), acf, acf_abs, band, slope, (float(lo), float(hi)), collapse)
