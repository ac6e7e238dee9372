import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volmix.ingest import PriceSeries
from volmix.returns import (
    EmptyResultError,
    autocorrelation,
    autocorrelation_band,
    log_returns,
    read_series_csv,
    windowed_volatility,
    write_series_csv,
)

from conftest import minute_series


def test_log_returns_respect_sessions(two_sessions):
    r = log_returns(two_sessions, 1)
    assert len(r) == 6 + 4
    p = two_sessions.prices
    assert r.values[0] == pytest.approx(np.log(p[1] / p[0]))
    assert r.values[6] == pytest.approx(np.log(p[8] / p[7]))
    assert r.session_ids.tolist() == [0] * 6 + [1] * 4
    assert r.timestamps[0] == two_sessions.timestamps[1]


def test_log_returns_stride(two_sessions):
    r = log_returns(two_sessions, 3)
    p = np.log(two_sessions.prices)
    expected = [p[3] - p[0], p[6] - p[3], p[10] - p[7]]
    np.testing.assert_allclose(r.values, expected, rtol=1e-14)
    assert r.n == 3


def test_log_returns_empty(two_sessions):
    with pytest.raises(EmptyResultError):
        log_returns(two_sessions, 10)
    with pytest.raises(ValueError):
        log_returns(two_sessions, 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-0.05, 0.05), min_size=60, max_size=200), st.integers(1, 12))
def test_aggregation_is_additive(r, n):
    """A level-n return is the sum of the n base returns it spans."""
    s = minute_series(r)
    base = log_returns(s, 1).values
    m = len(r) // n
    agg = log_returns(s, n).values
    assert agg.size == m
    np.testing.assert_allclose(agg, base[:m * n].reshape(m, n).sum(axis=1), atol=1e-12)


def test_windowed_volatility_matches_numpy():
    rng = np.random.default_rng(0)
    r = rng.normal(0, 0.01, 1000)
    s = minute_series(r)
    vol = windowed_volatility(log_returns(s), 100)
    base = log_returns(s).values
    np.testing.assert_allclose(vol.sigmas, base.reshape(10, 100).std(axis=1, ddof=1), rtol=1e-12)
    assert vol.window_starts[0] == s.timestamps[1]
    assert np.all(np.diff(vol.window_starts) == 100 * 60)


def test_windowed_volatility_drops_partial_windows(two_sessions):
    vol = windowed_volatility(log_returns(two_sessions), 4)
    # session A has 6 returns (one window), session B 4 (one window)
    assert len(vol) == 2
    assert vol.window_starts[1] == two_sessions.timestamps[8]
    assert len(windowed_volatility(log_returns(two_sessions), 7)) == 0


def test_windowed_volatility_needs_base_returns(two_sessions):
    with pytest.raises(ValueError):
        windowed_volatility(log_returns(two_sessions, 2), 2)
    with pytest.raises(ValueError):
        windowed_volatility(log_returns(two_sessions), 1)


def _acf_oracle(x, lag):
    x = np.asarray(x, float) - np.mean(x)
    n = x.size
    num = sum(x[t] * x[t + lag] for t in range(n - lag))
    return num / sum(v * v for v in x)


def test_autocorrelation_oracle():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(300).cumsum()
    rho = autocorrelation(x, 10)
    assert rho[0] == 1.0
    for lag in (1, 4, 10):
        assert rho[lag] == pytest.approx(_acf_oracle(x, lag), rel=1e-12)


def test_autocorrelation_errors():
    with pytest.raises(ValueError):
        autocorrelation(np.ones(100), 5)
    with pytest.raises(ValueError):
        autocorrelation(np.arange(5.0), 5)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=30, max_size=100))
def test_autocorrelation_bounded(x):
    x = np.asarray(x)
    if np.ptp(x) < 1e-6:
        return
    rho = autocorrelation(x, 10)
    assert np.all(np.abs(rho) <= 1 + 1e-12)


def test_band_reduces_to_iid_value():
    x = np.random.default_rng(1).standard_normal(200_000)
    band = autocorrelation_band(x, 5)
    np.testing.assert_allclose(band, 3 / np.sqrt(x.size), rtol=0.02)


def test_band_widens_under_clustering():
    rng = np.random.default_rng(2)
    sig = np.repeat(np.exp(rng.normal(0, 1, 1000)), 100)
    x = sig * rng.standard_normal(sig.size)
    assert np.all(autocorrelation_band(x, 5) > 1.5 * 3 / np.sqrt(x.size))


def test_series_csv_round_trip(tmp_path):
    ts = np.array([1, 2, 3], dtype=np.int64) * 1_600_000_000
    v = np.array([0.1, 1e-17, 3.0 / 7.0])
    write_series_csv(ts, v, tmp_path / "s.csv")
    t2, v2 = read_series_csv(tmp_path / "s.csv")
    assert t2.tolist() == ts.tolist()
    assert v2.tolist() == v.tolist()


def test_single_return():
    s = PriceSeries([0, 60], [100.0, 101.0])
    np.testing.assert_allclose(log_returns(s).values, [np.log(1.01)], rtol=1e-13)


def test_constant_prices_give_zero_returns():
    s = PriceSeries(60 * np.arange(20), np.full(20, 7.0))
    for n in (1, 3, 7):
        assert np.all(log_returns(s, n).values == 0)


def test_hand_computed_volatilities():
    a = 0.013
    ret = np.array([0.01, 0.01, -a, a])
    vol = windowed_volatility(log_returns(minute_series(ret)), 2)
    assert vol.sigmas[0] == 0.0
    assert vol.sigmas[1] == pytest.approx(a * np.sqrt(2), rel=1e-9)


def test_391_prices_one_window():
    r = np.random.default_rng(0).normal(0, 1e-3, 390)
    assert len(windowed_volatility(log_returns(minute_series(r)), 390)) == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=20, max_size=80), st.integers(2, 6))
def test_volatility_zero_iff_window_constant(steps, L):
    r = np.asarray(steps, float) * 1e-3
    vol = windowed_volatility(log_returns(minute_series(r)), L)
    base = log_returns(minute_series(r)).values
    for i, sig in enumerate(vol.sigmas):
        w = base[i * L:(i + 1) * L]
        assert sig >= 0
        # prices round trip through exp/log, so equal steps may differ in the last bits
        assert (sig < 1e-12) == (np.ptp(np.round(w, 12)) == 0)


def test_alternating_sequence():
    for n in (10, 100, 1000):
        rho = autocorrelation(np.resize([1.0, -1.0], n), 1)
        assert rho[1] == pytest.approx(-(n - 1) / n, abs=1e-12)


def test_iid_gaussian_lag_one():
    x = np.random.default_rng(17).standard_normal(100_000)
    assert abs(autocorrelation(x, 1)[1]) < 3 / np.sqrt(x.size)
