import json

import numpy as np
import pytest
from scipy import integrate, stats

from volmix.distribution import EmpiricalDistribution, empirical_density
from volmix.mixture import StretchedExp
from volmix.tailfit import (
    PowerLawFit,
    StretchedExpFit,
    TailFitError,
    fit_from_dict,
    fit_power_law,
    fit_stretched_exponential,
    golden_section,
    histogram_quantile,
    power_law_ks,
    power_law_mle,
    select_tail_model,
    stretched_exp_cdf,
    tail_slope,
    truncated_power_law_cdf,
)


def pareto(alpha, x_min, size, seed):
    u = np.random.default_rng(seed).random(size)
    return x_min * (1 - u) ** (-1 / (alpha - 1))


def exact_histogram(lam, beta, edges, n=10 ** 9):
    """Histogram whose bin densities are exactly C exp(-lam x^beta) at the geometric centers."""
    c = np.sqrt(edges[1:] * edges[:-1])
    dens = np.exp(-lam * c ** beta)
    dens /= np.sum(dens * np.diff(edges))
    counts = np.maximum(np.round(dens * np.diff(edges) * n), 1).astype(np.int64)
    return EmpiricalDistribution(edges, dens, counts, n)


def test_mle_matches_scipy_pareto_fit():
    x = pareto(3.0, 2.0, 5000, 0)
    b, _, _ = stats.pareto.fit(x, floc=0, fscale=2.0)
    assert power_law_mle(x, 2.0) == pytest.approx(1 + b, rel=1e-10)


def test_ks_matches_scipy_kstest():
    x = pareto(2.7, 1.0, 3000, 1)
    fit = fit_power_law(x)
    tail = x[x >= fit.x_min]
    ref = stats.kstest(tail, stats.pareto(b=fit.alpha - 1, scale=fit.x_min).cdf).statistic
    assert fit.ks_distance == pytest.approx(ref, abs=1e-12)
    assert power_law_ks(x, fit.alpha, fit.x_min) == pytest.approx(ref, abs=1e-12)
    assert fit.tail_sample_count == tail.size


def test_known_xmin_mle_is_consistent():
    alpha, m = 3.5, 4000
    for seed in range(20):
        est = power_law_mle(pareto(alpha, 1.0, m, seed), 1.0)
        assert abs(est - alpha) < 3 * (alpha - 1) / np.sqrt(m)


def test_fit_finds_cutoff_above_a_body():
    rng = np.random.default_rng(2)
    body = rng.uniform(0.1, 1.0, 20_000)
    x = np.r_[body, pareto(3.0, 1.0, 20_000, 3)]
    fit = fit_power_law(x)
    assert 0.9 < fit.x_min < 1.5
    assert fit.alpha == pytest.approx(3.0, abs=0.15)
    assert fit.candidates_scanned <= 2000


def test_fit_power_law_errors():
    with pytest.raises(TailFitError):
        fit_power_law(np.ones(1000))
    with pytest.raises(TailFitError):
        fit_power_law(pareto(3, 1, 100, 0))
    with pytest.raises(TailFitError):
        fit_power_law(np.r_[-1.0, pareto(3, 1, 1000, 0)])


def test_truncated_power_law_cdf_endpoints():
    assert truncated_power_law_cdf(2.0, 3.0, 2.0, 8.0) == 0.0
    assert truncated_power_law_cdf(8.0, 3.0, 2.0, 8.0) == pytest.approx(1.0)
    assert truncated_power_law_cdf(4.0, 3.0, 2.0) == pytest.approx(1 - 0.25)


def test_golden_section():
    assert golden_section(lambda b: (b - 0.37) ** 2, 0, 1, 1e-6) == pytest.approx(0.37, abs=1e-6)
    # monotone objectives end at the boundary
    assert golden_section(lambda b: b, 0.02, 1.0) == pytest.approx(0.02, abs=1e-4)


@pytest.mark.parametrize("lam,beta", [(5.0, 0.5), (2.0, 0.8), (20.0, 0.3)])
def test_stretched_fit_on_exact_histogram(lam, beta):
    edges = np.geomspace(0.01, 50, 81)
    d = exact_histogram(lam, beta, edges)
    fit = fit_stretched_exponential(d, (0.05, 40), tol=1e-7)
    assert fit.beta == pytest.approx(beta, rel=1e-3)
    assert fit.lam == pytest.approx(lam, rel=1e-3)
    assert fit.residual < 1e-3


def test_stretched_fit_on_samples():
    m = StretchedExp(3.0, 0.5, 1e-3)
    x = m.sample(400_000, np.random.default_rng(7))
    fit = fit_stretched_exponential(empirical_density(x, "absolute", 80))
    assert fit.beta == pytest.approx(0.5, abs=0.05)


def test_stretched_fit_errors():
    d = exact_histogram(2.0, 0.5, np.geomspace(0.01, 10, 11))
    with pytest.raises(TailFitError):
        fit_stretched_exponential(d, (1.0, 0.5))
    with pytest.raises(TailFitError):
        fit_stretched_exponential(d, (0.01, 0.03))
    rising = EmpiricalDistribution(d.bin_edges, d.densities[::-1].copy(), d.counts[::-1].copy(), d.sample_count)
    with pytest.raises(TailFitError, match="decay"):
        fit_stretched_exponential(rising, (0.01, 10))


def test_stretched_exp_cdf_matches_quadrature():
    lam, beta, lo, hi = 4.0, 0.4, 0.5, 30.0
    norm = integrate.quad(lambda s: np.exp(-lam * s ** beta), lo, hi)[0]
    for x in (0.7, 3.0, 12.0):
        ref = integrate.quad(lambda s: np.exp(-lam * s ** beta), lo, x)[0] / norm
        assert stretched_exp_cdf(x, lam, beta, lo, hi) == pytest.approx(ref, rel=1e-9)


def test_histogram_quantile():
    d = empirical_density(np.linspace(0, 1, 100_001), "signed", 100)
    assert histogram_quantile(d, 0.5) == pytest.approx(0.5, abs=1e-4)


def test_tail_slope_exact():
    edges = np.geomspace(1, 1000, 31)
    c = np.sqrt(edges[1:] * edges[:-1])
    d = EmpiricalDistribution(edges, 2.5 * c ** -3.5, np.ones(30, dtype=np.int64), 30)
    assert tail_slope(d, (1, 1000)) == pytest.approx(-3.5, rel=1e-12)
    with pytest.raises(TailFitError):
        tail_slope(d, (1, 2))


def test_selection_prefers_true_model():
    x = pareto(3.0, 1e-3, 50_000, 11)
    choice, pl, _, decision = select_tail_model(x)
    assert choice == "power_law"
    assert decision["ks_power_law"] <= decision["ks_stretched_exp"]

    y = StretchedExp(61.38, 0.1772, 1e-3).sample(100_000, np.random.default_rng(12))
    choice, pl, se, decision = select_tail_model(y)
    assert choice == "stretched_exp" and se is not None
    assert decision["range"] == [pl.x_min, pytest.approx(np.quantile(y, 0.999))]
    assert se.fit_range == tuple(decision["range"])


def test_fit_dict_round_trip():
    pl = PowerLawFit(3.1, 0.002, 0.01, 500, 40)
    se = StretchedExpFit(2.0, 61.38, 0.1772, (0.001, 0.05), 0.02, 33)
    for f in (pl, se):
        assert fit_from_dict(json.loads(json.dumps(f.to_dict()))) == f
    with pytest.raises(ValueError):
        fit_from_dict({"model": "other", "parameters": {}})


def test_pareto_fixture_recovery():
    fit = fit_power_law(pareto(2.5, 1.0, 10_000, 0))
    assert fit.alpha == pytest.approx(2.5, abs=0.1)
    assert fit.x_min <= 1.2


def test_exponential_is_misspecified():
    ks_exp, alphas = [], []
    ks_par = []
    for seed in range(10):
        e = np.random.default_rng(seed).exponential(1.0, 10_000)
        f = fit_power_law(e)
        ks_exp.append(f.ks_distance)
        alphas.append(f.alpha)
        ks_par.append(fit_power_law(pareto(2.5, 1.0, 10_000, seed)).ks_distance)
    assert np.median(ks_exp) > 1.5 * np.median(ks_par)
    pl_sd = np.std([fit_power_law(pareto(2.5, 1.0, 10_000, s)).alpha for s in range(10)])
    assert np.std(alphas) > 2 * pl_sd


def test_pure_exponential_beta_one():
    edges = np.linspace(0.0, 8.0, 81)
    edges[0] = 1e-6
    d = exact_histogram(1.0, 1.0, edges)
    d = EmpiricalDistribution(d.bin_edges, d.densities, d.counts, d.sample_count, "signed")
    fit = fit_stretched_exponential(d, (0.05, 8.0))
    assert fit.beta == pytest.approx(1.0, abs=0.02)


def test_stretched_residual_shrinks_with_samples():
    m = StretchedExp(3.0, 0.5, 1e-3)
    edges = np.geomspace(0.05, 30, 41)
    res = []
    for n in (20_000, 200_000):
        x = m.sample(n, np.random.default_rng(5))
        res.append(fit_stretched_exponential(empirical_density(x, "absolute", bin_edges=edges),
                                             (0.1, 20)).residual)
    assert res[1] <= res[0]


def test_tail_slope_flat_and_inverse_fourth():
    edges = np.geomspace(0.1, 10, 21)
    c = np.sqrt(edges[1:] * edges[:-1])
    ones = np.ones(20, dtype=np.int64)
    assert tail_slope(EmpiricalDistribution(edges, c ** -4.0, ones, 20), (0.1, 10)) == pytest.approx(-4, abs=1e-6)
    assert tail_slope(EmpiricalDistribution(edges, np.full(20, 0.3), ones, 20), (0.1, 10)) == pytest.approx(0, abs=1e-6)


def test_pareto_three_sample_slope():
    d = empirical_density(pareto(3.0, 1.0, 10 ** 6, 6), "absolute", 60)
    assert tail_slope(d, (1.5, 50)) == pytest.approx(-3.0, abs=0.2)
