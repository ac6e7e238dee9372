"""Tail estimators for volatility and rescaled-return samples.

Power laws are fitted with the continuous maximum-likelihood exponent and a
KS-minimizing lower cutoff. Stretched exponentials ``C exp(-lam * x**beta)``
are fitted by count-weighted least squares on the log density.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from volmix.distribution import EmpiricalDistribution

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class TailFitError(ValueError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    x_min: float
    ks_distance: float
    tail_sample_count: int
    candidates_scanned: int = 0

    def to_dict(self) -> dict:
        return {
            "model": "power_law",
            "parameters": {"alpha": self.alpha, "x_min": self.x_min},
            "fit_range": [self.x_min, None],
            "diagnostics": {"ks_distance": self.ks_distance,
                            "tail_sample_count": self.tail_sample_count,
                            "candidates_scanned": self.candidates_scanned},
        }


@dataclass(frozen=True)
class StretchedExpFit:
    C: float
    lam: float
    beta: float
    fit_range: tuple
    residual: float
    bins_used: int = 0

    def density(self, x):
        return self.C * np.exp(-self.lam * np.asarray(x, dtype=float) ** self.beta)

    def to_dict(self) -> dict:
        return {
            "model": "stretched_exp",
            "parameters": {"C": self.C, "lambda": self.lam, "beta": self.beta},
            "fit_range": [float(self.fit_range[0]), float(self.fit_range[1])],
            "diagnostics": {"residual": self.residual, "bins_used": self.bins_used},
        }


def fit_from_dict(d: dict):
    p, diag = d["parameters"], d.get("diagnostics", {})
    if d["model"] == "power_law":
        return PowerLawFit(p["alpha"], p["x_min"], diag.get("ks_distance", float("nan")),
                           diag.get("tail_sample_count", 0), diag.get("candidates_scanned", 0))
    if d["model"] == "stretched_exp":
        return StretchedExpFit(p["C"], p["lambda"], p["beta"], tuple(d["fit_range"]),
                               diag.get("residual", float("nan")), diag.get("bins_used", 0))
    raise ValueError(f"unknown fit model {d['model']!r}")


# -- power law --------------------------------------------------------------

def _ks_sorted(cdf: np.ndarray) -> float:
    m = cdf.size
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def power_law_ks(samples, alpha: float, x_min: float) -> float:
    """KS distance between the tail ``samples >= x_min`` and the fitted power law."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    tail = x[x >= x_min]
    return _ks_sorted(1.0 - (tail / x_min) ** (1.0 - alpha))


def power_law_mle(samples, x_min: float) -> float:
    """Closed-form continuous MLE ``1 + m / sum(ln(x / x_min))`` over ``x >= x_min``."""
    x = np.asarray(samples, dtype=np.float64)
    tail = x[x >= x_min]
    s = np.sum(np.log(tail / x_min))
    if tail.size == 0 or s <= 0:
        raise TailFitError("no spread above x_min")
    return float(1.0 + tail.size / s)


def fit_power_law(samples, max_candidates: int = 2000, min_tail: int = 50,
                  min_samples: int = 500) -> PowerLawFit:
    """Joint estimate of ``(alpha, x_min)`` for a density ``p(x) ~ x**-alpha``.

    Candidate cutoffs are the distinct sample values keeping at least
    ``min_tail`` points above them, subsampled evenly in rank down to
    ``max_candidates``. The candidate with the smallest KS distance wins;
    ties go to the smaller cutoff.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if x.size < min_samples:
        raise TailFitError(f"need at least {min_samples} samples, got {x.size}")
    if not np.all(np.isfinite(x)) or x[0] <= 0:
        raise TailFitError("samples must be finite and positive")
    if x[0] == x[-1]:
        raise TailFitError("degenerate sample: all values equal")

    distinct, first = np.unique(x, return_index=True)
    tail_n = x.size - first
    # a tail made of one repeated value has no spread
    ok = (tail_n >= min_tail) & (distinct < x[-1])
    cand_idx = first[ok]
    if cand_idx.size == 0:
        raise TailFitError(f"fewer than {min_tail} samples above every candidate x_min")
    if cand_idx.size > max_candidates:
        pick = np.unique(np.round(np.linspace(0, cand_idx.size - 1, max_candidates)).astype(int))
        cand_idx = cand_idx[pick]

    logx = np.log(x)
    suffix = np.cumsum(logx[::-1])[::-1]
    best = None
    for i0 in cand_idx:
        m = x.size - i0
        s = suffix[i0] - m * logx[i0]
        alpha = 1.0 + m / s
        cdf = 1.0 - np.exp((1.0 - alpha) * (logx[i0:] - logx[i0]))
        d = _ks_sorted(cdf)
        if best is None or d < best[0]:
            best = (d, i0, alpha)
    d, i0, alpha = best
    return PowerLawFit(float(alpha), float(x[i0]), float(d), int(x.size - i0), int(cand_idx.size))


def truncated_power_law_cdf(x, alpha, lo, hi=np.inf):
    x = np.asarray(x, dtype=float)
    num = 1.0 - (x / lo) ** (1.0 - alpha)
    den = 1.0 - (hi / lo) ** (1.0 - alpha) if np.isfinite(hi) else 1.0
    return num / den


# -- stretched exponential --------------------------------------------------

def _wls(t, y, w):
    """Weighted fit of ``y = a - lam * t``; returns ``(a, lam, weighted SSR)``."""
    sw = w.sum()
    tm, ym = (w * t).sum() / sw, (w * y).sum() / sw
    dt, dy = t - tm, y - ym
    stt = (w * dt * dt).sum()
    if stt <= 0:
        return ym, 0.0, float((w * dy * dy).sum())
    slope = (w * dt * dy).sum() / stt
    a = ym - slope * tm
    r = y - (a + slope * t)
    return a, -slope, float((w * r * r).sum())


def golden_section(f, lo, hi, tol=1e-4):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` to an interval below ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # endpoints can be the optimum when the objective is monotone
    cands = [(f(a), a), (f(b), b), (fc, c), (fd, d)]
    return min(cands)[1]


def histogram_quantile(dist: EmpiricalDistribution, q: float) -> float:
    cum = np.concatenate([[0.0], np.cumsum(dist.counts)]) + dist.underflow
    target = q * dist.sample_count
    return float(np.interp(target, cum, dist.bin_edges))


def fit_stretched_exponential(dist: EmpiricalDistribution, fit_range=None,
                              beta_bounds=(0.02, 1.0), tol: float = 1e-4,
                              min_bins: int = 8) -> StretchedExpFit:
    """Fit ``C exp(-lam * x**beta)`` to the binned density inside ``fit_range``.

    For a trial ``beta`` the pair ``(ln C, lam)`` has a closed-form weighted
    least-squares solution (weights are bin counts); ``beta`` itself is found
    by golden-section search. Default range: histogram median to 99.9th
    percentile.
    """
    if fit_range is None:
        fit_range = (histogram_quantile(dist, 0.5), histogram_quantile(dist, 0.999))
    lo, hi = float(fit_range[0]), float(fit_range[1])
    if not lo < hi:
        raise TailFitError(f"empty fit range [{lo}, {hi}]")
    c = dist.centers
    sel = (c >= lo) & (c <= hi) & (dist.densities > 0) & (dist.counts > 0)
    if sel.sum() < min_bins:
        raise TailFitError(f"only {int(sel.sum())} nonempty bins in [{lo}, {hi}], need {min_bins}")
    x, y, w = c[sel], np.log(dist.densities[sel]), dist.counts[sel].astype(float)

    def objective(beta):
        return _wls(x ** beta, y, w)[2]

    beta = golden_section(objective, beta_bounds[0], beta_bounds[1], tol)
    a, lam, ssr = _wls(x ** beta, y, w)
    if lam <= 0:
        raise TailFitError("fitted density does not decay over the fit range")
    return StretchedExpFit(float(np.exp(a)), float(lam), float(beta), (lo, hi),
                           float(np.sqrt(ssr / w.sum())), int(sel.sum()))


def stretched_exp_cdf(x, lam, beta, lo, hi=np.inf):
    """CDF of the density ``~ exp(-lam x**beta)`` truncated to ``[lo, hi]``."""
    s = 1.0 / beta
    q = lambda v: gammaincc(s, lam * np.asarray(v, dtype=float) ** beta)
    top = q(lo)
    bot = q(hi) if np.isfinite(hi) else 0.0
    return (top - q(x)) / (top - bot)


# -- diagnostics ------------------------------------------------------------

def tail_slope(dist: EmpiricalDistribution, z_range, min_bins: int = 5) -> float:
    """Least-squares slope of ``ln density`` against ``ln z`` on nonempty bins in range."""
    lo, hi = z_range
    c = dist.centers
    sel = (c >= lo) & (c <= hi) & (dist.densities > 0)
    if sel.sum() < min_bins:
        raise TailFitError(f"only {int(sel.sum())} nonempty bins in [{lo}, {hi}], need {min_bins}")
    slope, _ = np.polyfit(np.log(c[sel]), np.log(dist.densities[sel]), 1)
    return float(slope)


def select_tail_model(samples, pl: PowerLawFit | None = None, bin_count: int = 60):
    """Choose between power law and stretched exponential on a shared tail.

    Both models are fitted on ``[x_min, q99.9]`` where ``x_min`` comes from
    the power-law fit, and each is scored by its KS distance to the samples
    in that range under the model truncated to the same range. Returns
    ``(choice, power_law_fit, stretched_fit_or_None, decision)``.
    """
    from volmix.distribution import empirical_density

    x = np.sort(np.asarray(samples, dtype=float))
    pl = pl or fit_power_law(x)
    lo, hi = pl.x_min, float(np.quantile(x, 0.999))
    shared = x[(x >= lo) & (x <= hi)]
    decision = {"range": [lo, hi], "n": int(shared.size)}
    ks_pl = _ks_sorted(truncated_power_law_cdf(shared, pl.alpha, lo, hi))
    decision["ks_power_law"] = ks_pl
    try:
        dist = empirical_density(x, "absolute", bin_count)
        se = fit_stretched_exponential(dist, (lo, hi))
        ks_se = _ks_sorted(stretched_exp_cdf(shared, se.lam, se.beta, lo, hi))
    except (TailFitError, ValueError) as exc:
        logger.info("stretched exponential unavailable on shared range: %s", exc)
        se, ks_se = None, float("inf")
    decision["ks_stretched_exp"] = ks_se
    choice = "power_law" if ks_pl <= ks_se else "stretched_exp"
    decision["choice"] = choice
    logger.info("tail model: %s (KS power law %.4g vs stretched exp %.4g on [%.4g, %.4g])",
                choice, ks_pl, ks_se, lo, hi)
    return choice, pl, se, decision
