"""Conditionally independent Gaussian returns mixed over a random volatility.

Estimate volatility distributions from minute prices, fit their tails,
predict the rescaled return density through the volatility mixture
integral and check the diffusive data collapse across time scales.
"""

from volmix.ingest import PriceSeries, load_prices, resample, write_prices
from volmix.returns import (
    ReturnSeries,
    VolatilitySeries,
    autocorrelation,
    log_returns,
    windowed_volatility,
)
from volmix.distribution import (
    CollapseReport,
    EmpiricalDistribution,
    collapse_metric,
    empirical_density,
    ks_two_sample,
    rescale,
)
from volmix.tailfit import (
    PowerLawFit,
    StretchedExpFit,
    fit_power_law,
    fit_stretched_exponential,
    tail_slope,
)
from volmix.mixture import (
    EmpiricalVolatility,
    LogNormal,
    ParetoTail,
    PointMass,
    StretchedExp,
    VolatilityModel,
    asymptotic_tail,
    evaluate_scaling_function,
    predicted_unscaled_density,
    scaling_function_tail_exponent,
)
from volmix.synth import SynthSpec, generate, stylized_facts_report

__version__ = "0.1.0"

__all__ = [
    "PriceSeries", "load_prices", "resample", "write_prices",
    "ReturnSeries", "VolatilitySeries", "autocorrelation", "log_returns",
    "windowed_volatility",
    "CollapseReport", "EmpiricalDistribution", "collapse_metric",
    "empirical_density", "ks_two_sample", "rescale",
    "PowerLawFit", "StretchedExpFit", "fit_power_law",
    "fit_stretched_exponential", "tail_slope",
    "EmpiricalVolatility", "LogNormal", "ParetoTail", "PointMass",
    "StretchedExp", "VolatilityModel", "asymptotic_tail",
    "evaluate_scaling_function", "predicted_unscaled_density",
    "scaling_function_tail_exponent",
    "SynthSpec", "generate", "stylized_facts_report",
]
