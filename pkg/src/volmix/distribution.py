"""Empirical densities, diffusive rescaling and the data-collapse statistic."""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from volmix.returns import ReturnSeries

ABSOLUTE = "absolute"
SIGNED = "signed"


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Binned density estimate.

    Samples falling outside ``bin_edges`` (including exact zeros in the
    absolute domain, which log bins cannot hold) are counted in
    ``underflow``/``overflow`` rather than dropped, so that
    ``sum(densities * widths) + out_of_range_mass == 1``.
    """

    bin_edges: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    sample_count: int
    domain_tag: str = ABSOLUTE
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        if self.domain_tag not in (ABSOLUTE, SIGNED):
            raise ValueError(f"unknown domain tag {self.domain_tag!r}")
        if len(self.bin_edges) != len(self.densities) + 1:
            raise ValueError("need one more edge than densities")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if np.any(np.asarray(self.densities) < 0):
            raise ValueError("densities must be non-negative")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def centers(self) -> np.ndarray:
        """Geometric bin centers for log bins, arithmetic otherwise."""
        lo, hi = self.bin_edges[:-1], self.bin_edges[1:]
        if self.domain_tag == ABSOLUTE and lo[0] > 0:
            return np.sqrt(lo * hi)
        return 0.5 * (lo + hi)

    @property
    def out_of_range_mass(self) -> float:
        return (self.underflow + self.overflow) / self.sample_count if self.sample_count else 0.0

    def total_mass(self) -> float:
        return float(np.sum(self.densities * self.widths)) + self.out_of_range_mass

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center", "density", "bin_lo", "bin_hi", "count"])
            for c, d, lo, hi, k in zip(self.centers, self.densities, self.bin_edges[:-1],
                                       self.bin_edges[1:], self.counts):
                w.writerow([repr(float(c)), repr(float(d)), repr(float(lo)), repr(float(hi)), int(k)])

    def to_dict(self) -> dict:
        return {
            "domain_tag": self.domain_tag,
            "sample_count": int(self.sample_count),
            "underflow": int(self.underflow),
            "overflow": int(self.overflow),
            "bin_edges": [float(x) for x in self.bin_edges],
            "densities": [float(x) for x in self.densities],
            "counts": [int(x) for x in self.counts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmpiricalDistribution":
        return cls(np.asarray(d["bin_edges"], dtype=float), np.asarray(d["densities"], dtype=float),
                   np.asarray(d["counts"], dtype=np.int64), int(d["sample_count"]), d["domain_tag"],
                   int(d.get("underflow", 0)), int(d.get("overflow", 0)))


def _from_counts(edges, counts, n, domain_tag, underflow, overflow):
    dens = counts / (n * np.diff(edges))
    return EmpiricalDistribution(edges, dens, counts.astype(np.int64), n, domain_tag, underflow, overflow)


def empirical_density(values, domain_tag: str = ABSOLUTE, bin_count: int = 60,
                      bin_edges=None, min_samples: int = 100) -> EmpiricalDistribution:
    """Normalized histogram of ``values`` (or of ``|values|`` in the absolute domain).

    The absolute domain uses ``bin_count`` logarithmic bins from the smallest
    positive ``|value|`` to the largest; the signed domain uses uniform bins
    over the sample range. Pass ``bin_edges`` to share a grid across samples.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    if domain_tag == ABSOLUTE:
        x = np.abs(x)
    elif domain_tag != SIGNED:
        raise ValueError(f"unknown domain tag {domain_tag!r}")

    if bin_edges is None:
        if domain_tag == ABSOLUTE:
            pos = x[x > 0]
            if pos.size == 0:
                raise ValueError("all values are zero; log bins undefined")
            lo, hi = pos.min(), pos.max()
            if lo == hi:
                raise ValueError("all nonzero values are equal; cannot bin")
            edges = np.geomspace(lo, hi, bin_count + 1)
        else:
            lo, hi = x.min(), x.max()
            if lo == hi:
                raise ValueError("all values are equal; cannot bin")
            edges = np.linspace(lo, hi, bin_count + 1)
        edges[0], edges[-1] = lo, hi
    else:
        edges = np.asarray(bin_edges, dtype=np.float64)

    # np.histogram closes the last bin on the right
    counts, _ = np.histogram(x, bins=edges)
    underflow = int(np.count_nonzero(x < edges[0]))
    overflow = int(np.count_nonzero(x > edges[-1]))
    return _from_counts(edges, counts, x.size, domain_tag, underflow, overflow)


def rescale(obj, n: int):
    """Diffusive rescaling ``z = r / sqrt(n)``.

    Arrays and :class:`ReturnSeries` map to rescaled values. An
    :class:`EmpiricalDistribution` of level-``n`` returns maps to the density
    of ``z``, i.e. edges divided and densities multiplied by ``sqrt(n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    root = np.sqrt(n)
    if isinstance(obj, ReturnSeries):
        return obj.values / root
    if isinstance(obj, EmpiricalDistribution):
        return EmpiricalDistribution(obj.bin_edges / root, obj.densities * root, obj.counts,
                                     obj.sample_count, obj.domain_tag, obj.underflow, obj.overflow)
    return np.asarray(obj, dtype=np.float64) / root


def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov statistic ``sup |ECDF_a - ECDF_b|``."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True, eq=False)
class CollapseReport:
    scales: list
    pairwise_distance: np.ndarray
    sample_sizes: list = field(default_factory=list)

    @property
    def max_distance(self) -> float:
        return float(self.pairwise_distance.max())

    def to_dict(self) -> dict:
        return {
            "scales": [int(s) for s in self.scales],
            "sample_sizes": [int(s) for s in self.sample_sizes],
            "pairwise_distance": self.pairwise_distance.tolist(),
            "max_distance": self.max_distance,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "CollapseReport":
        return cls(list(d["scales"]), np.asarray(d["pairwise_distance"], dtype=float),
                   list(d.get("sample_sizes", [])))


def collapse_metric(series_by_scale, min_samples: int = 1000) -> CollapseReport:
    """Pairwise Kolmogorov distances between rescaled return samples.

    ``series_by_scale`` maps ``n`` to a :class:`ReturnSeries` or an array of
    level-``n`` returns. A sequence of ``(n, sample)`` pairs is accepted too,
    which allows repeated scales.
    """
    items = list(series_by_scale.items() if isinstance(series_by_scale, Mapping) else series_by_scale)
    if len(items) < 2:
        raise ValueError("collapse needs at least two scales")
    scales, samples = [], []
    for n, s in items:
        vals = s.values if isinstance(s, ReturnSeries) else np.asarray(s, dtype=np.float64)
        if vals.size < min_samples:
            raise ValueError(f"scale {n}: {vals.size} returns, need {min_samples}")
        scales.append(int(n))
        samples.append(rescale(vals, n))
    k = len(samples)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = ks_two_sample(samples[i], samples[j])
    return CollapseReport(scales, dist, [s.size for s in samples])
