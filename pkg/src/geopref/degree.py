"""Limiting degree laws and empirical comparison statistics.

At a location with fitness phi, the limiting degree distribution of the
growth process is q(d) = (2/phi) * Gamma(m+c) Gamma(d) / (Gamma(m)
Gamma(d+c+1)) for d >= m, with c = 2/phi.  The complementary CDF
telescopes to a single Gamma ratio, the mean has the closed form
2m/(2-phi), and the tail falls off with complementary-CDF exponent 2/phi.
All Gamma ratios go through log-Gamma differences so large degrees never
overflow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from .errors import (
    DegreeBelowM,
    EmptyHistogram,
    ParameterOutOfRange,
)


@dataclass(frozen=True)
class DegreeLawParams:
    """Parameters of the limiting per-location degree law."""

    m: int
    phi: float
    mu_weight: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ParameterOutOfRange(f"m must be a positive integer, got {self.m!r}")
        if not (0.0 < self.phi < 2.0):
            raise ParameterOutOfRange(f"phi must lie in (0, 2), got {self.phi!r}")
        if not (0.0 < self.mu_weight <= 1.0):
            raise ParameterOutOfRange(
                f"mu_weight must lie in (0, 1], got {self.mu_weight!r}")


def _check_degrees(params: DegreeLawParams, d):
    d = np.asarray(d)
    if np.any(d < params.m):
        raise DegreeBelowM(f"law has no mass below m={params.m}")
    return d.astype(float)


def theoretical_pmf(params: DegreeLawParams, d):
    """Normalized limiting mass q(d); multiply by mu_weight for the
    vertex-proportion form.  Vectorized over d."""
    dd = _check_degrees(params, d)
    c = 2.0 / params.phi
    logq = (math.log(c) + gammaln(params.m + c) - gammaln(params.m)
            + gammaln(dd) - gammaln(dd + c + 1.0))
    out = np.exp(logq)
    return float(out) if np.isscalar(d) or np.asarray(d).ndim == 0 else out


def theoretical_cdf(params: DegreeLawParams, d):
    """P(degree <= d) under the limiting law, via the telescoped tail
    Gamma(m+c) Gamma(d+1) / (Gamma(m) Gamma(d+1+c))."""
    dd = _check_degrees(params, d)
    c = 2.0 / params.phi
    logtail = (gammaln(params.m + c) - gammaln(params.m)
               + gammaln(dd + 1.0) - gammaln(dd + 1.0 + c))
    out = 1.0 - np.exp(logtail)
    return float(out) if np.isscalar(d) or np.asarray(d).ndim == 0 else out


def tail_index(phi: float) -> float:
    """Complementary-CDF exponent of the limiting law; the pmf exponent
    is this plus one."""
    if not (0.0 < phi < 2.0):
        raise ParameterOutOfRange(f"phi must lie in (0, 2), got {phi!r}")
    return 2.0 / phi


def mean_degree(params: DegreeLawParams, split: int = 1000) -> float:
    """Mean of the limiting law: direct summation up to `split`, then the
    closed-form completion of the remaining tail (exact for c > 1, which
    holds for every admissible phi < 2)."""
    c = 2.0 / params.phi
    d = np.arange(params.m, split + 1)
    head = float(np.sum(d * theoretical_pmf(params, d)))
    # sum_{d > split} d*q(d) collapses to a single Gamma ratio
    logtail = (math.log(c) + gammaln(params.m + c) - gammaln(params.m)
               - math.log(c - 1.0) + gammaln(split + 2.0) - gammaln(split + 1.0 + c))
    return head + math.exp(logtail)


def theorem3_bracket(m: int, phi_sup: float, phi_inf: float, d,
                     delta: float = 1e-9):
    """CDF bracket for a region whose fitness ranges over
    [phi_inf, phi_sup]: evaluate the law strictly beyond each end
    (offset delta), using that the CDF decreases in phi at fixed d.
    Returns (lower, upper), vectorized over d."""
    if not (0.0 < phi_inf <= phi_sup < 2.0):
        raise ParameterOutOfRange("need 0 < phi_inf <= phi_sup < 2")
    if not (0.0 < phi_sup + delta < 2.0 and 0.0 < phi_inf - delta < 2.0):
        raise ParameterOutOfRange("delta offset leaves the admissible phi range")
    lower = theoretical_cdf(DegreeLawParams(m, phi_sup + delta), d)
    upper = theoretical_cdf(DegreeLawParams(m, phi_inf - delta), d)
    return lower, upper


@dataclass(frozen=True, eq=False)
class CompareReport:
    tv_distance: float
    residuals: dict  # d -> empirical_fraction - theoretical_mass, on [m, d_max]
    tail_slope: float | None  # log-log LS slope of the empirical pmf
    tail_points: int
    d_max: int


def compare(histogram: Mapping[int, int], params: DegreeLawParams,
            d_max: int) -> CompareReport:
    """Empirical-vs-theoretical comparison on [m, d_max]: total-variation
    distance after renormalizing both laws to the window, per-degree
    residuals, and a log-log least-squares slope of the empirical tail
    restricted to degrees with at least 10 observations."""
    if not histogram or sum(histogram.values()) == 0:
        raise EmptyHistogram("no degree counts to compare")
    ds = np.arange(params.m, d_max + 1)
    emp = np.array([histogram.get(int(d), 0) for d in ds], dtype=float)
    emp_total = emp.sum()
    if emp_total == 0:
        raise EmptyHistogram(f"no counts in the window [{params.m}, {d_max}]")
    emp /= emp_total
    theo = theoretical_pmf(params, ds)
    theo = theo / theo.sum()
    tv = 0.5 * float(np.abs(emp - theo).sum())
    residuals = {int(d): float(r) for d, r in zip(ds, emp - theo)}

    pts = [(d, c) for d, c in histogram.items() if c >= 10 and d >= params.m]
    slope = None
    if len(pts) >= 3:
        total = sum(histogram.values())
        logd = np.log([d for d, _ in pts])
        logp = np.log([c / total for _, c in pts])
        slope = float(np.polyfit(logd, logp, 1)[0])
    return CompareReport(tv_distance=tv, residuals=residuals, tail_slope=slope,
                         tail_points=len(pts), d_max=d_max)


@dataclass(frozen=True, eq=False)
class DegreeTable:
    """Per-location empirical/theoretical degree table ready for CSV."""

    location: str
    rows: tuple  # of (d, empirical_count, empirical_fraction, theoretical_mass)
    vertex_count: int
    truncation_remainder: float  # theoretical mass beyond the last row


def degree_table(histogram: Mapping[int, int], params: DegreeLawParams,
                 d_max: int, location: str = "0") -> DegreeTable:
    if not histogram or sum(histogram.values()) == 0:
        raise EmptyHistogram("no degree counts to tabulate")
    total = sum(histogram.values())
    ds = np.arange(params.m, d_max + 1)
    theo = theoretical_pmf(params, ds)
    rows = []
    for d, q in zip(ds, theo):
        cnt = int(histogram.get(int(d), 0))
        rows.append((int(d), cnt, cnt / total, float(q)))
    remainder = 1.0 - theoretical_cdf(params, d_max)
    return DegreeTable(location=str(location), rows=tuple(rows),
                       vertex_count=total, truncation_remainder=float(remainder))


def write_degree_csv(table: DegreeTable, path) -> None:
    """CSV with cumulative columns; floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["location", "d", "empirical_count", "empirical_fraction",
                    "theoretical_mass", "cum_empirical", "cum_theoretical"])
        cum_e = 0.0
        cum_t = 0.0
        for d, cnt, frac, q in table.rows:
            cum_e += frac
            cum_t += q
            w.writerow([table.location, d, cnt, format(frac, ".17g"),
                        format(q, ".17g"), format(cum_e, ".17g"),
                        format(cum_t, ".17g")])
