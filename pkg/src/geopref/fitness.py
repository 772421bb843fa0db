"""Multiplicative-fitness special case: kernel alpha(x, y) = x.

A newcomer's attachment weight toward a vertex is the vertex's own
fitness x in [0, h], degree-multiplied as usual.  The model has two
phases decided by F(lambda) = integral of x g(x)/(lambda - x): if F
reaches 1 for some lambda0 >= h the limit measure spreads over [0, h]
with density proportional to g(x)/(lambda0 - x) ("fit get richer");
otherwise mass condenses at the top fitness ("innovation pays off",
detected but not quantified here).

Quadrature note: integrands carrying 1/(lambda - x) are evaluated after
the substitution u = -log(lambda - x), which removes the near-singular
behavior entirely (the transformed integrands are bounded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (
    DegenerateMass,
    IntervalOutOfRange,
    NotAProbabilityVector,
    ParameterOutOfRange,
    QuadratureFailure,
    WrongPhase,
)
from .space import ContinuousSpaceSpec, Domain, discretize, make_kernel
from .equilibrium import borel_bracket, solve_dustbin, solve_nu

DIVERGENCE_PROBE_OFFSET = 1e-8
DIVERGENCE_CUTOFF = 1e3
LIMIT_PROBE_OFFSET = 1e-12


@dataclass(frozen=True, eq=False)
class FitnessDistribution:
    """Fitness density g on [0, h].

    ``support_floor`` marks a known left truncation (g vanishes below
    it); ``near_h_lower_bound``/``near_h_width`` declare, when positive,
    that g >= bound on (h - width, h), which settles divergence of F at
    h analytically.  ``breakpoints`` lists interior discontinuities for
    the quadrature.
    """

    density: Callable
    h: float
    support_floor: float = 0.0
    near_h_lower_bound: float = 0.0
    near_h_width: float = 0.0
    breakpoints: tuple = ()

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterOutOfRange("h must be positive and finite")
        if not (0.0 <= self.support_floor < self.h):
            raise ParameterOutOfRange("support_floor must lie in [0, h)")
        if self.near_h_lower_bound < 0 or self.near_h_width < 0:
            raise ParameterOutOfRange("near-h bounds must be non-negative")
        xs = np.linspace(0.0, self.h, 513)
        vals = np.asarray(self.density(xs), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals < -1e-12):
            raise ParameterOutOfRange("density must be finite and non-negative")
        pts = [p for p in (self.support_floor, *self.breakpoints) if 0.0 < p < self.h]
        total, err = integrate.quad(self.density, 0.0, self.h, epsabs=1e-12,
                                    epsrel=1e-12, limit=200,
                                    points=pts or None, full_output=1)[:2]
        if err > 1e-9:
            raise QuadratureFailure(
                f"density normalization did not converge (err {err:g})")
        if abs(total - 1.0) > 1e-9:
            raise NotAProbabilityVector(f"density integrates to {total!r}")


@dataclass(frozen=True)
class PhaseResult:
    phase: str  # "fit_get_richer" or "innovation_pays_off"
    lambda0: float | None = None


def _log_substituted(dist: FitnessDistribution, lam: float, weight):
    """Integrate f(x) / (lam - x) over [0, h] via u = -log(lam - x):
    with x(u) = lam - exp(-u) and dx = exp(-u) du the integrand becomes
    plain f(x(u)), which is bounded.  The caller passes f as `weight`."""
    u_lo = -math.log(lam)
    u_hi = -math.log(lam - dist.h)

    def g_of_u(u):
        return weight(lam - math.exp(-u))

    pts = sorted(-math.log(lam - p) for p in
                 (dist.support_floor, *dist.breakpoints) if 0.0 < p < dist.h)
    val, err = integrate.quad(g_of_u, u_lo, u_hi, epsabs=1e-12, epsrel=1e-12,
                              limit=300, points=pts or None, full_output=1)[:2]
    if err > 1e-9 * max(1.0, abs(val)):
        raise QuadratureFailure(
            f"integral at lambda={lam!r} did not converge (err {err:g})")
    return val


def attachment_integral(dist: FitnessDistribution, lam: float) -> float:
    """F(lambda) = integral of x g(x) / (lambda - x) over [0, h]; strictly
    decreasing on (h, infinity) with limit 0."""
    if not lam > dist.h:
        raise ParameterOutOfRange("F is defined for lambda > h")
    return _log_substituted(dist, lam, lambda x: x * dist.density(x))


def detect_phase(dist: FitnessDistribution) -> PhaseResult:
    """Phase decision and, in the spread phase, the normalizer lambda0.

    The spread phase holds when F tends to a value >= 1 as lambda
    approaches h from above (divergence included).  Divergence is settled
    analytically when the density declares a positive floor near h
    (comparison against the harmonic singularity); otherwise a probe at
    h + 1e-8 exceeding 1e3 is treated as divergence.
    """
    divergent = dist.near_h_lower_bound > 0 and dist.near_h_width > 0
    if not divergent:
        probe = attachment_integral(dist, dist.h + DIVERGENCE_PROBE_OFFSET)
        divergent = probe > DIVERGENCE_CUTOFF
        if not divergent:
            limit_proxy = attachment_integral(dist, dist.h + LIMIT_PROBE_OFFSET)
            if limit_proxy < 1.0:
                return PhaseResult("innovation_pays_off", None)

    lo = dist.h + LIMIT_PROBE_OFFSET
    hi = dist.h + max(dist.h, 1.0)
    for _ in range(200):
        if attachment_integral(dist, hi) < 1.0:
            break
        hi *= 2.0
    else:
        raise QuadratureFailure("could not bracket lambda0 from above")
    # F(lo) >= 1 by the phase decision; bisect F = 1
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = attachment_integral(dist, mid)
        if abs(fm - 1.0) <= 1e-10:
            return PhaseResult("fit_get_richer", mid)
        if fm > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return PhaseResult("fit_get_richer", 0.5 * (lo + hi))


def nu_interval(phase: PhaseResult, dist: FitnessDistribution,
                a: float, b: float) -> float:
    """Limiting edge-end mass of fitness band [a, b] in the spread phase:
    (lambda0/2) * integral of g/(lambda0 - x) over [a, b]."""
    if phase.phase != "fit_get_richer" or phase.lambda0 is None:
        raise WrongPhase("interval measure exists only in the spread phase")
    if not (0.0 <= a <= b < dist.h):
        raise IntervalOutOfRange(f"need 0 <= a <= b < h, got [{a!r}, {b!r}]")
    if a == b:
        return 0.0
    lam = phase.lambda0
    # with f = g the substitution gives plain integral of g(x(u)) du
    u_lo = -math.log(lam - a)
    u_hi = -math.log(lam - b)
    pts = sorted(-math.log(lam - p) for p in
                 (dist.support_floor, *dist.breakpoints) if a < p < b)
    val, err = integrate.quad(lambda u: dist.density(lam - math.exp(-u)),
                              u_lo, u_hi, epsabs=1e-12, epsrel=1e-12,
                              limit=300, points=pts or None, full_output=1)[:2]
    if err > 1e-10 * max(1.0, abs(val)):
        raise QuadratureFailure(f"interval integral did not converge (err {err:g})")
    return 0.5 * lam * val


def cross_check(dist: FitnessDistribution, n_cells: int, truncation: float,
                grid: int = 16) -> dict:
    """Spread-phase consistency between the generic equilibrium solver
    and the explicit interval measure, on the density truncated to
    [truncation, h] and renormalized (truncation > 0 gives the kernel a
    positive floor, which the solver route requires).

    The correspondence being checked is the m = 1 one; no simulation is
    involved.  Intervals are cell-aligned prefixes [truncation, edge] at
    decile edges plus the last interior edge.
    """
    if not (0.0 < truncation < dist.h):
        raise ParameterOutOfRange("truncation must lie in (0, h)")
    if n_cells < 2:
        raise ParameterOutOfRange("cross-check needs at least 2 cells")
    mass, err = integrate.quad(dist.density, truncation, dist.h, epsabs=1e-12,
                               epsrel=1e-12, limit=200, full_output=1)[:2]
    if err > 1e-9:
        raise QuadratureFailure("truncated mass integral did not converge")
    if mass <= 1e-9:
        raise DegenerateMass("density carries almost no mass above the truncation")

    base = dist.density
    cut = truncation
    scaled = lambda x: np.where(np.asarray(x) >= cut, base(x), 0.0) / mass
    near_w = min(dist.near_h_width, dist.h - cut)
    tdist = FitnessDistribution(density=scaled, h=dist.h, support_floor=cut,
                                near_h_lower_bound=dist.near_h_lower_bound / mass,
                                near_h_width=near_w,
                                breakpoints=dist.breakpoints)
    phase = detect_phase(tdist)
    if phase.phase != "fit_get_richer":
        raise WrongPhase("truncated density is not in the spread phase")

    domain = Domain.interval(cut, dist.h)
    spec = ContinuousSpaceSpec(domain=domain, density=lambda x: base(x) / mass,
                               kernel=make_kernel(domain, "fitness"),
                               density_breakpoints=tuple(
                                   p for p in dist.breakpoints if cut < p < dist.h))
    dspace = discretize(spec, n_cells, grid=grid)
    # geometric-midpoint matrix: certified bracket center, halves the
    # one-sided discretization bias of the pure sup/inf choices
    eq = solve_nu(dspace.finite_space("mid"), tol=1e-13)
    deq = solve_dustbin(dspace)

    edges = [c[1] for c in dspace.cells]
    idxs = sorted({min(max(1, round(q * n_cells / 10)), n_cells - 1)
                   for q in range(1, 10)} | {n_cells - 1})
    intervals = []
    for k in idxs:
        b = edges[k - 1]
        coarse = float(np.sum(eq.nu[:k]))
        exact = nu_interval(phase, tdist, cut, b)
        intervals.append({"a": cut, "b": b, "coarse": coarse, "exact": exact,
                          "gap": abs(coarse - exact)})
    lower, upper = borel_bracket(dspace, range(n_cells), equilibrium=deq)
    return {
        "lambda0": phase.lambda0,
        "truncation": cut,
        "n_cells": n_cells,
        "intervals": intervals,
        "max_gap": max(iv["gap"] for iv in intervals),
        "bracket_slack": upper - lower,
    }
