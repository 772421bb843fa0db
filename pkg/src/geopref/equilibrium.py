"""Limiting edge-end measures by Lyapunov minimization.

The growth process's per-location edge-end fractions follow, in the
large-graph limit, the flow of a drift field G on the simplex.  G is the
negative scaled gradient of a strictly convex function V, so the limit
measure nu is V's unique interior minimum and can be found by damped
Euler steps with a descent check.  The fitness vector phi comes out of
the same fixed point and satisfies exact identities used as invariants.

A parallel construction handles the coarse process with a reject bin at
index 0: same solver, drift and V adjusted for the acceptance ratio
gamma and the bin attractiveness h.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import (
    BoundaryPoint,
    DegenerateMass,
    DimensionMismatch,
    NoSignChange,
    NonConvergence,
    NotAProbabilityVector,
    ParameterOutOfRange,
    ZeroKernelRow,
)
from .space import DiscretizedSpace, FiniteLocationSpace

SIMPLEX_ATOL = 1e-12
INTERIOR_FLOOR = 1e-14


def as_simplex(y, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate a strictly interior simplex point and return it as float64."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch("simplex point must be a vector")
    if np.any(y <= 0) or np.any(~np.isfinite(y)):
        raise BoundaryPoint("simplex point must be strictly positive")
    if abs(y.sum() - 1.0) > atol:
        raise NotAProbabilityVector(f"coordinates sum to {y.sum()!r}, expected 1")
    return y


def lyapunov_V(y, space: FiniteLocationSpace) -> float:
    """Convex potential whose negative scaled gradient is the drift.

    Written with sum(y) in place of the constant 1 so that the gradient
    identity G_i = -y_i dV/dy_i holds on the whole positive orthant, not
    just on the simplex; on the simplex both forms coincide.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise BoundaryPoint("V needs strictly positive coordinates")
    col = y @ space.kernel  # col[j] = sum_k y_k a[k, j]
    return float(y.sum() - 0.5 * (space.mu @ (np.log(y) + np.log(col))))


def vector_field_G(y, space: FiniteLocationSpace) -> np.ndarray:
    """Drift of the edge-end fractions: half the newcomer weight plus half
    the expected per-step attachment mass, minus the current point."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise BoundaryPoint("drift needs strictly positive coordinates")
    col = y @ space.kernel
    if np.any(col <= 0):
        raise BoundaryPoint("attachment normalizer vanished")
    pull = space.kernel @ (space.mu / col)  # pull[i] = sum_j mu_j a[i,j]/col[j]
    return 0.5 * space.mu + 0.5 * y * pull - y


def compute_phi(space: FiniteLocationSpace, nu) -> np.ndarray:
    """Location fitness at the measure nu: expected attachment weight per
    edge-end, phi[i] = sum_j mu_j a[i,j] / sum_k a[k,j] nu_k."""
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise BoundaryPoint("phi needs an interior measure")
    col = nu @ space.kernel
    if np.any(col <= 0):
        raise BoundaryPoint("attachment normalizer vanished")
    return space.kernel @ (space.mu / col)


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    nu: np.ndarray
    phi: np.ndarray
    lyapunov_value: float
    residual: float
    iterations: int

    def identity_gaps(self, space: FiniteLocationSpace) -> dict:
        """Exact-identity diagnostics; all should be near zero for solver
        output (tolerances depend on conditioning of mu/nu)."""
        with np.errstate(divide="ignore"):
            phi_alt = 2.0 - space.mu / self.nu
        return {
            "sum_nu_phi": float(self.nu @ self.phi),
            "max_phi_identity_gap": float(np.max(np.abs(self.phi - phi_alt))),
            "max_fixed_point_gap": float(np.max(np.abs(
                self.nu - 0.5 * (space.mu + self.nu * self.phi)))),
        }

    def to_report(self, space: FiniteLocationSpace) -> dict:
        gaps = self.identity_gaps(space)
        return {
            "nu": self.nu.tolist(),
            "phi": self.phi.tolist(),
            "residual": self.residual,
            "identities": {
                "sum_nu_phi": gaps["sum_nu_phi"],
                "max_phi_identity_gap": gaps["max_phi_identity_gap"],
                "max_fixed_point_gap": gaps["max_fixed_point_gap"],
            },
            "bounds": {},
        }


def _descend(y0, field, value, tol, max_iter, floor=INTERIOR_FLOOR,
             trace=None):
    """Damped Euler y <- y + eta*G with backtracking line search.

    While the potential still resolves in float, a step must decrease
    it.  Near the minimum the potential plateaus at rounding level long
    before the residual reaches tight tolerances; there a step is
    accepted only if the residual itself contracts, which rules out the
    large-eta oscillation the plateau would otherwise admit.
    Returns (y, iterations).
    """
    y = np.array(y0, dtype=float)
    eta = 1.0
    res = float("inf")
    v_cur = value(y)
    if trace is not None:
        trace.append(v_cur)
    for it in range(1, max_iter + 1):
        g = field(y)
        res = float(np.max(np.abs(g)))
        if res <= tol:
            return y, it - 1
        eta = min(eta * 1.3, 4.0)
        slack = 4e-16 * (1.0 + abs(v_cur))
        while True:
            cand = np.maximum(y + eta * g, floor)
            cand /= cand.sum()
            v_new = value(cand)
            if v_new <= v_cur - slack:
                break
            res_new = float(np.max(np.abs(field(cand))))
            if v_new <= v_cur + slack and res_new <= res * 0.9999:
                break
            eta *= 0.5
            if eta <= 1e-12:
                break
        y = cand
        v_cur = v_new
        if trace is not None:
            trace.append(v_cur)
    raise NonConvergence(
        f"no convergence to {tol:g} within {max_iter} iterations "
        f"(residual {res:g})")


def solve_nu(space: FiniteLocationSpace, tol: float = 1e-12,
             max_iter: int = 1_000_000) -> EquilibriumResult:
    """Minimize the potential over the interior of the simplex.

    Requires strictly positive kernel entries (the potential is then
    finite and strictly convex inside, with a unique minimum) and
    strictly positive weights (zero-mass locations have no interior
    equilibrium and are rejected).
    """
    if np.any(space.kernel <= 0):
        raise ZeroKernelRow("equilibrium solve needs strictly positive kernel entries")
    if np.any(space.mu <= 0):
        raise DegenerateMass("equilibrium solve needs strictly positive weights")
    y, iters = _descend(
        space.mu, lambda y: vector_field_G(y, space),
        lambda y: lyapunov_V(y, space), tol, max_iter)
    phi = compute_phi(space, y)
    g = vector_field_G(y, space)
    return EquilibriumResult(nu=y, phi=phi,
                             lyapunov_value=lyapunov_V(y, space),
                             residual=float(np.max(np.abs(g))),
                             iterations=iters)


def solve_two_point(p: float, a: float) -> float:
    """Root of the two-location balance equation by bisection.

    The balance function is strictly decreasing from +inf to -inf on
    (0, 1); its unique root is the weight of the first location in the
    limit measure.
    """
    if not (0.0 < p < 1.0) or not a > 0:
        raise ParameterOutOfRange("need 0 < p < 1 and a > 0")

    def f(y):
        return (p * (1.0 / y + (1.0 - a) / (y + a * (1.0 - y)))
                - (1.0 - p) * (1.0 / (1.0 - y) + (1.0 - a) / (1.0 - y + a * y)))

    lo, hi = 1e-15, 1.0 - 1e-15
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise NoSignChange("balance function does not change sign on (0, 1)")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        fmid = f(mid)
        if fmid > 0:
            lo = mid
        else:
            hi = mid
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-14 and abs(f(mid)) <= 1e-13:
            break
    return mid


def dustbin_field(y, mu_ext, a_ext, gamma) -> np.ndarray:
    """Drift of the coarse process with reject bin at index 0: newcomer
    source (1-gamma, mu_1, ..., mu_N)/2 plus the gamma-thinned attachment
    pull, minus the current point."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise BoundaryPoint("drift needs strictly positive coordinates")
    col = y @ a_ext
    w = np.where(mu_ext > 0, mu_ext / col, 0.0)
    source = mu_ext.copy()
    source[0] = 1.0 - gamma
    return 0.5 * source + 0.5 * gamma * y * (a_ext @ w) - y


def dustbin_V(y, mu_ext, a_ext, gamma) -> float:
    """Potential for the coarse drift; same extended-orthant convention
    as lyapunov_V.  Zero-mass cells contribute no barrier term."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise BoundaryPoint("V needs strictly positive coordinates")
    col = y @ a_ext
    source = mu_ext.copy()
    source[0] = 1.0 - gamma
    logy = np.where(source > 0, np.log(y), 0.0)
    logcol = np.where(mu_ext > 0, np.log(col), 0.0)
    return float(y.sum() - 0.5 * (source @ logy) - 0.5 * gamma * (mu_ext @ logcol))


@dataclass(frozen=True, eq=False)
class DustbinEquilibrium:
    nu: np.ndarray  # index 0 is the reject bin
    phi: np.ndarray
    gamma: float
    h: float
    t: float
    residual: float
    iterations: int

    def check_bounds(self, identity_tol: float = 1e-8,
                     bound_tol: float = 1e-10) -> dict:
        """Bin-measure identity and the coarse-process inequalities; each
        entry is (value, limit, ok)."""
        nu0, phi0 = float(self.nu[0]), float(self.phi[0])
        ident = abs(nu0 - (1.0 - self.gamma) / (2.0 - phi0))
        checks = {
            "nu0_identity_gap": (ident, identity_tol, ident <= identity_tol),
            "phi0_upper": (phi0, 2.0 / (1.0 + self.t),
                           phi0 <= 2.0 / (1.0 + self.t) + bound_tol),
            "nu0_upper": (nu0, (1.0 - self.gamma) * (1.0 + self.t) / (2.0 * self.t),
                          nu0 <= (1.0 - self.gamma) * (1.0 + self.t) / (2.0 * self.t)
                          + bound_tol),
            "nu0_half": (nu0, 0.5, nu0 <= 0.5 + bound_tol),
            "phi_cells_lower": (float(self.phi[1:].min()), self.t * phi0,
                                bool(np.all(self.phi[1:] >= self.t * phi0 - bound_tol))),
        }
        return checks

    def to_report(self) -> dict:
        checks = self.check_bounds()
        return {
            "nu": self.nu.tolist(),
            "phi": self.phi.tolist(),
            "residual": self.residual,
            "identities": {
                "sum_nu_phi": float(self.nu @ self.phi),
                "max_phi_identity_gap": checks["nu0_identity_gap"][0],
            },
            "bounds": {name: {"value": v, "limit": lim, "ok": bool(ok)}
                       for name, (v, lim, ok) in checks.items()},
            "gamma": self.gamma,
            "h": self.h,
            "t": self.t,
        }


def solve_dustbin(dspace: DiscretizedSpace, tol: float = 1e-12,
                  max_iter: int = 1_000_000) -> DustbinEquilibrium:
    """Equilibrium of the coarse process over bin + cells.

    At gamma = 1 the bin coordinate has no interior equilibrium (its
    weight is exactly zero); the solver floor then pins it at 1e-14,
    which still meets the residual tolerance because the bin drift
    scales with the coordinate itself.
    """
    if np.any(dspace.b_inf <= 0):
        raise ZeroKernelRow("coarse solve needs strictly positive inf bounds")
    mu_ext, a_ext = dspace.dustbin_matrices()
    gamma = dspace.gamma

    n1 = mu_ext.shape[0]
    y0 = np.empty(n1)
    y0[0] = max((1.0 - gamma) / 2.0, 1e-8)
    y0[1:] = np.maximum(dspace.mu, 1e-12)
    y0 *= 1.0 / y0.sum()

    y, iters = _descend(
        y0, lambda y: dustbin_field(y, mu_ext, a_ext, gamma),
        lambda y: dustbin_V(y, mu_ext, a_ext, gamma), tol, max_iter)
    col = y @ a_ext
    phi = gamma * (a_ext @ np.where(mu_ext > 0, mu_ext / col, 0.0))
    g = dustbin_field(y, mu_ext, a_ext, gamma)
    return DustbinEquilibrium(nu=y, phi=phi, gamma=gamma, h=dspace.h,
                              t=dspace.t,
                              residual=float(np.max(np.abs(g))),
                              iterations=iters)


def borel_bracket(dspace: DiscretizedSpace, cell_subset: Iterable[int],
                  equilibrium: DustbinEquilibrium | None = None):
    """Certified (lower, upper) bracket for the limiting edge-end mass of
    the union of the given cells (0-based cell indices).

    lower sums the coarse equilibrium weights of the cells; upper adds
    the coarse-approximation slack (1-gamma)(1+t)/(2t).
    """
    cells = sorted(set(int(c) for c in cell_subset))
    if cells and not (0 <= cells[0] and cells[-1] < dspace.n_cells):
        raise ParameterOutOfRange("cell subset outside the partition")
    if equilibrium is None:
        equilibrium = solve_dustbin(dspace)
    lower = float(sum(equilibrium.nu[c + 1] for c in cells))
    slack = (1.0 - dspace.gamma) * (1.0 + dspace.t) / (2.0 * dspace.t)
    return lower, lower + slack
