"""Location spaces for geometric preferential attachment.

Three layers:

* ``FiniteLocationSpace``: N points with newcomer weights mu and an
  attractiveness matrix ``kernel[i, j]`` = pull of an existing vertex at
  point i on a newcomer at point j.
* ``ContinuousSpaceSpec``: an interval or circle carrying a newcomer
  density and a kernel from a small named catalogue.  Every catalogue
  kernel ships with an exact log-Lipschitz constant and global
  floor/ceiling, which is what makes certified discretization possible.
* ``DiscretizedSpace``: equal cells with certified per-cell-pair
  sup/inf kernel bounds, the acceptance ratio gamma, and the coarse
  process parameters h (reject-bin attractiveness) and t (global
  inf/sup kernel ratio).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (
    DimensionMismatch,
    NegativeKernelEntry,
    NotAProbabilityVector,
    ParameterOutOfRange,
    QuadratureFailure,
)

PROB_ATOL = 1e-12
DENSITY_ATOL = 1e-9
# per-cell absolute quadrature budget for cell masses
CELL_QUAD_ATOL = 1e-10


@dataclass(frozen=True)
class Domain:
    """One-dimensional base space: a closed interval or a circle.

    Circle points are coordinates in [0, circumference); the metric wraps
    around.  ``diameter`` is the metric diameter, not the coordinate span.
    """

    kind: str  # "interval" or "circle"
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("interval", "circle"):
            raise ParameterOutOfRange(f"unknown domain kind {self.kind!r}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ParameterOutOfRange("domain endpoints must be finite")
        if self.hi <= self.lo:
            raise ParameterOutOfRange("domain needs hi > lo")

    @staticmethod
    def interval(lo: float, hi: float) -> "Domain":
        return Domain("interval", float(lo), float(hi))

    @staticmethod
    def circle(circumference: float) -> "Domain":
        return Domain("circle", 0.0, float(circumference))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def diameter(self) -> float:
        if self.kind == "circle":
            return self.length / 2.0
        return self.length

    def distance(self, x, y):
        """Metric distance, vectorized over numpy inputs."""
        d = np.abs(np.asarray(x) - np.asarray(y))
        if self.kind == "circle":
            d = np.minimum(d, self.length - d)
        return d

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "circle":
            return bool(np.all((x >= self.lo) & (x < self.hi)))
        return bool(np.all((x >= self.lo) & (x <= self.hi)))


@dataclass(frozen=True)
class Kernel:
    """Attractiveness kernel alpha(x, y): pull of a vertex at x on a
    newcomer at y.  Carries exact certification data: K bounds the
    Lipschitz constant of log alpha in each argument separately, and
    floor/ceiling bound alpha globally on the domain."""

    name: str
    params: tuple
    func: Callable
    log_lipschitz: float
    floor: float
    ceiling: float

    def __call__(self, x, y):
        return self.func(x, y)


def make_kernel(domain: Domain, name: str, **params) -> Kernel:
    """Build a kernel from the named catalogue.

    Catalogue (rho is the metric distance, diam the metric diameter):

    * ``constant``      alpha = c                params: value=c > 0
    * ``exp_decay``     alpha = exp(-c*rho)      params: rate=c > 0
    * ``shifted_power`` alpha = (s+rho)^(-beta)  params: shift=s > 0, power=beta > 0
    * ``fitness``       alpha(x, y) = x          params: none; interval with lo > 0
    """
    diam = domain.diameter
    if name == "constant":
        c = float(params.pop("value"))
        if params:
            raise ParameterOutOfRange(f"unexpected kernel params {sorted(params)}")
        if not (c > 0 and math.isfinite(c)):
            raise ParameterOutOfRange("constant kernel needs value > 0")
        return Kernel("constant", (c,), lambda x, y: np.broadcast_arrays(
            np.full_like(np.asarray(x, dtype=float), c), np.asarray(y, dtype=float))[0],
            0.0, c, c)
    if name == "exp_decay":
        c = float(params.pop("rate"))
        if params:
            raise ParameterOutOfRange(f"unexpected kernel params {sorted(params)}")
        if not (c > 0 and math.isfinite(c)):
            raise ParameterOutOfRange("exp_decay kernel needs rate > 0")
        func = lambda x, y: np.exp(-c * domain.distance(x, y))
        return Kernel("exp_decay", (c,), func, c, math.exp(-c * diam), 1.0)
    if name == "shifted_power":
        s = float(params.pop("shift"))
        beta = float(params.pop("power"))
        if params:
            raise ParameterOutOfRange(f"unexpected kernel params {sorted(params)}")
        if not (s > 0 and beta > 0):
            raise ParameterOutOfRange("shifted_power kernel needs shift > 0, power > 0")
        func = lambda x, y: (s + domain.distance(x, y)) ** (-beta)
        # d/d rho of log alpha is beta/(s+rho), maximal at rho=0
        return Kernel("shifted_power", (s, beta), func, beta / s,
                      (s + diam) ** (-beta), s ** (-beta))
    if name == "fitness":
        if params:
            raise ParameterOutOfRange(f"unexpected kernel params {sorted(params)}")
        if domain.kind != "interval" or domain.lo <= 0:
            raise ParameterOutOfRange(
                "fitness kernel needs an interval domain with lo > 0")
        func = lambda x, y: np.broadcast_arrays(
            np.asarray(x, dtype=float) + 0.0, np.asarray(y, dtype=float))[0]
        # |d log x / dx| = 1/x <= 1/lo
        return Kernel("fitness", (), func, 1.0 / domain.lo, domain.lo, domain.hi)
    raise ParameterOutOfRange(f"unknown kernel name {name!r}")


@dataclass(frozen=True, eq=False)
class FiniteLocationSpace:
    """N points with newcomer weights mu and attractiveness matrix
    kernel[i, j] (vertex location i, newcomer location j)."""

    mu: np.ndarray
    kernel: np.ndarray
    alpha_floor: float | None = None  # set when a positive floor is certified

    @property
    def n_points(self) -> int:
        return self.mu.shape[0]


def build_finite_space(mu, kernel, alpha_floor: float | None = None) -> FiniteLocationSpace:
    """Validate and freeze a finite location space."""
    mu = np.asarray(mu, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if mu.ndim != 1:
        raise DimensionMismatch("mu must be a vector")
    n = mu.shape[0]
    if kernel.shape != (n, n):
        raise DimensionMismatch(
            f"kernel shape {kernel.shape} does not match {n} locations")
    if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(kernel)):
        raise DimensionMismatch("mu and kernel entries must be finite")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > PROB_ATOL:
        raise NotAProbabilityVector(
            f"mu must be non-negative and sum to 1 (got sum {mu.sum()!r})")
    if np.any(kernel < 0):
        raise NegativeKernelEntry("kernel entries must be non-negative")
    if alpha_floor is not None:
        if not alpha_floor > 0:
            raise ParameterOutOfRange("alpha_floor must be positive")
        if np.any(kernel < alpha_floor):
            raise ParameterOutOfRange("kernel entries fall below alpha_floor")
    return FiniteLocationSpace(mu=mu, kernel=kernel, alpha_floor=alpha_floor)


def two_point_space(p: float, a: float) -> FiniteLocationSpace:
    """Two locations with weights (p, 1-p), unit self-attractiveness and
    cross-attractiveness a."""
    if not (0.0 < p < 1.0):
        raise ParameterOutOfRange(f"p must lie strictly inside (0, 1), got {p!r}")
    if not (a > 0 and math.isfinite(a)):
        raise ParameterOutOfRange(f"a must be positive and finite, got {a!r}")
    return build_finite_space([p, 1.0 - p], [[1.0, a], [a, 1.0]],
                              alpha_floor=min(1.0, a))


@dataclass(frozen=True, eq=False)
class ContinuousSpaceSpec:
    """Continuous model input: domain, newcomer density, catalogue kernel.

    The certification numbers (log_kernel_lipschitz, kernel_floor,
    kernel_ceiling) default to the kernel's own; they are stored
    explicitly so a discretization records exactly what it was promised.
    """

    domain: Domain
    density: Callable
    kernel: Kernel
    log_kernel_lipschitz: float = None  # type: ignore[assignment]
    kernel_floor: float = None  # type: ignore[assignment]
    kernel_ceiling: float = None  # type: ignore[assignment]
    density_breakpoints: tuple = ()

    def __post_init__(self):
        if self.log_kernel_lipschitz is None:
            object.__setattr__(self, "log_kernel_lipschitz", self.kernel.log_lipschitz)
        if self.kernel_floor is None:
            object.__setattr__(self, "kernel_floor", self.kernel.floor)
        if self.kernel_ceiling is None:
            object.__setattr__(self, "kernel_ceiling", self.kernel.ceiling)
        if not (0.0 < self.kernel_floor <= self.kernel_ceiling):
            raise ParameterOutOfRange("need 0 < kernel_floor <= kernel_ceiling")
        if self.log_kernel_lipschitz < 0:
            raise ParameterOutOfRange("log_kernel_lipschitz must be >= 0")
        self._validate_density()
        self._spot_check_kernel()

    def _validate_density(self):
        xs = _midpoints(self.domain.lo, self.domain.hi, 257)
        vals = np.asarray(self.density(xs), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise ParameterOutOfRange("density must be finite and non-negative")
        total, err = _quad(self.density, self.domain.lo, self.domain.hi,
                           points=self.density_breakpoints)
        if err > DENSITY_ATOL:
            raise QuadratureFailure(
                f"density normalization integral did not converge (err {err:g})")
        if abs(total - 1.0) > DENSITY_ATOL:
            raise NotAProbabilityVector(
                f"density integrates to {total!r}, expected 1")

    def _spot_check_kernel(self):
        xs = _midpoints(self.domain.lo, self.domain.hi, 33)
        vals = np.asarray(self.kernel(xs[:, None], xs[None, :]), dtype=float)
        tol = 1e-12 * max(1.0, self.kernel_ceiling)
        if np.any(vals < self.kernel_floor - tol) or np.any(vals > self.kernel_ceiling + tol):
            raise ParameterOutOfRange(
                "sampled kernel values leave [kernel_floor, kernel_ceiling]")


def _midpoints(lo: float, hi: float, k: int) -> np.ndarray:
    step = (hi - lo) / k
    return lo + step * (np.arange(k) + 0.5)


def _quad(f, lo, hi, points=()):
    """Adaptive quadrature returning (value, error estimate)."""
    pts = [p for p in points if lo < p < hi]
    out = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-12,
                         limit=200, points=pts or None, full_output=1)
    val, err = out[0], out[1]
    return val, err


@dataclass(frozen=True, eq=False)
class DiscretizedSpace:
    """Equal-cell partition with certified kernel bounds.

    a_sup[i, j] >= sup alpha over cell_i x cell_j and
    b_inf[i, j] <= inf alpha over the same product; gamma is the minimum
    of b/a over pairs, h the maximum of a_sup, t the certified global
    inf/sup ratio, epsilon the largest cell diameter.
    """

    spec: ContinuousSpaceSpec
    cells: tuple
    mu: np.ndarray
    a_sup: np.ndarray
    b_inf: np.ndarray
    gamma: float
    h: float
    t: float
    epsilon: float

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_index(self, x):
        """Cell containing x (vectorized); right domain endpoint goes to
        the last cell."""
        dom = self.spec.domain
        width = dom.length / self.n_cells
        idx = np.floor((np.asarray(x, dtype=float) - dom.lo) / width).astype(np.int64)
        return np.clip(idx, 0, self.n_cells - 1)

    def finite_space(self, which: str = "sup") -> FiniteLocationSpace:
        """Finite space over the cells using the chosen matrix: the sup
        bounds, the inf bounds, or their geometric midpoint."""
        if which == "sup":
            a = self.a_sup
        elif which == "inf":
            a = self.b_inf
        elif which == "mid":
            a = np.sqrt(self.a_sup * self.b_inf)
        else:
            raise ParameterOutOfRange(f"unknown matrix choice {which!r}")
        return build_finite_space(self.mu, a, alpha_floor=float(self.b_inf.min()) or None)

    def dustbin_matrices(self):
        """Weights and kernel extended by the reject bin at index 0:
        mu_ext[0] = 0 and a_ext[0, :] = a_ext[:, 0] = h."""
        n = self.n_cells
        mu_ext = np.zeros(n + 1)
        mu_ext[1:] = self.mu
        a_ext = np.full((n + 1, n + 1), self.h)
        a_ext[1:, 1:] = self.a_sup
        return mu_ext, a_ext


def _cell_grid(domain: Domain, cell, grid: int) -> np.ndarray:
    lo, hi = cell
    return _midpoints(lo, hi, grid)


def _certified_bounds(spec: ContinuousSpaceSpec, cell_i, cell_j, grid: int):
    """Grid + Lipschitz certified sup/inf of the kernel over a cell pair."""
    xi = _cell_grid(spec.domain, cell_i, grid)
    xj = _cell_grid(spec.domain, cell_j, grid)
    vals = np.asarray(spec.kernel(xi[:, None], xj[None, :]), dtype=float)
    # every point of the product is within (spacing/2, spacing/2) of a grid
    # node, so log alpha moves by at most K * (s_i + s_j)/2
    delta = ((cell_i[1] - cell_i[0]) / grid + (cell_j[1] - cell_j[0]) / grid) / 2.0
    infl = math.exp(spec.log_kernel_lipschitz * delta)
    sup_est = float(vals.max()) * infl
    inf_est = float(vals.min()) / infl
    # the global floor/ceiling are themselves certified bounds; clamping
    # with them only tightens the estimates
    sup_est = min(sup_est, spec.kernel_ceiling)
    inf_est = max(inf_est, spec.kernel_floor)
    return sup_est, inf_est


def kernel_bounds(spec: ContinuousSpaceSpec, cell_i, cell_j, grid: int = 16):
    """Certified (sup_estimate, inf_estimate) of the kernel over
    cell_i x cell_j; cells are (lo, hi) coordinate pairs."""
    for cell in (cell_i, cell_j):
        lo, hi = cell
        if not (spec.domain.lo <= lo < hi <= spec.domain.hi):
            raise ParameterOutOfRange(f"cell {cell!r} outside the domain")
    if grid < 1:
        raise ParameterOutOfRange("grid must be >= 1")
    return _certified_bounds(spec, cell_i, cell_j, grid)


def discretize(spec: ContinuousSpaceSpec, n_cells: int, grid: int = 16) -> DiscretizedSpace:
    """Partition the domain into n_cells equal cells and assemble the
    coarse model: cell masses by adaptive quadrature, certified kernel
    bound matrices, and the scalars gamma, h, t, epsilon."""
    if n_cells < 1:
        raise ParameterOutOfRange("n_cells must be >= 1")
    dom = spec.domain
    width = dom.length / n_cells
    edges = np.linspace(dom.lo, dom.hi, n_cells + 1)
    cells = tuple((float(edges[k]), float(edges[k + 1])) for k in range(n_cells))

    mu = np.empty(n_cells)
    for k, (lo, hi) in enumerate(cells):
        val, err = _quad(spec.density, lo, hi, points=spec.density_breakpoints)
        if err > CELL_QUAD_ATOL:
            raise QuadratureFailure(
                f"cell {k} mass integral did not converge (err {err:g})")
        mu[k] = max(val, 0.0)
    total = mu.sum()
    if not total > 0:
        raise NotAProbabilityVector("density carries no mass on the domain")
    mu /= total
    # absorb the remaining float residual so the stored masses sum to 1
    mu[int(np.argmax(mu))] += 1.0 - mu.sum()

    # one kernel evaluation over all cell grids at once, then blockwise
    # extrema; identical numbers to per-pair kernel_bounds calls
    xs = np.concatenate([_cell_grid(dom, c, grid) for c in cells])
    vals = np.asarray(spec.kernel(xs[:, None], xs[None, :]), dtype=float)
    blocks = vals.reshape(n_cells, grid, n_cells, grid)
    delta = width / grid
    infl = math.exp(spec.log_kernel_lipschitz * delta)
    a_sup = blocks.max(axis=(1, 3)) * infl
    b_inf = blocks.min(axis=(1, 3)) / infl
    np.minimum(a_sup, spec.kernel_ceiling, out=a_sup)
    np.maximum(b_inf, spec.kernel_floor, out=b_inf)

    gamma = float((b_inf / a_sup).min())
    h = float(a_sup.max())
    t = float(b_inf.min() / h)
    epsilon = min(width, dom.diameter)
    return DiscretizedSpace(spec=spec, cells=cells, mu=mu, a_sup=a_sup,
                            b_inf=b_inf, gamma=gamma, h=h, t=t, epsilon=epsilon)
