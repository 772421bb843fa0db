"""Growth simulators for geometric preferential attachment.

Four processes share one mechanic: each step a newcomer appears at a
random location and attaches m edges to existing vertices, choosing a
vertex with probability proportional to degree times attractiveness.

* ``grow``: finite location set, exact.
* ``grow_continuous``: interval/circle locations, exact, O(vertices)
  per step.
* ``grow_dustbin``: coarse process over partition cells plus a reject
  bin at location 0.  Each edge is accepted with probability gamma,
  otherwise it attaches to a brand-new degree-1 vertex in the bin.
* ``grow_coupled``: continuous and coarse processes driven by shared
  uniforms so that coarse per-cell edge-end counts never exceed the
  continuous ones; the inequality is asserted after every step.

Randomness: a counter-based 64-bit generator (numpy Philox).  Stream
order is part of the reproducibility contract and is documented on each
grower.  Vertex choice within a finite location uses a per-location
Fenwick tree over degrees, so updates and draws cost O(log vertices).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    CouplingViolation,
    DensitySamplingFailure,
    DimensionMismatch,
    EmptyGraph,
    ParameterOutOfRange,
    ZeroAttractiveness,
)
from .space import ContinuousSpaceSpec, DiscretizedSpace, FiniteLocationSpace


def make_rng(seed: int) -> np.random.Generator:
    """The package-wide generator: counter-based, 64-bit, splittable by
    seed.  All growers draw doubles from it one at a time."""
    return np.random.Generator(np.random.Philox(seed))


class _Fenwick:
    """Growable Fenwick tree over non-negative integer weights."""

    __slots__ = ("_tree", "_n", "total")

    def __init__(self):
        self._tree = [0]  # 1-based; slot 0 unused
        self._n = 0
        self.total = 0

    def __len__(self):
        return self._n

    def _prefix(self, i):
        s = 0
        while i > 0:
            s += self._tree[i]
            i -= i & (-i)
        return s

    def append(self, w):
        # node n covers (n - lowbit(n), n]; seed it from existing prefixes
        self._n += 1
        n = self._n
        lob = n & (-n)
        self._tree.append(self._prefix(n - 1) - self._prefix(n - lob) + w)
        self.total += w

    def add(self, index, delta):
        i = index + 1
        while i <= self._n:
            self._tree[i] += delta
            i += i & (-i)
        self.total += delta

    def find(self, r):
        """0-based index of the element whose cumulative interval
        contains r; requires 0 <= r < total."""
        if r >= self.total:  # float rounding guard at the right edge
            r = self.total - 0.5
        i = 0
        mask = 1 << self._n.bit_length()
        tree = self._tree
        n = self._n
        while mask:
            j = i + mask
            if j <= n and tree[j] <= r:
                i = j
                r -= tree[j]
            mask >>= 1
        return i


def _validate_seed_graph(n_vertices: int, edges) -> tuple:
    """Seed graphs must be simple and connected with >= 2 vertices."""
    if n_vertices < 2:
        raise ParameterOutOfRange("seed graph needs at least 2 vertices")
    seen = set()
    adj = [[] for _ in range(n_vertices)]
    norm = []
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n_vertices and 0 <= v < n_vertices):
            raise DimensionMismatch(f"seed edge {e!r} references missing vertex")
        if u == v:
            raise ParameterOutOfRange(f"seed graph may not contain self-loop {e!r}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParameterOutOfRange(f"seed graph may not contain multi-edge {e!r}")
        seen.add(key)
        adj[u].append(v)
        adj[v].append(u)
        norm.append(key)
    stack, reached = [0], {0}
    while stack:
        for w in adj[stack.pop()]:
            if w not in reached:
                reached.add(w)
                stack.append(w)
    if len(reached) != n_vertices:
        raise ParameterOutOfRange("seed graph must be connected")
    return tuple(norm)


@dataclass(frozen=True)
class SimConfig:
    """Run recipe: out-degree m, step count, seed, seed-graph choice.

    The default seed graph is the complete graph on n0 = m+1 vertices
    with locations drawn iid from the newcomer weights; both pieces can
    be overridden explicitly.
    """

    m: int
    steps: int
    seed: int
    n0: int | None = None
    seed_edges: tuple | None = None
    seed_locations: tuple | None = None
    record_trajectory_every: int = 1
    record_edges: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ParameterOutOfRange("m must be >= 1")
        if self.steps < 0:
            raise ParameterOutOfRange("steps must be >= 0")
        if self.record_trajectory_every < 1:
            raise ParameterOutOfRange("trajectory stride must be >= 1")
        if self.n0 is not None and self.n0 < 2:
            raise ParameterOutOfRange("seed graph needs n0 >= 2")

    def resolve_seed_graph(self):
        """-> (n0, edge tuple); explicit edges win over the complete graph."""
        if self.seed_edges is not None:
            n0 = 1 + max(max(u, v) for u, v in self.seed_edges)
            if self.n0 is not None and self.n0 != n0:
                raise DimensionMismatch("n0 conflicts with explicit seed edges")
            return n0, _validate_seed_graph(n0, self.seed_edges)
        n0 = self.n0 if self.n0 is not None else self.m + 1
        edges = tuple((u, v) for u in range(n0) for v in range(u + 1, n0))
        return n0, _validate_seed_graph(n0, edges)


class GraphState:
    """Growing multigraph over a fixed finite set of locations.

    Tracks per-vertex location and degree, per-location edge-end totals
    Y, and a per-location Fenwick tree over degrees for O(log) weighted
    vertex draws.  Edges are retained only when requested.
    """

    def __init__(self, n_locations: int, m: int, seed_locations: Sequence[int],
                 seed_edges, record_edges: bool = False):
        n0 = len(seed_locations)
        edges = _validate_seed_graph(n0, seed_edges)
        if n_locations < 1:
            raise ParameterOutOfRange("need at least one location")
        if m < 1:
            raise ParameterOutOfRange("m must be >= 1")
        self.n_locations = n_locations
        self.m = m
        self.step = 0
        self.e0 = len(edges)
        self.total_edge_ends = 0
        self.Y = np.zeros(n_locations, dtype=np.int64)
        self.locations: list[int] = []
        self.degrees: list[int] = []
        self.birth_step: list[int] = []
        self._slots: list[int] = []
        self._loc_trees = [_Fenwick() for _ in range(n_locations)]
        self._loc_members: list[list[int]] = [[] for _ in range(n_locations)]
        self.edges: list | None = [] if record_edges else None
        for loc in seed_locations:
            loc = int(loc)
            if not (0 <= loc < n_locations):
                raise DimensionMismatch(f"seed location {loc} out of range")
            self.add_vertex(loc, birth=0)
        for u, v in edges:
            self.bump_degree(u, 1)
            self.bump_degree(v, 1)
        if self.edges is not None:
            self.edges.extend(edges)

    @property
    def n_vertices(self) -> int:
        return len(self.degrees)

    def add_vertex(self, location: int, birth: int) -> int:
        vid = len(self.degrees)
        self.locations.append(location)
        self.degrees.append(0)
        self.birth_step.append(birth)
        members = self._loc_members[location]
        self._slots.append(len(members))
        members.append(vid)
        self._loc_trees[location].append(0)
        return vid

    def bump_degree(self, vid: int, delta: int) -> None:
        loc = self.locations[vid]
        self.degrees[vid] += delta
        self.Y[loc] += delta
        self.total_edge_ends += delta
        self._loc_trees[loc].add(self._slots[vid], delta)

    def sample_vertex_at(self, location: int, u: float) -> int:
        """Vertex at the location, degree-weighted; u is uniform(0,1)."""
        tree = self._loc_trees[location]
        slot = tree.find(u * tree.total)
        return self._loc_members[location][slot]

    def apply_step(self, newcomer_loc: int, targets: Sequence[int]) -> int:
        vid = self.add_vertex(newcomer_loc, birth=self.step + 1)
        for t in targets:
            self.bump_degree(t, 1)
        self.bump_degree(vid, len(targets))
        if self.edges is not None:
            self.edges.extend((vid, t) for t in targets)
        self.step += 1
        return vid


class DustbinState(GraphState):
    """Coarse-process state: locations 0..N with 0 the reject bin."""

    def __init__(self, n_cells: int, m: int, seed_locations, seed_edges,
                 gamma: float, h: float, record_edges: bool = False):
        super().__init__(n_cells + 1, m, seed_locations, seed_edges,
                         record_edges=record_edges)
        self.gamma = gamma
        self.h = h


def seed_finite_state(space: FiniteLocationSpace, config: SimConfig,
                      rng: np.random.Generator) -> GraphState:
    """Seed-graph state over a finite space.  When locations are iid the
    stream consumes one uniform per seed vertex, before any growth."""
    n0, edges = config.resolve_seed_graph()
    if config.seed_locations is not None:
        locs = tuple(int(x) for x in config.seed_locations)
        if len(locs) != n0:
            raise DimensionMismatch("seed_locations length does not match n0")
    else:
        mu_cum = np.cumsum(space.mu)
        locs = tuple(int(min(np.searchsorted(mu_cum, rng.random(), side="right"),
                             space.n_points - 1)) for _ in range(n0))
    return GraphState(space.n_points, config.m, locs, edges,
                      record_edges=config.record_edges)


def grow(state: GraphState, space: FiniteLocationSpace, steps: int,
         rng: np.random.Generator) -> GraphState:
    """Exact finite-space growth.

    Stream order per step: newcomer-location uniform, then per edge a
    target-location uniform followed by a within-location vertex uniform.
    The m targets are drawn against the pre-step state, so self-loops are
    impossible and multi-edges are allowed.
    """
    if space.n_points != state.n_locations:
        raise DimensionMismatch("state and space disagree on location count")
    mu_cum = np.cumsum(space.mu)
    aT = np.ascontiguousarray(space.kernel.T)
    n_loc = state.n_locations
    for _ in range(steps):
        j = int(min(np.searchsorted(mu_cum, rng.random(), side="right"), n_loc - 1))
        w = state.Y * aT[j]
        tot = float(w.sum())
        if tot <= 0:
            raise ZeroAttractiveness(
                f"no attachment weight for a newcomer at location {j}")
        wc = np.cumsum(w)
        targets = []
        for _ in range(state.m):
            r = rng.random() * tot
            i = int(min(np.searchsorted(wc, r, side="right"), n_loc - 1))
            if w[i] == 0:  # float edge; land on a carrying location
                i = int(np.argmax(w))
            targets.append(state.sample_vertex_at(i, rng.random()))
        state.apply_step(j, targets)
    return state


def empirical_measure(state: GraphState) -> np.ndarray:
    """Per-location edge-end fractions Y_i / total."""
    if state.total_edge_ends == 0:
        raise EmptyGraph("no edge ends yet")
    return state.Y / state.total_edge_ends


def degree_histogram(state: GraphState, location_index: int):
    """(degree -> count) over vertices at the location, plus the vertex
    count there."""
    if not (0 <= location_index < state.n_locations):
        raise DimensionMismatch(f"no location {location_index}")
    members = state._loc_members[location_index]
    hist = Counter(state.degrees[v] for v in members)
    return dict(hist), len(members)


class _DensitySampler:
    """Inverse-CDF sampler over the domain: 2^14 knots, monotone linear
    interpolation."""

    KNOTS = 1 << 14

    def __init__(self, spec: ContinuousSpaceSpec):
        xs = np.linspace(spec.domain.lo, spec.domain.hi, self.KNOTS + 1)
        pdf = np.asarray(spec.density(xs), dtype=float)
        if np.any(~np.isfinite(pdf)) or np.any(pdf < 0):
            raise DensitySamplingFailure("density must be finite and non-negative")
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5
                                               * np.diff(xs))])
        if cdf[-1] <= 0:
            raise DensitySamplingFailure("density has no mass on the domain")
        cdf /= cdf[-1]
        np.maximum.accumulate(cdf, out=cdf)
        self._xs = xs
        self._cdf = cdf

    def ppf(self, u: float) -> float:
        return float(np.interp(u, self._cdf, self._xs))


class ContinuousGraphState:
    """Growth state with real-valued vertex locations.

    Degrees and locations live in capacity-doubling numpy buffers so the
    per-step full pass is a handful of vectorized operations.
    """

    def __init__(self, m: int, seed_locations: Sequence[float], seed_edges,
                 record_edges: bool = False):
        n0 = len(seed_locations)
        edges = _validate_seed_graph(n0, seed_edges)
        if m < 1:
            raise ParameterOutOfRange("m must be >= 1")
        self.m = m
        self.step = 0
        self.e0 = len(edges)
        self.total_edge_ends = 0
        cap = max(16, 2 * n0)
        self._X = np.empty(cap)
        self._deg = np.zeros(cap, dtype=np.int64)
        self._birth = np.zeros(cap, dtype=np.int64)
        self._n = 0
        self.edges: list | None = [] if record_edges else None
        for x in seed_locations:
            self.add_vertex(float(x), birth=0)
        for u, v in edges:
            self._deg[u] += 1
            self._deg[v] += 1
            self.total_edge_ends += 2
        if self.edges is not None:
            self.edges.extend(edges)

    @property
    def n_vertices(self) -> int:
        return self._n

    @property
    def X(self) -> np.ndarray:
        return self._X[:self._n]

    @property
    def degrees(self) -> np.ndarray:
        return self._deg[:self._n]

    @property
    def birth_step(self) -> np.ndarray:
        return self._birth[:self._n]

    def _ensure_capacity(self):
        if self._n == self._X.shape[0]:
            cap = 2 * self._n
            for name in ("_X", "_deg", "_birth"):
                buf = getattr(self, name)
                new = np.empty(cap, dtype=buf.dtype)
                new[:self._n] = buf
                setattr(self, name, new)

    def add_vertex(self, x: float, birth: int) -> int:
        self._ensure_capacity()
        vid = self._n
        self._X[vid] = x
        self._deg[vid] = 0
        self._birth[vid] = birth
        self._n += 1
        return vid

    def apply_step(self, x: float, targets: Sequence[int]) -> int:
        vid = self.add_vertex(x, birth=self.step + 1)
        for t in targets:
            self._deg[t] += 1
        self._deg[vid] = len(targets)
        self.total_edge_ends += 2 * len(targets)
        if self.edges is not None:
            self.edges.extend((vid, t) for t in targets)
        self.step += 1
        return vid

    def cell_edge_ends(self, dspace: DiscretizedSpace) -> np.ndarray:
        """Aggregate Y over partition cells (on demand; the continuous
        state keeps no per-cell totals)."""
        cells = dspace.cell_index(self.X)
        return np.bincount(cells, weights=self.degrees,
                           minlength=dspace.n_cells).astype(np.int64)

    def cell_measure(self, dspace: DiscretizedSpace) -> np.ndarray:
        if self.total_edge_ends == 0:
            raise EmptyGraph("no edge ends yet")
        return self.cell_edge_ends(dspace) / self.total_edge_ends


def seed_continuous_state(spec: ContinuousSpaceSpec, config: SimConfig,
                          rng: np.random.Generator) -> ContinuousGraphState:
    """Seed-graph state with locations drawn from the density (one
    uniform per seed vertex) unless given explicitly."""
    n0, edges = config.resolve_seed_graph()
    if config.seed_locations is not None:
        locs = tuple(float(x) for x in config.seed_locations)
        if len(locs) != n0:
            raise DimensionMismatch("seed_locations length does not match n0")
        if not spec.domain.contains(np.asarray(locs)):
            raise DimensionMismatch("seed locations outside the domain")
    else:
        sampler = _DensitySampler(spec)
        locs = tuple(sampler.ppf(rng.random()) for _ in range(n0))
    return ContinuousGraphState(config.m, locs, edges,
                                record_edges=config.record_edges)


def grow_continuous(state: ContinuousGraphState, spec: ContinuousSpaceSpec,
                    steps: int, rng: np.random.Generator) -> ContinuousGraphState:
    """Exact continuous-space growth; one full vectorized pass over the
    current vertices per step.

    Stream order per step: newcomer-location uniform, then one uniform
    per edge for the target vertex.
    """
    sampler = getattr(state, "_sampler", None)
    if sampler is None or getattr(state, "_sampler_spec", None) is not spec:
        sampler = _DensitySampler(spec)
        state._sampler = sampler
        state._sampler_spec = spec
    kernel = spec.kernel
    for _ in range(steps):
        x = sampler.ppf(rng.random())
        w = state.degrees * kernel(state.X, x)
        tot = float(w.sum())
        if tot <= 0:
            raise ZeroAttractiveness(f"no attachment weight at location {x}")
        wc = np.cumsum(w)
        n = state.n_vertices
        targets = []
        for _ in range(state.m):
            r = rng.random() * tot
            v = int(min(np.searchsorted(wc, r, side="right"), n - 1))
            targets.append(v)
        state.apply_step(x, targets)
    return state


def cell_degree_histogram(state: ContinuousGraphState, dspace: DiscretizedSpace,
                          cell: int):
    """(degree -> count) over vertices in the cell, plus the vertex count."""
    if not (0 <= cell < dspace.n_cells):
        raise DimensionMismatch(f"no cell {cell}")
    mask = dspace.cell_index(state.X) == cell
    degs = state.degrees[mask]
    return dict(Counter(int(d) for d in degs)), int(mask.sum())


def seed_dustbin_state(dspace: DiscretizedSpace, config: SimConfig,
                       rng: np.random.Generator) -> DustbinState:
    """Standalone coarse-process seed: cell locations drawn from the cell
    masses (one uniform per seed vertex) unless given explicitly as cell
    indices 1..N."""
    n0, edges = config.resolve_seed_graph()
    if config.seed_locations is not None:
        locs = tuple(int(x) for x in config.seed_locations)
        if len(locs) != n0:
            raise DimensionMismatch("seed_locations length does not match n0")
        if any(loc == 0 for loc in locs):
            raise ParameterOutOfRange("no seed vertex may sit in the reject bin")
    else:
        mu_cum = np.cumsum(dspace.mu)
        locs = tuple(1 + int(min(np.searchsorted(mu_cum, rng.random(), side="right"),
                                 dspace.n_cells - 1)) for _ in range(n0))
    return DustbinState(dspace.n_cells, config.m, locs, edges,
                        gamma=dspace.gamma, h=dspace.h,
                        record_edges=config.record_edges)


def grow_dustbin(state: DustbinState, dspace: DiscretizedSpace, steps: int,
                 rng: np.random.Generator) -> DustbinState:
    """Coarse process with reject bin.

    Stream order per step: newcomer-cell uniform, then per edge an
    acceptance uniform and, only when accepted, a target-location
    uniform and a within-location vertex uniform.  A rejected edge
    creates a fresh degree-1 vertex at location 0.
    """
    if state.n_locations != dspace.n_cells + 1:
        raise DimensionMismatch("state and discretization disagree on cells")
    mu_ext, a_ext = dspace.dustbin_matrices()
    mu_cum = np.cumsum(dspace.mu)
    aT = np.ascontiguousarray(a_ext.T)
    gamma = state.gamma
    n_loc = state.n_locations
    for _ in range(steps):
        cell = int(min(np.searchsorted(mu_cum, rng.random(), side="right"),
                       dspace.n_cells - 1))
        j = cell + 1
        w = state.Y * aT[j]
        tot = float(w.sum())
        if tot <= 0:
            raise ZeroAttractiveness(f"no attachment weight at cell {cell}")
        wc = np.cumsum(w)
        targets = []  # vertex ids, or None for a rejection
        for _ in range(state.m):
            if rng.random() < gamma:
                r = rng.random() * tot
                i = int(min(np.searchsorted(wc, r, side="right"), n_loc - 1))
                if w[i] == 0:
                    i = int(np.argmax(w))
                targets.append(state.sample_vertex_at(i, rng.random()))
            else:
                targets.append(None)
        vid = state.add_vertex(j, birth=state.step + 1)
        accepted = 0
        for t in targets:
            if t is None:
                reject = state.add_vertex(0, birth=state.step + 1)
                state.bump_degree(reject, 1)
                if state.edges is not None:
                    state.edges.append((vid, reject))
            else:
                state.bump_degree(t, 1)
                accepted += 1
                if state.edges is not None:
                    state.edges.append((vid, t))
        state.bump_degree(vid, state.m)
        state.step += 1
    return state


def dustbin_mirror(cstate: ContinuousGraphState, dspace: DiscretizedSpace,
                   seed_edges, record_edges: bool = False) -> DustbinState:
    """Coarse twin of an ungrown continuous state: same seed graph, each
    vertex mapped to the cell containing it (bin stays empty)."""
    if cstate.step != 0:
        raise ParameterOutOfRange("coarse twin must be built before growth")
    cells = dspace.cell_index(cstate.X)
    locs = tuple(int(c) + 1 for c in cells)
    return DustbinState(dspace.n_cells, cstate.m, locs, seed_edges,
                        gamma=dspace.gamma, h=dspace.h,
                        record_edges=record_edges)


def corrupt_discretization(dspace: DiscretizedSpace,
                           factor: float = 0.7) -> DiscretizedSpace:
    """Fault-injection helper: scale the sup bounds below the true sup
    and recompute the dependent scalars.  The result deliberately breaks
    the certification that the coupling relies on; growing a coupled
    pair against it must trip the domination check."""
    if not (0 < factor < 1):
        raise ParameterOutOfRange("corruption factor must lie in (0, 1)")
    a_sup = dspace.a_sup * factor
    b_inf = np.minimum(dspace.b_inf, a_sup)
    gamma = float((b_inf / a_sup).min())
    h = float(a_sup.max())
    t = float(b_inf.min() / h)
    return DiscretizedSpace(spec=dspace.spec, cells=dspace.cells,
                            mu=dspace.mu, a_sup=a_sup, b_inf=b_inf,
                            gamma=gamma, h=h, t=t, epsilon=dspace.epsilon)


def grow_coupled(cstate: ContinuousGraphState, dstate: DustbinState,
                 dspace: DiscretizedSpace, steps: int,
                 rng: np.random.Generator, raise_on_violation: bool = True):
    """Joint growth of the continuous process and its coarse twin on
    shared randomness.

    Per edge, one uniform positions a point r on the continuous
    attachment layout (per-vertex intervals grouped by cell, so r picks
    the continuous target and its cell together).  The coarse target
    interval for each cell is anchored at that cell's layout start with
    the coarse attachment probability as width; certified bounds make
    every coarse interval a subset of its continuous cell segment, so
    whenever the coarse process attaches in cell i, the continuous
    process does too, and per-cell edge-end counts stay dominated.  The
    leftover uniform mass is split between the bin's existing vertices
    and bin vertex creation by a dedicated uniform.

    Stream order per step: newcomer-location uniform, then per edge
    exactly three uniforms (layout position, coarse within-location
    vertex, leftover split), all three drawn even when a branch leaves
    some unused, keeping the stream aligned across implementations.

    Returns (cstate, dstate, domination_ok).  With raise_on_violation,
    a failed check raises CouplingViolation instead.
    """
    if dstate.n_locations != dspace.n_cells + 1:
        raise DimensionMismatch("coarse state and discretization disagree")
    if dstate.m != cstate.m:
        raise DimensionMismatch("processes disagree on m")
    if dstate.total_edge_ends != cstate.total_edge_ends:
        raise DimensionMismatch("processes disagree on total edge ends")
    sampler = getattr(cstate, "_sampler", None)
    if sampler is None or getattr(cstate, "_sampler_spec", None) is not dspace.spec:
        sampler = _DensitySampler(dspace.spec)
        cstate._sampler = sampler
        cstate._sampler_spec = dspace.spec
    kernel = dspace.spec.kernel
    n_cells = dspace.n_cells
    gamma = dstate.gamma
    h = dstate.h
    a_supT = np.ascontiguousarray(dspace.a_sup.T)
    _, a_ext = dspace.dustbin_matrices()
    a_extT = np.ascontiguousarray(a_ext.T)

    cell_ids = list(int(c) for c in dspace.cell_index(cstate.X))
    members: list[list[int]] = [[] for _ in range(n_cells)]
    for vid, c in enumerate(cell_ids):
        members[c].append(vid)
    cont_Y = np.bincount(cell_ids, weights=cstate.degrees,
                         minlength=n_cells).astype(np.int64)

    for _ in range(steps):
        x = sampler.ppf(rng.random())
        j_cell = int(dspace.cell_index(x))
        j = j_cell + 1

        w = cstate.degrees * kernel(cstate.X, x)
        d_tot = float(w.sum())
        if d_tot <= 0:
            raise ZeroAttractiveness(f"no attachment weight at location {x}")
        cellw = np.bincount(cell_ids, weights=w, minlength=n_cells)
        starts = np.concatenate([[0.0], np.cumsum(cellw)[:-1]])
        coarse_tot = float(dstate.Y @ a_extT[j])
        # coarse per-cell interval widths in layout units
        widths = dstate.Y[1:] * a_supT[j_cell] * (gamma * d_tot / coarse_tot)
        q0 = float(dstate.Y[0]) * h * gamma / coarse_tot

        cont_targets = []
        coarse_outcomes = []  # vertex id, or ("bin", vid) or ("new",)
        for _ in range(cstate.m):
            u_pos = rng.random()
            u_vertex = rng.random()
            u_split = rng.random()
            r = u_pos * d_tot
            # continuous pick: cell by layout segment, vertex by offset
            c_star = int(min(np.searchsorted(np.cumsum(cellw), r, side="right"),
                             n_cells - 1))
            if cellw[c_star] == 0:
                c_star = int(np.argmax(cellw))
            mem = members[c_star]
            mw = w[mem]
            off = r - starts[c_star]
            k = int(min(np.searchsorted(np.cumsum(mw), off, side="right"),
                        len(mem) - 1))
            cont_targets.append(mem[k])
            # coarse pick: first cell whose anchored interval contains r
            rel = r - starts
            hits = np.flatnonzero((rel >= 0.0) & (rel < widths))
            if hits.size:
                i_cell = int(hits[0])
                coarse_outcomes.append(
                    dstate.sample_vertex_at(i_cell + 1, u_vertex))
            else:
                leftover = q0 + (1.0 - gamma)
                if leftover > 0 and u_split * leftover < q0:
                    coarse_outcomes.append(
                        ("bin", dstate.sample_vertex_at(0, u_vertex)))
                else:
                    coarse_outcomes.append(("new",))

        # continuous step
        vid_c = cstate.apply_step(x, cont_targets)
        cell_ids.append(j_cell)
        members[j_cell].append(vid_c)
        cont_Y[j_cell] += cstate.m
        for t in cont_targets:
            cont_Y[cell_ids[t]] += 1

        # coarse step
        vid_d = dstate.add_vertex(j, birth=dstate.step + 1)
        for out in coarse_outcomes:
            if isinstance(out, tuple):
                if out[0] == "bin":
                    dstate.bump_degree(out[1], 1)
                    if dstate.edges is not None:
                        dstate.edges.append((vid_d, out[1]))
                else:
                    reject = dstate.add_vertex(0, birth=dstate.step + 1)
                    dstate.bump_degree(reject, 1)
                    if dstate.edges is not None:
                        dstate.edges.append((vid_d, reject))
            else:
                dstate.bump_degree(out, 1)
                if dstate.edges is not None:
                    dstate.edges.append((vid_d, out))
        dstate.bump_degree(vid_d, dstate.m)
        dstate.step += 1

        bad = np.flatnonzero(dstate.Y[1:] > cont_Y)
        if bad.size:
            cell = int(bad[0])
            if raise_on_violation:
                raise CouplingViolation(cstate.step, cell,
                                        int(dstate.Y[cell + 1]),
                                        int(cont_Y[cell]))
            return cstate, dstate, False
    return cstate, dstate, True
