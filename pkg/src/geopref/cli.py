"""Batch front-end: config-driven experiment runs with CSV/JSON/PNG artifacts.

Four subcommands:

* ``equilibrium``    solve the limit measure and fitness for a configured space
* ``simulate``       grow the random graph for each seed, write trajectories
                     and degree tables
* ``coupled-check``  run the continuous process jointly with its coarse twin
                     and verify cell-wise domination plus interval brackets
* ``fitness``        phase detection and interval cross-check for the
                     fitness special case

One JSON config describes the experiment; flags are limited to --config,
--out-dir, --seeds (override), --jobs (parallel seed fan-out) and
--fault-inject (negative control for coupled-check).  Given the same config
and flags, every CSV and JSON artifact is byte-identical across reruns.

Exit codes: 0 success, 2 config error, 3 non-convergence, 4 coupling
violation, 5 at least one reported check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .degree import DegreeLawParams, compare, degree_table, write_degree_csv
from .equilibrium import solve_dustbin, solve_nu, solve_two_point, borel_bracket
from .errors import ConfigError, CouplingViolation, NonConvergence
from .fitness import FitnessDistribution, attachment_integral, cross_check, detect_phase
from .simulate import (SimConfig, cell_degree_histogram, corrupt_discretization,
                       dustbin_mirror, empirical_measure, grow, grow_continuous,
                       grow_coupled, degree_histogram, make_rng,
                       seed_continuous_state, seed_finite_state)
from .space import (ContinuousSpaceSpec, Domain, build_finite_space, discretize,
                    make_kernel, two_point_space)

TOOL = f"geopref {__version__}"
CONTINUOUS_STEP_CAP = 50_000


# ---------------------------------------------------------------------------
# config schema


def _fail(path, message):
    raise ConfigError(f"config key '{path}': {message}")


def _check_keys(section, allowed, path):
    if not isinstance(section, dict):
        _fail(path, "expected an object")
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown config key '{path}.{k}'")


def _get(section, key, path, kind, required=True, default=None):
    """Typed lookup with a dotted-path diagnostic.

    kind is one of "int", "number", "bool", "str", "list", "dict".
    """
    if key not in section:
        if required:
            raise ConfigError(f"missing required config key '{path}.{key}'")
        return default
    v = section[key]
    here = f"{path}.{key}"
    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            _fail(here, f"expected an integer, got {v!r}")
    elif kind == "number":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            _fail(here, f"expected a number, got {v!r}")
        v = float(v)
    elif kind == "bool":
        if not isinstance(v, bool):
            _fail(here, f"expected true/false, got {v!r}")
    elif kind == "str":
        if not isinstance(v, str):
            _fail(here, f"expected a string, got {v!r}")
    elif kind == "list":
        if not isinstance(v, list):
            _fail(here, f"expected a list, got {v!r}")
    elif kind == "dict":
        if not isinstance(v, dict):
            _fail(here, f"expected an object, got {v!r}")
    return v


def _int_list(section, key, path, required=True, default=None):
    v = _get(section, key, path, "list", required=required, default=None)
    if v is None:
        return default
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, int):
            _fail(f"{path}.{key}[{i}]", f"expected an integer, got {x!r}")
        out.append(x)
    return out


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    _check_keys(cfg, {"space", "sim", "analysis", "fitness", "output"}, "config")
    return cfg


def validate_space(section):
    """-> ("finite"|"two_point"|"continuous", payload dict).  Strict keys."""
    kind = _get(section, "type", "space", "str")
    if kind == "finite":
        _check_keys(section, {"type", "mu", "kernel_matrix"}, "space")
        mu = _get(section, "mu", "space", "list")
        mat = _get(section, "kernel_matrix", "space", "list")
        return kind, {"mu": mu, "kernel_matrix": mat}
    if kind == "two_point":
        _check_keys(section, {"type", "p", "a"}, "space")
        return kind, {"p": _get(section, "p", "space", "number"),
                      "a": _get(section, "a", "space", "number")}
    if kind == "continuous":
        _check_keys(section, {"type", "domain", "density", "kernel",
                              "n_cells", "bound_grid"}, "space")
        dom = _get(section, "domain", "space", "dict")
        dk = _get(dom, "kind", "space.domain", "str")
        if dk == "circle":
            _check_keys(dom, {"kind", "length"}, "space.domain")
            _get(dom, "length", "space.domain", "number")
        elif dk == "interval":
            _check_keys(dom, {"kind", "lo", "hi"}, "space.domain")
            _get(dom, "lo", "space.domain", "number")
            _get(dom, "hi", "space.domain", "number")
        else:
            _fail("space.domain.kind", f"unknown domain kind {dk!r}")
        dens = _get(section, "density", "space", "dict")
        dn = _get(dens, "name", "space.density", "str")
        if dn == "uniform":
            _check_keys(dens, {"name"}, "space.density")
        elif dn == "linear":
            _check_keys(dens, {"name", "slope"}, "space.density")
            _get(dens, "slope", "space.density", "number")
        else:
            _fail("space.density.name", f"unknown density {dn!r}")
        kern = _get(section, "kernel", "space", "dict")
        kn = _get(kern, "name", "space.kernel", "str")
        if kn == "constant":
            _check_keys(kern, {"name", "value"}, "space.kernel")
            _get(kern, "value", "space.kernel", "number")
        elif kn == "exp_decay":
            _check_keys(kern, {"name", "rate"}, "space.kernel")
            _get(kern, "rate", "space.kernel", "number")
        elif kn == "shifted_power":
            _check_keys(kern, {"name", "shift", "power"}, "space.kernel")
            _get(kern, "shift", "space.kernel", "number")
            _get(kern, "power", "space.kernel", "number")
        else:
            _fail("space.kernel.name", f"unknown kernel {kn!r}")
        n_cells = _get(section, "n_cells", "space", "int")
        if n_cells < 1:
            _fail("space.n_cells", "expected a positive integer")
        grid = _get(section, "bound_grid", "space", "int", required=False,
                    default=16)
        return kind, {"domain": dom, "density": dens, "kernel": kern,
                      "n_cells": n_cells, "bound_grid": grid}
    _fail("space.type", f"unknown space type {kind!r}")


def validate_sim(section, path="sim"):
    _check_keys(section, {"m", "steps", "seeds", "trajectory_stride"}, path)
    m = _get(section, "m", path, "int")
    steps = _get(section, "steps", path, "int")
    seeds = _int_list(section, "seeds", path)
    if m < 1:
        _fail(f"{path}.m", "expected m >= 1")
    if steps < 0:
        _fail(f"{path}.steps", "expected steps >= 0")
    if not seeds:
        _fail(f"{path}.seeds", "expected a non-empty list of seeds")
    stride = _get(section, "trajectory_stride", path, "int", required=False,
                  default=max(1, steps // 500))
    if stride < 1:
        _fail(f"{path}.trajectory_stride", "expected a positive integer")
    return {"m": m, "steps": steps, "seeds": seeds, "stride": stride}


def validate_analysis(section):
    _check_keys(section, {"d_max", "locations", "cell_subsets",
                          "y_tolerance", "tv_tolerance", "tolerance",
                          "max_iterations"},
                "analysis")
    out = {
        "d_max": _get(section, "d_max", "analysis", "int", required=False,
                      default=50),
        "locations": _int_list(section, "locations", "analysis",
                               required=False, default=None),
        "y_tolerance": _get(section, "y_tolerance", "analysis", "number",
                            required=False, default=0.02),
        "tv_tolerance": _get(section, "tv_tolerance", "analysis", "number",
                             required=False, default=0.05),
        "tolerance": _get(section, "tolerance", "analysis", "number",
                          required=False, default=1e-12),
        "max_iterations": _get(section, "max_iterations", "analysis", "int",
                               required=False, default=1_000_000),
    }
    subsets = _get(section, "cell_subsets", "analysis", "list",
                   required=False, default=None)
    if subsets is not None:
        clean = []
        for i, sub in enumerate(subsets):
            if not isinstance(sub, list) or not sub:
                _fail(f"analysis.cell_subsets[{i}]",
                      "expected a non-empty list of cell indices")
            for j, c in enumerate(sub):
                if isinstance(c, bool) or not isinstance(c, int):
                    _fail(f"analysis.cell_subsets[{i}][{j}]",
                          f"expected an integer, got {c!r}")
            clean.append(list(sub))
        subsets = clean
    out["cell_subsets"] = subsets
    return out


def validate_fitness(section):
    _check_keys(section, {"density", "cross_check"}, "fitness")
    dens = _get(section, "density", "fitness", "dict")
    name = _get(dens, "name", "fitness.density", "str")
    if name in ("uniform", "linear", "low_mass_near_top"):
        _check_keys(dens, {"name"}, "fitness.density")
        payload = {"name": name}
    elif name == "truncated_uniform":
        _check_keys(dens, {"name", "truncation"}, "fitness.density")
        t = _get(dens, "truncation", "fitness.density", "number")
        if not 0.0 <= t < 1.0:
            _fail("fitness.density.truncation", "expected a value in [0, 1)")
        payload = {"name": name, "truncation": t}
    else:
        _fail("fitness.density.name", f"unknown fitness density {name!r}")
    cc = _get(section, "cross_check", "fitness", "dict", required=False,
              default=None)
    if cc is not None:
        _check_keys(cc, {"n_cells", "truncation", "tolerance"},
                    "fitness.cross_check")
        cc = {"n_cells": _get(cc, "n_cells", "fitness.cross_check", "int"),
              "truncation": _get(cc, "truncation", "fitness.cross_check",
                                 "number"),
              "tolerance": _get(cc, "tolerance", "fitness.cross_check",
                                "number", required=False, default=0.02)}
    return {"density": payload, "cross_check": cc}


def validate_output(section):
    _check_keys(section, {"figures"}, "output")
    return {"figures": _get(section, "figures", "output", "bool",
                            required=False, default=True)}


# ---------------------------------------------------------------------------
# builders


def build_finite_from_payload(kind, payload):
    if kind == "two_point":
        try:
            return two_point_space(payload["p"], payload["a"])
        except Exception as e:
            raise ConfigError(f"config key 'space': {e}")
    try:
        mu = np.asarray(payload["mu"], dtype=float)
        mat = np.asarray(payload["kernel_matrix"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key 'space': {e}")
    try:
        return build_finite_space(mu, mat)
    except Exception as e:
        raise ConfigError(f"config key 'space': {e}")


def build_continuous_from_payload(payload):
    dom_cfg = payload["domain"]
    if dom_cfg["kind"] == "circle":
        domain = Domain.circle(float(dom_cfg["length"]))
    else:
        domain = Domain.interval(float(dom_cfg["lo"]), float(dom_cfg["hi"]))
    dens_cfg = payload["density"]
    L = domain.length
    if dens_cfg["name"] == "uniform":
        level = 1.0 / L

        def density(x):
            return np.full_like(np.asarray(x, dtype=float), level)
    else:
        slope = float(dens_cfg["slope"])
        if 1.0 / L - abs(slope) * L / 2.0 <= 0.0:
            raise ConfigError(
                "config key 'space.density.slope': density would touch zero; "
                f"need |slope| < {2.0 / L ** 2:g}")
        center = 0.5 * (domain.lo + domain.hi)

        def density(x):
            return 1.0 / L + slope * (np.asarray(x, dtype=float) - center)

    kern_cfg = dict(payload["kernel"])
    name = kern_cfg.pop("name")
    try:
        kernel = make_kernel(domain, name, **kern_cfg)
        spec = ContinuousSpaceSpec(domain, density, kernel)
        dspace = discretize(spec, payload["n_cells"], grid=payload["bound_grid"])
    except ConfigError:
        raise
    except Exception as e:
        raise ConfigError(f"config key 'space': {e}")
    return spec, dspace


FITNESS_DENSITIES = {
    # name -> (density, h, support_floor, near_h_lower_bound, near_h_width)
    "uniform": (lambda x: np.ones_like(np.asarray(x, dtype=float)),
                1.0, 0.0, 1.0, 1.0),
    "linear": (lambda x: 2.0 * np.asarray(x, dtype=float),
               1.0, 0.0, 1.0, 0.5),
    "low_mass_near_top": (
        lambda x: 3.0 * (1.0 - np.asarray(x, dtype=float)) ** 2,
        1.0, 0.0, 0.0, 0.0),
}


def build_fitness_distribution(payload):
    name = payload["name"]
    if name == "truncated_uniform":
        t = float(payload["truncation"])
        scale = 1.0 / (1.0 - t)

        def density(x):
            x = np.asarray(x, dtype=float)
            return np.where(x >= t, scale, 0.0)

        return FitnessDistribution(density=density, h=1.0, support_floor=t,
                                   near_h_lower_bound=scale,
                                   near_h_width=1.0 - t)
    density, h, floor, near_lb, near_w = FITNESS_DENSITIES[name]
    return FitnessDistribution(density=density, h=h, support_floor=floor,
                               near_h_lower_bound=near_lb, near_h_width=near_w)


# ---------------------------------------------------------------------------
# report plumbing


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def make_check(name, value, tolerance, passed=None):
    if passed is None:
        passed = bool(value <= tolerance)
    return {"name": name, "value": _jsonable(value),
            "tolerance": _jsonable(tolerance), "passed": bool(passed)}


def bracket_check(name, value, lo, hi):
    return {"name": name, "value": _jsonable(value),
            "tolerance": [_jsonable(lo), _jsonable(hi)],
            "passed": bool(lo <= value <= hi)}


def write_report(out_dir, command, config, results, checks):
    report = {
        "tool": TOOL,
        "command": command,
        "config": _jsonable(config),
        "results": _jsonable(results),
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
    }
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", newline="") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def _write_trajectory_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for step, y in rows:
            w.writerow([step] + [format(v, ".17g") for v in y])


# ---------------------------------------------------------------------------
# equilibrium command


def cmd_equilibrium(cfg, out_dir, figures):
    kind, payload = validate_space(_get(cfg, "space", "config", "dict"))
    analysis = validate_analysis(cfg.get("analysis", {}))
    tol = analysis["tolerance"]
    checks = []
    if kind == "continuous":
        spec, dspace = build_continuous_from_payload(payload)
        eq = solve_dustbin(dspace, tol=tol, max_iter=analysis["max_iterations"])
        results = eq.to_report()
        results["epsilon"] = dspace.epsilon
        checks.append(make_check("solver residual", eq.residual, tol))
        for name, (value, limit, ok) in eq.check_bounds().items():
            checks.append(make_check(name, value, limit, passed=ok))
        if figures:
            from .plots import save_measure_figure
            labels = ["bin" if i == 0 else f"cell {i - 1}"
                      for i in range(dspace.n_cells + 1)]
            mu_ext, _ = dspace.dustbin_matrices()
            save_measure_figure(os.path.join(out_dir, "measure.png"),
                                mu_ext, eq.nu, eq.phi, labels,
                                title="coarse equilibrium with reject bin")
    else:
        space = build_finite_from_payload(kind, payload)
        res = solve_nu(space, tol=tol, max_iter=analysis["max_iterations"])
        results = res.to_report(space)
        gaps = res.identity_gaps(space)
        checks.append(make_check("solver residual", res.residual, tol))
        checks.append(make_check("sum of nu*phi equals one",
                                 abs(gaps["sum_nu_phi"] - 1.0), 1e-10))
        checks.append(make_check("fitness identity phi = 2 - mu/nu",
                                 gaps["max_phi_identity_gap"], 1e-8))
        checks.append(make_check("fixed point nu = (mu + nu*phi)/2",
                                 gaps["max_fixed_point_gap"], 1e-10))
        if kind == "two_point":
            y0 = solve_two_point(payload["p"], payload["a"])
            gap = abs(res.nu[0] - y0)
            results["two_point_root"] = y0
            results["two_point_root_gap"] = gap
            checks.append(make_check("closed-form root cross-check", gap, 1e-9))
        if figures:
            from .plots import save_measure_figure
            labels = [f"loc {i}" for i in range(space.n_points)]
            save_measure_figure(os.path.join(out_dir, "measure.png"),
                                space.mu, res.nu, res.phi, labels,
                                title="limit measure and fitness")
    return results, checks


# ---------------------------------------------------------------------------
# simulate command


def _finite_sim_seed(kind, payload, sim, analysis, out_dir, seed):
    """Per-seed worker: grow, write trajectory and degree CSVs, return
    summary arrays.  Top-level so it can cross a process boundary."""
    space = build_finite_from_payload(kind, payload)
    config = SimConfig(m=sim["m"], steps=sim["steps"], seed=seed,
                       record_trajectory_every=sim["stride"])
    rng = make_rng(seed)
    state = seed_finite_state(space, config, rng)
    snaps = [(0, empirical_measure(state).tolist())]
    done = 0
    while done < sim["steps"]:
        chunk = min(sim["stride"], sim["steps"] - done)
        grow(state, space, chunk, rng)
        done += chunk
        snaps.append((done, empirical_measure(state).tolist()))
    header = ["step"] + [f"y_{i}" for i in range(space.n_points)]
    _write_trajectory_csv(os.path.join(out_dir, f"trajectory_{seed}.csv"),
                          header, snaps)
    locations = analysis["locations"]
    if locations is None:
        locations = list(range(space.n_points))
    res = solve_nu(space, tol=analysis["tolerance"])
    tables = {}
    tv = {}
    for loc in locations:
        hist, count = degree_histogram(state, loc)
        if count == 0:
            continue
        params = DegreeLawParams(m=sim["m"], phi=float(res.phi[loc]),
                                 mu_weight=float(space.mu[loc]))
        table = degree_table(hist, params, analysis["d_max"], location=str(loc))
        write_degree_csv(table, os.path.join(out_dir,
                                             f"degrees_{seed}_{loc}.csv"))
        rep = compare(hist, params, analysis["d_max"])
        tables[loc] = table
        tv[loc] = rep.tv_distance
    final = empirical_measure(state)
    return {
        "seed": seed,
        "snaps": snaps,
        "final_measure": final.tolist(),
        "sup_gap": float(np.max(np.abs(final - res.nu))),
        "tv": tv,
        "tables": tables,
        "n_vertices": state.n_vertices,
        "edge_ends": int(state.total_edge_ends),
        "seed_Y": state.Y.tolist() if sim["steps"] == 0 else None,
    }


def _continuous_sim_seed(payload, sim, analysis, out_dir, seed):
    spec, dspace = build_continuous_from_payload(payload)
    config = SimConfig(m=sim["m"], steps=sim["steps"], seed=seed,
                       record_trajectory_every=sim["stride"])
    rng = make_rng(seed)
    state = seed_continuous_state(spec, config, rng)
    shares = state.cell_edge_ends(dspace)

    def as_share(v):
        tot = v.sum()
        return (v / tot if tot else v).tolist()

    snaps = [(0, as_share(shares))]
    done = 0
    while done < sim["steps"]:
        chunk = min(sim["stride"], sim["steps"] - done)
        grow_continuous(state, spec, chunk, rng)
        done += chunk
        snaps.append((done, as_share(state.cell_edge_ends(dspace))))
    header = ["step"] + [f"cell_{i}" for i in range(dspace.n_cells)]
    _write_trajectory_csv(os.path.join(out_dir, f"trajectory_{seed}.csv"),
                          header, snaps)
    eq = solve_dustbin(dspace, tol=analysis["tolerance"])
    tables = {}
    for c in range(dspace.n_cells):
        hist, count = cell_degree_histogram(state, dspace, c)
        if count == 0:
            continue
        params = DegreeLawParams(m=sim["m"], phi=float(eq.phi[c + 1]))
        table = degree_table(hist, params, analysis["d_max"], location=str(c))
        write_degree_csv(table, os.path.join(out_dir,
                                             f"degrees_{seed}_{c}.csv"))
        tables[c] = table
    return {
        "seed": seed,
        "snaps": snaps,
        "final_shares": snaps[-1][1],
        "tables": tables,
        "n_vertices": state.n_vertices,
        "edge_ends": int(state.total_edge_ends),
    }


def cmd_simulate(cfg, out_dir, figures, seeds_override, jobs):
    kind, payload = validate_space(_get(cfg, "space", "config", "dict"))
    sim = validate_sim(_get(cfg, "sim", "config", "dict"))
    analysis = validate_analysis(cfg.get("analysis", {}))
    seeds = seeds_override if seeds_override is not None else sim["seeds"]
    if kind == "continuous" and sim["steps"] > CONTINUOUS_STEP_CAP:
        _fail("sim.steps",
              f"continuous runs are capped at {CONTINUOUS_STEP_CAP} steps")

    if kind == "continuous":
        worker, args = _continuous_sim_seed, (payload, sim, analysis, out_dir)
    else:
        worker, args = _finite_sim_seed, (kind, payload, sim, analysis, out_dir)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(worker, *args, seed) for seed in seeds]
            summaries = [f.result() for f in futures]
    else:
        summaries = [worker(*args, seed) for seed in seeds]

    checks = []
    results = {"seeds": seeds, "per_seed": []}
    if kind != "continuous":
        space = build_finite_from_payload(kind, payload)
        res = solve_nu(space, tol=analysis["tolerance"])
        results["nu"] = res.nu
        results["phi"] = res.phi
        for s in summaries:
            entry = {"seed": s["seed"], "final_measure": s["final_measure"],
                     "sup_gap": s["sup_gap"], "degree_tv": s["tv"],
                     "n_vertices": s["n_vertices"], "edge_ends": s["edge_ends"]}
            if s["seed_Y"] is not None:
                entry["seed_graph_edge_ends"] = s["seed_Y"]
            results["per_seed"].append(entry)
            if sim["steps"] > 0:
                checks.append(make_check(
                    f"seed {s['seed']} final measure gap",
                    s["sup_gap"], analysis["y_tolerance"]))
                for loc, t in s["tv"].items():
                    checks.append(make_check(
                        f"seed {s['seed']} location {loc} degree distance",
                        t, analysis["tv_tolerance"]))
    else:
        for s in summaries:
            results["per_seed"].append(
                {"seed": s["seed"], "final_shares": s["final_shares"],
                 "n_vertices": s["n_vertices"], "edge_ends": s["edge_ends"]})

    if figures:
        from .plots import save_degree_figure, save_trajectory_figure
        nu = results.get("nu")
        for s in summaries:
            steps_axis = [row[0] for row in s["snaps"]]
            traj = [row[1] for row in s["snaps"]]
            save_trajectory_figure(
                os.path.join(out_dir, f"trajectory_{s['seed']}.png"),
                steps_axis, traj, nu=nu,
                title=f"edge-end fractions, seed {s['seed']}")
            for loc, table in s["tables"].items():
                save_degree_figure(
                    os.path.join(out_dir, f"degrees_{s['seed']}_{loc}.png"),
                    table, title=f"seed {s['seed']}, location {loc}")
    return results, checks


# ---------------------------------------------------------------------------
# coupled-check command


def _coupled_seed(payload, sim, out_dir, seed, fault):
    """Per-seed worker for the joint run.  Returns either a violation
    record or the final per-cell tallies."""
    spec, dspace = build_continuous_from_payload(payload)
    if fault:
        dspace = corrupt_discretization(dspace)
    config = SimConfig(m=sim["m"], steps=sim["steps"], seed=seed)
    rng = make_rng(seed)
    cstate = seed_continuous_state(spec, config, rng)
    dstate = dustbin_mirror(cstate, dspace, config.resolve_seed_graph()[1])
    try:
        grow_coupled(cstate, dstate, dspace, sim["steps"], rng)
    except CouplingViolation as e:
        return {"seed": seed,
                "violation": [e.step, e.cell, e.coarse, e.fine]}
    cell_ends = cstate.cell_edge_ends(dspace)
    return {
        "seed": seed,
        "violation": None,
        "cell_edge_ends": cell_ends.tolist(),
        "coarse_edge_ends": dstate.Y.tolist(),
        "dominated": bool(np.all(dstate.Y[1:] <= cell_ends)),
        "totals_equal": int(dstate.Y.sum()) == int(cell_ends.sum()),
        "bin_share": float(dstate.Y[0] / dstate.Y.sum()),
    }


def cmd_coupled_check(cfg, out_dir, figures, seeds_override, jobs, fault):
    kind, payload = validate_space(_get(cfg, "space", "config", "dict"))
    if kind != "continuous":
        _fail("space.type", "coupled-check needs a continuous space")
    sim = validate_sim(_get(cfg, "sim", "config", "dict"))
    analysis = validate_analysis(cfg.get("analysis", {}))
    seeds = seeds_override if seeds_override is not None else sim["seeds"]

    spec, dspace = build_continuous_from_payload(payload)
    if fault:
        dspace = corrupt_discretization(dspace)
    eq = solve_dustbin(dspace, tol=analysis["tolerance"])

    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_coupled_seed, payload, sim, out_dir, seed,
                                   fault) for seed in seeds]
            summaries = [f.result() for f in futures]
    else:
        summaries = [_coupled_seed(payload, sim, out_dir, seed, fault)
                     for seed in seeds]

    for s in summaries:
        if s.get("violation"):
            raise CouplingViolation(*s["violation"])

    checks = []
    results = {
        "seeds": seeds,
        "fault_injected": fault,
        "gamma": dspace.gamma,
        "h": dspace.h,
        "t": dspace.t,
        "epsilon": dspace.epsilon,
        "coarse_equilibrium": eq.to_report(),
        "per_seed": summaries,
    }
    subsets = analysis["cell_subsets"] or []
    for s in summaries:
        checks.append(make_check(f"seed {s['seed']} cell-wise domination",
                                 0 if s["dominated"] else 1, 0,
                                 passed=s["dominated"]))
        checks.append(make_check(f"seed {s['seed']} edge-end totals equal",
                                 0 if s["totals_equal"] else 1, 0,
                                 passed=s["totals_equal"]))
        ends = np.asarray(s["cell_edge_ends"], dtype=float)
        delta = ends / ends.sum()
        for sub in subsets:
            lo, hi = borel_bracket(dspace, sub, eq)
            val = float(delta[np.asarray(sub, dtype=int)].sum())
            label = ",".join(str(c) for c in sub)
            checks.append(bracket_check(
                f"seed {s['seed']} cells [{label}] measure bracket",
                val, lo, hi))

    if figures:
        from .plots import save_measure_figure
        mean_shares = np.mean(
            [np.asarray(s["cell_edge_ends"], dtype=float)
             / sum(s["cell_edge_ends"]) for s in summaries], axis=0)
        labels = [f"cell {i}" for i in range(dspace.n_cells)]
        save_measure_figure(os.path.join(out_dir, "coupled_cells.png"),
                            dspace.mu, mean_shares, eq.phi[1:], labels,
                            title="per-cell edge-end shares vs cell masses")
    return results, checks


# ---------------------------------------------------------------------------
# fitness command


def cmd_fitness(cfg, out_dir, figures):
    section = validate_fitness(_get(cfg, "fitness", "config", "dict"))
    dist = build_fitness_distribution(section["density"])
    phase = detect_phase(dist)
    results = {"density": section["density"], "phase": phase.phase,
               "lambda0": phase.lambda0}
    checks = []
    if phase.lambda0 is not None:
        balance = abs(attachment_integral(dist, phase.lambda0) - 1.0)
        results["balance_gap"] = balance
        checks.append(make_check("attachment balance at lambda0",
                                 balance, 1e-8))
    cc = section["cross_check"]
    if cc is not None:
        table = cross_check(dist, n_cells=cc["n_cells"],
                            truncation=cc["truncation"])
        results["cross_check"] = table
        checks.append(make_check("interval measure discrepancy",
                                 table["max_gap"], cc["tolerance"]))
        if figures:
            from .plots import save_interval_figure
            save_interval_figure(os.path.join(out_dir, "intervals.png"),
                                 table["intervals"],
                                 title="coarse vs exact interval measure")
    return results, checks


# ---------------------------------------------------------------------------
# entry point


def _parse_seeds(text):
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got {text!r}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="geopref",
        description="geometric preferential attachment: simulation and "
                    "numerical analysis artifacts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("equilibrium", "simulate", "coupled-check", "fitness"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", default=".")
        if name in ("simulate", "coupled-check"):
            p.add_argument("--seeds", default=None)
            p.add_argument("--jobs", type=int, default=1)
        if name == "coupled-check":
            p.add_argument("--fault-inject", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        out_cfg = validate_output(cfg.get("output", {}))
        os.makedirs(args.out_dir, exist_ok=True)
        figures = out_cfg["figures"]
        if args.command == "equilibrium":
            results, checks = cmd_equilibrium(cfg, args.out_dir, figures)
        elif args.command == "simulate":
            seeds = _parse_seeds(args.seeds) if args.seeds else None
            results, checks = cmd_simulate(cfg, args.out_dir, figures,
                                           seeds, args.jobs)
        elif args.command == "coupled-check":
            seeds = _parse_seeds(args.seeds) if args.seeds else None
            results, checks = cmd_coupled_check(cfg, args.out_dir, figures,
                                                seeds, args.jobs,
                                                args.fault_inject)
        else:
            results, checks = cmd_fitness(cfg, args.out_dir, figures)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NonConvergence as e:
        print(f"non-convergence: {e}", file=sys.stderr)
        return 3
    except CouplingViolation as e:
        print(f"coupling violation: {e}", file=sys.stderr)
        return 4

    report = write_report(args.out_dir, args.command, cfg, results, checks)
    if not report["all_passed"]:
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        print("failed checks: " + "; ".join(failed), file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
