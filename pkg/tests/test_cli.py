import json
import subprocess
import sys

import pytest


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "geopref", *args],
                          capture_output=True, text=True)


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_report(out_dir):
    with open(out_dir / "report.json") as f:
        return json.load(f)


def two_point_cfg(**sim):
    base = {"m": 2, "steps": 5000, "seeds": [1, 2]}
    base.update(sim)
    return {"space": {"type": "two_point", "p": 0.7, "a": 0.5},
            "sim": base,
            "analysis": {"y_tolerance": 0.05, "tv_tolerance": 0.1},
            "output": {"figures": False}}


def circle_cfg(**sim):
    base = {"m": 1, "steps": 1500, "seeds": [1]}
    base.update(sim)
    return {"space": {"type": "continuous",
                      "domain": {"kind": "circle", "length": 1.0},
                      "density": {"name": "uniform"},
                      "kernel": {"name": "exp_decay", "rate": 1.0},
                      "n_cells": 8},
            "sim": base,
            "output": {"figures": False}}


class TestConfigValidation:
    def test_missing_section(self, tmp_path):
        cfg = write_cfg(tmp_path, {"sim": {"m": 1, "steps": 1, "seeds": [1]}})
        r = run_cli("equilibrium", "--config", cfg)
        assert r.returncode == 2
        assert "config error" in r.stderr
        assert "space" in r.stderr

    def test_unknown_top_level_key(self, tmp_path):
        cfg = two_point_cfg()
        cfg["bogus"] = 1
        r = run_cli("equilibrium", "--config", write_cfg(tmp_path, cfg))
        assert r.returncode == 2
        assert "bogus" in r.stderr

    def test_unknown_nested_key_reported_with_path(self, tmp_path):
        cfg = two_point_cfg()
        cfg["space"]["extra"] = 1
        r = run_cli("equilibrium", "--config", write_cfg(tmp_path, cfg))
        assert r.returncode == 2
        assert "space" in r.stderr and "extra" in r.stderr

    def test_bad_sim_parameter(self, tmp_path):
        cfg = two_point_cfg(m=0)
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg))
        assert r.returncode == 2
        assert "sim.m" in r.stderr

    def test_missing_config_file(self, tmp_path):
        r = run_cli("equilibrium", "--config", str(tmp_path / "absent.json"))
        assert r.returncode == 2

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        r = run_cli("equilibrium", "--config", str(path))
        assert r.returncode == 2

    def test_bad_seeds_flag(self, tmp_path):
        cfg = write_cfg(tmp_path, two_point_cfg())
        r = run_cli("simulate", "--config", cfg, "--seeds", "1,x")
        assert r.returncode == 2


class TestEquilibriumCommand:
    def test_two_point_report(self, tmp_path):
        cfg = two_point_cfg()
        cfg["output"]["figures"] = True
        r = run_cli("equilibrium", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["tool"] == "geopref 0.1.0"
        assert rep["command"] == "equilibrium"
        assert rep["all_passed"] is True
        assert len(rep["results"]["nu"]) == 2
        names = [c["name"] for c in rep["checks"]]
        assert "closed-form root cross-check" in names
        assert (tmp_path / "measure.png").exists()

    def test_finite_space(self, tmp_path):
        cfg = {"space": {"type": "finite", "mu": [0.5, 0.3, 0.2],
                         "kernel_matrix": [[1.0, 0.4, 0.2],
                                           [0.4, 1.0, 0.4],
                                           [0.2, 0.4, 1.0]]},
               "output": {"figures": False}}
        r = run_cli("equilibrium", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["all_passed"] is True
        assert len(rep["results"]["nu"]) == 3

    def test_continuous_space(self, tmp_path):
        cfg = circle_cfg()
        del cfg["sim"]
        r = run_cli("equilibrium", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        assert read_report(tmp_path)["all_passed"] is True

    def test_iteration_budget_exhaustion_exits_3(self, tmp_path):
        cfg = two_point_cfg()
        cfg["analysis"] = {"max_iterations": 3}
        r = run_cli("equilibrium", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 3
        assert "non-convergence" in r.stderr


class TestSimulateCommand:
    def test_finite_run_artifacts(self, tmp_path):
        cfg = two_point_cfg()
        cfg["output"]["figures"] = True
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["all_passed"] is True
        names = [c["name"] for c in rep["checks"]]
        assert "seed 1 final measure gap" in names
        assert "seed 2 location 1 degree distance" in names
        for seed in (1, 2):
            assert (tmp_path / f"trajectory_{seed}.csv").exists()
            assert (tmp_path / f"trajectory_{seed}.png").exists()
            for loc in (0, 1):
                assert (tmp_path / f"degrees_{seed}_{loc}.csv").exists()
                assert (tmp_path / f"degrees_{seed}_{loc}.png").exists()
        header = (tmp_path / "trajectory_1.csv").read_text().splitlines()[0]
        assert header == "step,y_0,y_1"

    def test_rerun_is_byte_identical_across_job_counts(self, tmp_path):
        cfg = write_cfg(tmp_path, two_point_cfg(steps=2000))
        d1, d2 = tmp_path / "serial", tmp_path / "parallel"
        r1 = run_cli("simulate", "--config", cfg, "--out-dir", str(d1))
        r2 = run_cli("simulate", "--config", cfg, "--out-dir", str(d2),
                     "--jobs", "2")
        assert r1.returncode == 0 and r2.returncode == 0
        files1 = sorted(p.name for p in d1.iterdir())
        files2 = sorted(p.name for p in d2.iterdir())
        assert files1 == files2
        for name in files1:
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name

    def test_zero_steps_echoes_seed_graph(self, tmp_path):
        cfg = two_point_cfg(steps=0)
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["checks"] == []
        assert rep["all_passed"] is True
        per_seed = rep["results"]["per_seed"]
        assert all("seed_graph_edge_ends" in e for e in per_seed)

    def test_continuous_run(self, tmp_path):
        cfg = circle_cfg()
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        header = (tmp_path / "trajectory_1.csv").read_text().splitlines()[0]
        assert header.startswith("step,cell_0,")

    def test_continuous_step_cap(self, tmp_path):
        cfg = circle_cfg(steps=50_001)
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 2
        assert "sim.steps" in r.stderr

    def test_failed_check_exits_5(self, tmp_path):
        cfg = two_point_cfg(steps=500)
        cfg["analysis"]["y_tolerance"] = 1e-9
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 5
        assert "failed checks" in r.stderr
        assert "final measure gap" in r.stderr
        assert read_report(tmp_path)["all_passed"] is False

    def test_seeds_override(self, tmp_path):
        cfg = write_cfg(tmp_path, two_point_cfg(steps=500))
        r = run_cli("simulate", "--config", cfg, "--out-dir", str(tmp_path),
                    "--seeds", "7")
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["results"]["seeds"] == [7]
        assert (tmp_path / "trajectory_7.csv").exists()
        assert not (tmp_path / "trajectory_1.csv").exists()

    def test_figures_disabled(self, tmp_path):
        cfg = two_point_cfg(steps=500)
        r = run_cli("simulate", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        assert not list(tmp_path.glob("*.png"))


class TestCoupledCheckCommand:
    def test_healthy_run(self, tmp_path):
        cfg = circle_cfg(steps=2000)
        cfg["analysis"] = {"cell_subsets": [[0, 1, 2, 3]]}
        r = run_cli("coupled-check", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["all_passed"] is True
        names = [c["name"] for c in rep["checks"]]
        assert "seed 1 cell-wise domination" in names
        assert any("measure bracket" in n for n in names)
        assert rep["results"]["gamma"] < 1.0

    def test_fault_injection_exits_4(self, tmp_path):
        cfg = circle_cfg(steps=3000)
        r = run_cli("coupled-check", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path), "--fault-inject")
        assert r.returncode == 4
        assert "coupling violation" in r.stderr
        assert "domination failed" in r.stderr

    def test_requires_continuous_space(self, tmp_path):
        cfg = two_point_cfg()
        r = run_cli("coupled-check", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 2
        assert "space.type" in r.stderr


class TestFitnessCommand:
    def test_uniform_with_cross_check(self, tmp_path):
        cfg = {"fitness": {"density": {"name": "uniform"},
                           "cross_check": {"n_cells": 12, "truncation": 0.1,
                                           "tolerance": 0.05}}}
        r = run_cli("fitness", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["all_passed"] is True
        assert rep["results"]["phase"] == "fit_get_richer"
        names = [c["name"] for c in rep["checks"]]
        assert "attachment balance at lambda0" in names
        assert "interval measure discrepancy" in names
        assert (tmp_path / "intervals.png").exists()

    def test_condensed_density(self, tmp_path):
        cfg = {"fitness": {"density": {"name": "low_mass_near_top"}},
               "output": {"figures": False}}
        r = run_cli("fitness", "--config", write_cfg(tmp_path, cfg),
                    "--out-dir", str(tmp_path))
        assert r.returncode == 0, r.stderr
        rep = read_report(tmp_path)
        assert rep["results"]["phase"] == "innovation_pays_off"
        assert rep["results"]["lambda0"] is None


@pytest.mark.parametrize("command", ["equilibrium", "simulate",
                                     "coupled-check", "fitness"])
def test_config_flag_is_required(command):
    r = run_cli(command)
    assert r.returncode == 2
