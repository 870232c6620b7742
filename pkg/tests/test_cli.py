"""End-to-end tests of the command line interface, run in process."""

import hashlib
import json

import pytest

from hjblab.cli import main

BASE = {
    "model": {"family": "constant", "r": 0.03, "mu": 0.10, "sigma": 0.25, "b": 0.0,
              "rho": 0.0},
    "utility": {"family": "power", "gamma": 0.5},
    "grid": {"t0": 0.5, "t_end": 1.0, "nt": 8, "x_min": 0.5, "x_max": 2.0, "nx": 9,
             "y_min": -1.0, "y_max": 1.0, "ny": 5},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(cmd, cfg_path, out, extra=()):
    return main([cmd, "--config", cfg_path, "--out", str(out), *extra])


def read_manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_unknown_key_rejected_before_any_output(tmp_path):
    cfg = dict(BASE, typo_block={"x": 1})
    out = tmp_path / "out"
    code = run("check-identities", write_cfg(tmp_path, cfg), out)
    assert code == 2
    assert not out.exists()


def test_bad_enum_rejected(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["utility"] = {"family": "quadratic"}
    out = tmp_path / "out"
    assert run("check-identities", write_cfg(tmp_path, cfg), out) == 2
    assert not out.exists()


def test_missing_config_file(tmp_path):
    out = tmp_path / "out"
    assert run("check-identities", str(tmp_path / "nope.json"), out) == 2
    assert not out.exists()


def test_malformed_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert run("check-identities", str(p), tmp_path / "out") == 2


def test_power_utility_needs_gamma(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["utility"] = {"family": "power"}
    assert run("check-identities", write_cfg(tmp_path, cfg), tmp_path / "out") == 2


def test_grid_rejected_when_inverted(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["grid"]["x_max"] = 0.1
    out = tmp_path / "out"
    assert run("solve-fd", write_cfg(tmp_path, cfg), out) == 2
    assert not out.exists()


def test_check_identities_default_run(tmp_path):
    out = tmp_path / "out"
    code = run("check-identities", write_cfg(tmp_path, BASE), out)
    assert code == 0
    report = json.loads((out / "identity_report.json").read_text())
    # 5 core surfaces x 8 identities x 25 points
    assert report["summary"]["total"] == 1000
    # EQ9 rows on the two non-product-form members are expected failures
    assert report["summary"]["expected_failures"] == 3 * 25
    assert report["summary"]["unexpected_passes"] == 0
    # every non-witness row passed
    unexpected = [r for r in report["checks"]
                  if not r["expected_to_fail"] and not r["pass"]]
    assert unexpected == []
    manifest = read_manifest(out)
    names = {f["name"] for f in manifest["files"]}
    assert names == {"identity_report.json"}
    blob = (out / "identity_report.json").read_bytes()
    assert manifest["files"][0]["sha256"] == hashlib.sha256(blob).hexdigest()
    assert manifest["files"][0]["bytes"] == len(blob)


def test_check_identities_expected_pass_missing_is_exit_4(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["check_identities"] = {
        "suite": ["exp_xy"],
        "expect_fail": [{"fn": "exp_xy", "identity": "EQ9"}],
    }
    code = run("check-identities", write_cfg(tmp_path, cfg), tmp_path / "out")
    assert code == 4


def test_check_identities_unexpected_failure_is_exit_3(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    # declaring no expected failures makes the genuine EQ9 miss on x^2 fatal
    cfg["check_identities"] = {"suite": ["sq_x"], "expect_fail": []}
    code = run("check-identities", write_cfg(tmp_path, cfg), tmp_path / "out")
    assert code == 3


def test_check_identities_rejects_unknown_surface(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["check_identities"] = {"suite": ["mystery"]}
    assert run("check-identities", write_cfg(tmp_path, cfg), tmp_path / "out") == 2


def test_solve_fd_run_and_artifacts(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["grid"] = {"t0": 0.5, "t_end": 1.0, "nt": 21, "x_min": 0.5, "x_max": 2.0,
                   "nx": 21, "y_min": -1.0, "y_max": 1.0, "ny": 7}
    out = tmp_path / "out"
    assert run("solve-fd", write_cfg(tmp_path, cfg), out) == 0
    assert (out / "surface.csv").exists()
    assert (out / "policy.csv").exists()
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["scheme"] == "fd:implicit_x"
    assert len(diag["steps"]) == 20
    assert diag["monotonicity_violations"] == 0
    names = {f["name"] for f in read_manifest(out)["files"]}
    assert names == {"surface.csv", "policy.csv", "diagnostics.json"}
    header = (out / "surface.csv").read_text().splitlines()[0]
    assert header == "t,x,y,value"


def test_solve_fd_residual_bound_is_exit_3(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["solve_fd"] = {"max_residual": 1e-30}
    out = tmp_path / "out"
    assert run("solve-fd", write_cfg(tmp_path, cfg), out) == 3
    # the artifacts are still written for inspection
    assert (out / "diagnostics.json").exists()


def test_solve_fd_unstable_explicit_is_exit_3(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["solver"] = {"scheme": "explicit"}
    cfg["grid"] = {"t0": 0.5, "t_end": 1.0, "nt": 5, "x_min": 0.5, "x_max": 2.0,
                   "nx": 41, "y_min": -1.0, "y_max": 1.0, "ny": 21}
    assert run("solve-fd", write_cfg(tmp_path, cfg), tmp_path / "out") == 3


def test_solver_bounds_must_come_in_pairs(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["solver"] = {"pi_lo": -5.0}
    assert run("solve-fd", write_cfg(tmp_path, cfg), tmp_path / "out") == 2


def test_reduce_ode_run(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["model"]["rho"] = 0.5
    cfg["model"]["b"] = 0.2
    cfg["reduce_ode"] = {"t": 0.5, "x": 2.0, "y": 1.0}
    out = tmp_path / "out"
    assert run("reduce-ode", write_cfg(tmp_path, cfg), out) == 0
    report = json.loads((out / "portfolio_report.json").read_text())
    assert set(report["variants"]) == {"closed_form", "foc"}
    for rec in report["variants"].values():
        assert {"pi", "v_beta", "v_betabeta", "iterations",
                "excess_return_term", "hedging_term"} <= set(rec)
    # with nonzero correlation the two rules genuinely disagree
    assert report["pi_difference"] != 0.0
    got = report["variants"]["closed_form"]["pi"] - report["variants"]["foc"]["pi"]
    assert got == pytest.approx(report["pi_difference"], rel=1e-12)
    assert report["max_ode_residual"] < 1e-8
    lines = (out / "ode_solution.csv").read_text().splitlines()
    assert lines[0] == "beta,W,residual"
    assert len(lines) == 1 + 65


def test_reduce_ode_needs_block(tmp_path):
    assert run("reduce-ode", write_cfg(tmp_path, BASE), tmp_path / "out") == 2


def test_reduce_ode_rho_zero_variants_agree(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["reduce_ode"] = {"t": 0.5, "x": 2.0, "y": 1.0}
    out = tmp_path / "out"
    assert run("reduce-ode", write_cfg(tmp_path, cfg), out) == 0
    report = json.loads((out / "portfolio_report.json").read_text())
    assert report["pi_difference"] == pytest.approx(0.0, abs=1e-12)


def test_simulate_run(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["sim"] = {"n_paths": 200, "n_steps": 16, "seed": 11, "x0": 1.0, "y0": 0.0}
    cfg["simulate"] = {"policy": "merton_power"}
    out = tmp_path / "out"
    assert run("simulate", write_cfg(tmp_path, cfg), out) == 0
    rep = json.loads((out / "sim_report.json").read_text())
    assert rep["label"] == "merton_power"
    assert rep["n_paths"] == 200
    assert rep["seed"] == 11


def test_simulate_needs_sim_block(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["simulate"] = {"policy": "zero"}
    assert run("simulate", write_cfg(tmp_path, cfg), tmp_path / "out") == 2


def test_simulate_path_dump(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["sim"] = {"n_paths": 100, "n_steps": 16, "seed": 3, "x0": 1.0, "y0": 0.0}
    cfg["simulate"] = {"policy": "zero", "dump_paths": True}
    out = tmp_path / "out"
    assert run("simulate", write_cfg(tmp_path, cfg), out) == 0
    lines = (out / "paths.csv").read_text().splitlines()
    assert lines[0] == "path,step,t,X,Y,pi"
    assert len(lines) == 1 + 100 * 17
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "0"
    # terminal rows carry no action
    terminal = lines[17].split(",")
    assert terminal[1] == "16" and terminal[5] == "nan"
    assert "paths.csv" in {f["name"] for f in read_manifest(out)["files"]}


def test_simulate_dump_guard(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["sim"] = {"n_paths": 1000000, "n_steps": 16, "seed": 3, "x0": 1.0, "y0": 0.0}
    cfg["simulate"] = {"policy": "zero", "dump_paths": True}
    out = tmp_path / "out"
    assert run("simulate", write_cfg(tmp_path, cfg), out) == 2
    assert list(out.glob("*")) == []


def test_compare_run_and_reruns_are_byte_identical(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["grid"] = {"t0": 0.5, "t_end": 1.0, "nt": 11, "x_min": 0.5, "x_max": 2.0,
                   "nx": 15, "y_min": -1.0, "y_max": 1.0, "ny": 5}
    cfg["sim"] = {"n_paths": 400, "n_steps": 16, "seed": 7, "x0": 1.0, "y0": 0.0,
                  "block_size": 128}
    cfg["compare"] = {"policies": ["zero", "merton_power", "fd"]}
    path = write_cfg(tmp_path, cfg)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run("compare", path, out_a) == 0
    assert run("compare", path, out_b, extra=("--threads", "4")) == 0
    for name in ("comparison.json", "ranking.csv", "manifest.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    ranking = (out_a / "ranking.csv").read_text().splitlines()
    assert ranking[0] == "rank,policy,estimate,std_error"
    assert len(ranking) == 4
    comp = json.loads((out_a / "comparison.json").read_text())
    assert len(comp["policies"]) == 3
    assert len(comp["differences"]) == 3
    # CRN: every pairwise difference carries a finite standard error field
    for d in comp["differences"]:
        assert {"first", "second", "mean_difference", "std_error"} == set(d)


def test_compare_needs_two_distinct_policies(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["sim"] = {"n_paths": 200, "n_steps": 16, "seed": 7, "x0": 1.0, "y0": 0.0}
    cfg["compare"] = {"policies": ["zero", "zero"]}
    assert run("compare", write_cfg(tmp_path, cfg), tmp_path / "out") == 2


def test_seed_override_changes_the_estimate(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    cfg["sim"] = {"n_paths": 400, "n_steps": 16, "seed": 7, "x0": 1.0, "y0": 0.0}
    cfg["simulate"] = {"policy": "merton_power"}
    path = write_cfg(tmp_path, cfg)
    out_a, out_b, out_c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run("simulate", path, out_a) == 0
    assert run("simulate", path, out_b, extra=("--seed-override", "8")) == 0
    assert run("simulate", path, out_c, extra=("--seed-override", "7")) == 0
    rep = lambda o: json.loads((o / "sim_report.json").read_text())
    assert rep(out_a)["estimate"] != rep(out_b)["estimate"]
    assert rep(out_a)["estimate"] == rep(out_c)["estimate"]
    assert rep(out_b)["seed"] == 8


def test_shift_policy_grid_validation_travels_through_cli(tmp_path):
    cfg = json.loads(json.dumps(BASE))
    # the default grid has a y node exactly at 0, which the dilation rule
    # cannot evaluate; the CLI must refuse cleanly
    cfg["sim"] = {"n_paths": 200, "n_steps": 16, "seed": 7, "x0": 1.0, "y0": 0.5}
    cfg["simulate"] = {"policy": "shift"}
    assert run("simulate", write_cfg(tmp_path, cfg), tmp_path / "out") == 2
