"""Command-line runner: config ingestion, orchestration, artifact output.

Single JSON config document, schema validated before any computation, with
unknown keys rejected at every level. Commands:

    check-identities   dilation identity suite over analytic test surfaces
    solve-fd           backward FD solve, surface and policy CSV export
    reduce-ode         pi <-> W fixed point and quadrature at one point
    simulate           Monte Carlo run under a named policy
    compare            common-random-number policy comparison

Every command writes its artifacts plus a manifest.json with content
hashes into the output directory. Identical config and seed reproduce all
artifacts byte for byte. Exit codes: 0 success, 2 validation failure,
3 numerical failure, 4 expected-failure-not-observed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft7Validator

from . import policies as pol
from .errors import (
    ConfigError,
    DegenerateCurvatureError,
    DomainError,
    EvaluationError,
    NonConvergenceError,
    OutOfBoundsError,
    SingularCoefficientError,
    StabilityError,
)
from .fd_solver import SolverConfig, solve
from .mc import SimConfig, compare_policies, simulate_paths
from .model import (
    GridSpec,
    MarketModel,
    UtilitySpec,
    eval_coefficients,
    policy_to_csv,
    surface_to_csv,
)
from .reduction import (
    ReductionParams,
    collect_ode,
    solve_portfolio_fixed_point,
    solve_vbeta,
)
from .shift import ANALYTIC_SUITE, CORE_SUITE, Identity, ShiftPoint, check_identity

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_EXPECTED_FAILURE_MISSING = 4

MAX_DUMP_ROWS = 10_000_000

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT_POS = {"type": "integer", "minimum": 1}

_MODEL_COMMON = {
    "rho": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
    "sigma_min": _POS,
}

_PAIR = {
    "type": "array",
    "items": _NUM,
    "minItems": 2,
    "maxItems": 2,
}

_NUM_ARRAY = {"type": "array", "items": _NUM, "minItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "utility", "grid"],
    "properties": {
        "threads": _INT_POS,
        "model": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family", "r", "mu", "sigma", "b"],
                    "properties": {
                        "family": {"const": "constant"},
                        "r": _NUM,
                        "mu": _NUM,
                        "sigma": _POS,
                        "b": _NUM,
                        **_MODEL_COMMON,
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family", "r", "mu", "sigma", "b", "clamp"],
                    "properties": {
                        "family": {"const": "affine"},
                        "r": _PAIR,
                        "mu": _PAIR,
                        "sigma": _PAIR,
                        "b": _PAIR,
                        "clamp": _PAIR,
                        **_MODEL_COMMON,
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family", "y_nodes", "r", "mu", "sigma", "b"],
                    "properties": {
                        "family": {"const": "table"},
                        "y_nodes": _NUM_ARRAY,
                        "r": _NUM_ARRAY,
                        "mu": _NUM_ARRAY,
                        "sigma": _NUM_ARRAY,
                        "b": _NUM_ARRAY,
                        **_MODEL_COMMON,
                    },
                },
            ]
        },
        "utility": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["power", "exponential", "log"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "alpha": _POS,
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t0", "t_end", "nt", "x_min", "x_max", "nx", "y_min", "y_max", "ny"],
            "properties": {
                "t0": _POS,
                "t_end": _POS,
                "nt": {"type": "integer", "minimum": 4},
                "x_min": _POS,
                "x_max": _POS,
                "nx": {"type": "integer", "minimum": 4},
                "y_min": _NUM,
                "y_max": _NUM,
                "ny": {"type": "integer", "minimum": 4},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scheme": {"enum": ["explicit", "implicit_x"]},
                "pi_lo": _NUM,
                "pi_hi": _NUM,
                "eps_curv": _POS,
                "cfl_limit": _POS,
                "track_residuals": {"type": "boolean"},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_paths", "n_steps", "seed", "x0", "y0"],
            "properties": {
                "n_paths": {"type": "integer", "minimum": 100},
                "n_steps": {"type": "integer", "minimum": 16},
                "seed": {"type": "integer", "minimum": 0},
                "x0": _POS,
                "y0": _NUM,
                "t_start": _POS,
                "antithetic": {"type": "boolean"},
                "x_floor": _POS,
                "block_size": {"type": "integer", "minimum": 2},
            },
        },
        "check_identities": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "suite": {
                    "type": "array",
                    "items": {"enum": sorted(ANALYTIC_SUITE)},
                    "minItems": 1,
                },
                "h": _POS,
                "tolerance": _POS,
                "eq9_tolerance": _POS,
                "witness_floor": _POS,
                "points": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "t": _POS,
                        "beta": _POS,
                        "xs": _NUM_ARRAY,
                        "ys": _NUM_ARRAY,
                    },
                },
                "expect_fail": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["fn", "identity"],
                        "properties": {
                            "fn": {"enum": sorted(ANALYTIC_SUITE)},
                            "identity": {"enum": [i.value for i in Identity]},
                        },
                    },
                },
            },
        },
        "solve_fd": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_residual": _POS,
                "max_clipped_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "reduce_ode": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t", "x", "y"],
            "properties": {
                "t": _POS,
                "x": _POS,
                "y": _NUM,
                "pi": _NUM,
                "beta_lo": _POS,
                "beta_hi": _POS,
                "n_beta": {"type": "integer", "minimum": 5},
                "c": _NUM,
                "max_iter": _INT_POS,
                "rtol": _POS,
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["policy"],
            "properties": {
                "policy": {"enum": sorted(pol.POLICY_NAMES)},
                "dump_paths": {"type": "boolean"},
            },
        },
        "compare": {
            "type": "object",
            "additionalProperties": False,
            "required": ["policies"],
            "properties": {
                "policies": {
                    "type": "array",
                    "items": {"enum": sorted(pol.POLICY_NAMES)},
                    "minItems": 2,
                    "uniqueItems": True,
                },
            },
        },
    },
}

_VALIDATOR = Draft7Validator(SCHEMA)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}")
    return cfg


def build_model(cfg: dict) -> MarketModel:
    m = cfg["model"]
    kw = {"rho": m.get("rho", 0.0), "sigma_min": m.get("sigma_min", 1e-8)}
    try:
        if m["family"] == "constant":
            return MarketModel.constant(m["r"], m["mu"], m["sigma"], m["b"], **kw)
        if m["family"] == "affine":
            return MarketModel.affine(
                tuple(m["r"]), tuple(m["mu"]), tuple(m["sigma"]), tuple(m["b"]),
                clamp=tuple(m["clamp"]), **kw
            )
        return MarketModel.table(
            m["y_nodes"], m["r"], m["mu"], m["sigma"], m["b"], **kw
        )
    except DomainError as exc:
        raise ConfigError(f"model: {exc}") from None


def build_utility(cfg: dict) -> UtilitySpec:
    u = cfg["utility"]
    try:
        if u["family"] == "power":
            if "gamma" not in u:
                raise ConfigError("power utility needs gamma")
            return UtilitySpec.power(u["gamma"])
        if u["family"] == "exponential":
            if "alpha" not in u:
                raise ConfigError("exponential utility needs alpha")
            return UtilitySpec.exponential(u["alpha"])
        return UtilitySpec.log()
    except DomainError as exc:
        raise ConfigError(f"utility: {exc}") from None


def build_grid(cfg: dict) -> GridSpec:
    g = cfg["grid"]
    try:
        return GridSpec(
            t0=g["t0"], t_end=g["t_end"], nt=g["nt"],
            x_min=g["x_min"], x_max=g["x_max"], nx=g["nx"],
            y_min=g["y_min"], y_max=g["y_max"], ny=g["ny"],
        )
    except DomainError as exc:
        raise ConfigError(f"grid: {exc}") from None


def build_solver_config(cfg: dict) -> SolverConfig:
    s = cfg.get("solver", {})
    bounds = None
    if "pi_lo" in s or "pi_hi" in s:
        if not ("pi_lo" in s and "pi_hi" in s):
            raise ConfigError("solver: give both pi_lo and pi_hi or neither")
        bounds = (s["pi_lo"], s["pi_hi"])
    try:
        return SolverConfig(
            scheme=s.get("scheme", "implicit_x"),
            pi_bounds=bounds,
            eps_curv=s.get("eps_curv", 1e-12),
            cfl_limit=s.get("cfl_limit", 1.0),
            track_residuals=s.get("track_residuals", True),
        )
    except DomainError as exc:
        raise ConfigError(f"solver: {exc}") from None


def build_sim_config(cfg: dict, grid: GridSpec, threads: int, seed_override=None) -> SimConfig:
    if "sim" not in cfg:
        raise ConfigError("this command needs a sim block in the config")
    s = cfg["sim"]
    seed = seed_override if seed_override is not None else s["seed"]
    try:
        return SimConfig(
            n_paths=s["n_paths"],
            n_steps=s["n_steps"],
            seed=seed,
            t0=s.get("t_start", grid.t0),
            t_end=grid.t_end,
            x0=s["x0"],
            y0=s["y0"],
            x_floor=s.get("x_floor", grid.x_min),
            antithetic=s.get("antithetic", False),
            threads=threads,
            block_size=s.get("block_size", 16384),
        )
    except ConfigError:
        raise
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from None


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _write(out_dir: Path, name: str, data: bytes, written: dict):
    path = out_dir / name
    path.write_bytes(data)
    written[name] = data


def _write_manifest(out_dir: Path, written: dict):
    files = [
        {"name": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        for name, data in sorted(written.items())
    ]
    (out_dir / "manifest.json").write_bytes(_json_bytes({"files": files}))


def _csv_bytes(write_fn) -> bytes:
    import io

    buf = io.StringIO()
    write_fn(buf)
    return buf.getvalue().encode()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_check_identities(cfg: dict, out_dir: Path) -> int:
    block = cfg.get("check_identities", {})
    suite_names = block.get("suite", list(CORE_SUITE))
    h = block.get("h", 1e-4)
    tol = block.get("tolerance", 1e-6)
    tol_eq9 = block.get("eq9_tolerance", 1e-5)
    witness_floor = block.get("witness_floor", 1e-3)
    pts_cfg = block.get("points", {})
    t = pts_cfg.get("t", 0.7)
    beta = pts_cfg.get("beta", 1.0)
    xs = pts_cfg.get("xs", [0.6, 0.9, 1.25, 1.5, 1.8])
    ys = pts_cfg.get("ys", [0.55, 0.8, 1.1, 1.4, 1.7])
    points = [ShiftPoint(x=x, y=y, t=t, beta=beta) for x in xs for y in ys]

    if "expect_fail" in block:
        expect_fail = {(e["fn"], e["identity"]) for e in block["expect_fail"]}
    else:
        expect_fail = {
            (name, Identity.EQ9.value)
            for name in suite_names
            if not ANALYTIC_SUITE[name].product_form
        }

    scope_local = [
        Identity.EQ1, Identity.EQ2, Identity.EQ3, Identity.EQ4,
        Identity.EQ5, Identity.EQ6, Identity.VT,
    ]
    records = []
    first_unexpected_fail = None
    unexpected_passes = []
    for name in suite_names:
        fn = ANALYTIC_SUITE[name]
        for ident in scope_local + [Identity.EQ9]:
            tolerance = tol_eq9 if ident is Identity.EQ9 else tol
            expected_to_fail = (name, ident.value) in expect_fail
            for p in points:
                rep = check_identity(fn, p, ident, tolerance=tolerance, h=h)
                rec = rep.to_json_dict()
                rec["fn"] = name
                rec["expected_to_fail"] = expected_to_fail
                records.append(rec)
                if expected_to_fail:
                    # the witness must miss by a wide margin, not squeak through
                    if rep.residual <= witness_floor:
                        unexpected_passes.append(rec)
                elif not rep.passed and first_unexpected_fail is None:
                    first_unexpected_fail = rec

    n_pass = sum(1 for r in records if r["pass"])
    report = {
        "h": h,
        "tolerance": tol,
        "eq9_tolerance": tol_eq9,
        "witness_floor": witness_floor,
        "checks": records,
        "summary": {
            "total": len(records),
            "passed": n_pass,
            "expected_failures": sum(1 for r in records if r["expected_to_fail"]),
            "unexpected_passes": len(unexpected_passes),
        },
    }
    written = {}
    _write(out_dir, "identity_report.json", _json_bytes(report), written)
    _write_manifest(out_dir, written)

    if first_unexpected_fail is not None:
        print(
            "identity check failed: "
            f"{first_unexpected_fail['fn']} {first_unexpected_fail['identity']} "
            f"residual {first_unexpected_fail['residual']:.3e}",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    if unexpected_passes:
        rec = unexpected_passes[0]
        print(
            "expected failure not observed: "
            f"{rec['fn']} {rec['identity']} residual {rec['residual']:.3e} "
            f"did not exceed the witness floor {witness_floor:g}",
            file=sys.stderr,
        )
        return EXIT_EXPECTED_FAILURE_MISSING
    return EXIT_OK


def _run_fd(cfg: dict) -> tuple:
    model = build_model(cfg)
    utility = build_utility(cfg)
    grid = build_grid(cfg)
    solver_cfg = build_solver_config(cfg)
    return model, utility, grid, solve(model, utility, grid, solver_cfg)


def cmd_solve_fd(cfg: dict, out_dir: Path) -> int:
    _, _, _, solution = _run_fd(cfg)
    bounds = cfg.get("solve_fd", {})

    written = {}
    _write(out_dir, "surface.csv", _csv_bytes(lambda b: surface_to_csv(solution.surface, b)), written)
    _write(out_dir, "policy.csv", _csv_bytes(lambda b: policy_to_csv(solution.policy, b)), written)
    diag = {
        "scheme": solution.surface.metadata,
        "steps": solution.diagnostics,
        "clipped_total": solution.clipped_total,
        "monotonicity_violations": solution.monotonicity_violations,
    }
    _write(out_dir, "diagnostics.json", _json_bytes(diag), written)
    _write_manifest(out_dir, written)

    if "max_residual" in bounds and solution.diagnostics:
        worst = max(d.get("max_residual", 0.0) for d in solution.diagnostics)
        if worst > bounds["max_residual"]:
            print(
                f"diagnostics out of bounds: max residual {worst:.6g} exceeds "
                f"{bounds['max_residual']:g}",
                file=sys.stderr,
            )
            return EXIT_NUMERICAL
    if "max_clipped_fraction" in bounds:
        grid = solution.surface.grid
        total_nodes = (grid.nt - 1) * grid.nx * grid.ny
        frac = solution.clipped_total / total_nodes if total_nodes else 0.0
        if frac > bounds["max_clipped_fraction"]:
            print(
                f"diagnostics out of bounds: clipped fraction {frac:.4f} exceeds "
                f"{bounds['max_clipped_fraction']:g}",
                file=sys.stderr,
            )
            return EXIT_NUMERICAL
    return EXIT_OK


def _portfolio_terms(variant: str, v_b: float, v_bb: float, x: float, y: float,
                     model: MarketModel) -> dict:
    c = eval_coefficients(model, y)
    excess = -(c.mu - c.r) * v_b / (c.sigma ** 2 * x ** 3 * v_bb)
    if variant == "closed_form":
        hedge = -model.rho * c.sigma * (v_bb + v_b) / (c.sigma * x ** 3 * y * v_bb)
    else:
        hedge = -model.rho * c.sigma * (v_bb + v_b) / (x * y) / (c.sigma ** 2 * x ** 2 * v_bb)
    return {"excess_return_term": excess, "hedging_term": hedge}


def cmd_reduce_ode(cfg: dict, out_dir: Path) -> int:
    if "reduce_ode" not in cfg:
        raise ConfigError("reduce-ode needs a reduce_ode block in the config")
    model = build_model(cfg)
    utility = build_utility(cfg)
    block = cfg["reduce_ode"]
    t, x, y = block["t"], block["x"], block["y"]
    beta_lo = block.get("beta_lo", 0.5)
    beta_hi = block.get("beta_hi", 2.0)
    n_beta = block.get("n_beta", 65)
    max_iter = block.get("max_iter", 100)
    rtol = block.get("rtol", 1e-8)
    c = block.get("c")

    variants = {}
    for variant in ("closed_form", "foc"):
        res = solve_portfolio_fixed_point(
            model, t, x, y, variant=variant, c=c, utility=utility,
            max_iter=max_iter, rtol=rtol,
        )
        variants[variant] = res

    ref = variants["closed_form"]
    params = ReductionParams.from_model(model, t, x, y, ref.pi)
    ode = solve_vbeta(collect_ode(params), beta_range=(beta_lo, beta_hi),
                      c=ref.v_beta, n_nodes=n_beta)

    report = {
        "point": {"t": t, "x": x, "y": y},
        "normalization_c": ref.v_beta,
        "variants": {
            name: {
                "pi": res.pi,
                "v_beta": res.v_beta,
                "v_betabeta": res.v_betabeta,
                "iterations": res.iterations,
                **_portfolio_terms(name, res.v_beta, res.v_betabeta, x, y, model),
            }
            for name, res in variants.items()
        },
        "pi_difference": variants["closed_form"].pi - variants["foc"].pi,
        "max_ode_residual": float(np.max(ode.residuals)),
    }

    lines = ["beta,W,residual"]
    for bb, w, r in zip(ode.betas, ode.w, ode.residuals):
        lines.append(f"{bb:.15g},{w:.15g},{r:.15g}")
    csv_data = ("\n".join(lines) + "\n").encode()

    written = {}
    _write(out_dir, "ode_solution.csv", csv_data, written)
    _write(out_dir, "portfolio_report.json", _json_bytes(report), written)
    _write_manifest(out_dir, written)
    return EXIT_OK


def _build_named_policies(names, cfg, model, utility, grid):
    fd_solution = None
    if "fd" in names:
        solver_cfg = build_solver_config(cfg)
        fd_solution = solve(model, utility, grid, solver_cfg)
    return [
        pol.build_policy(
            n, model=model, utility=utility, grid=grid,
            t_end=grid.t_end, fd_solution=fd_solution,
        )
        for n in names
    ]


def cmd_simulate(cfg: dict, out_dir: Path, threads: int, seed_override=None) -> int:
    if "simulate" not in cfg:
        raise ConfigError("simulate needs a simulate block in the config")
    model = build_model(cfg)
    utility = build_utility(cfg)
    grid = build_grid(cfg)
    sim_cfg = build_sim_config(cfg, grid, threads, seed_override)
    block = cfg["simulate"]
    dump = block.get("dump_paths", False)
    if dump and sim_cfg.n_paths * sim_cfg.n_steps > MAX_DUMP_ROWS:
        raise ConfigError(
            f"path dump refused: {sim_cfg.n_paths} x {sim_cfg.n_steps} rows "
            f"exceed the {MAX_DUMP_ROWS} row guard"
        )

    policy = _build_named_policies([block["policy"]], cfg, model, utility, grid)[0]
    report = simulate_paths(model, policy, utility, sim_cfg)

    written = {}
    _write(out_dir, "sim_report.json", _json_bytes(report.to_dict()), written)
    if dump:
        from .mc import record_paths

        t_hist, x_hist, y_hist, pi_hist = record_paths(model, policy, utility, sim_cfg)
        lines = ["path,step,t,X,Y,pi"]
        n, m = x_hist.shape[1], pi_hist.shape[0]
        for i in range(n):
            for k in range(m + 1):
                # the terminal row carries no action
                pi_cell = f"{pi_hist[k, i]:.15g}" if k < m else "nan"
                lines.append(
                    f"{i},{k},{t_hist[k]:.15g},{x_hist[k, i]:.15g},"
                    f"{y_hist[k, i]:.15g},{pi_cell}"
                )
        _write(out_dir, "paths.csv", ("\n".join(lines) + "\n").encode(), written)
    _write_manifest(out_dir, written)
    return EXIT_OK


def cmd_compare(cfg: dict, out_dir: Path, threads: int, seed_override=None) -> int:
    if "compare" not in cfg:
        raise ConfigError("compare needs a compare block in the config")
    model = build_model(cfg)
    utility = build_utility(cfg)
    grid = build_grid(cfg)
    sim_cfg = build_sim_config(cfg, grid, threads, seed_override)
    names = cfg["compare"]["policies"]
    fields = _build_named_policies(names, cfg, model, utility, grid)
    report = compare_policies(model, utility, fields, sim_cfg)

    ranking_lines = ["rank,policy,estimate,std_error"]
    by_label = {r.label: r for r in report.reports}
    for rank, label in enumerate(report.ranking, start=1):
        r = by_label[label]
        ranking_lines.append(f"{rank},{label},{r.estimate:.15g},{r.std_error:.15g}")

    written = {}
    _write(out_dir, "comparison.json", _json_bytes(report.to_dict()), written)
    _write(out_dir, "ranking.csv", ("\n".join(ranking_lines) + "\n").encode(), written)
    _write_manifest(out_dir, written)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hjblab",
        description="dilation-transform laboratory for portfolio HJB equations",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check-identities", "solve-fd", "reduce-ode", "simulate", "compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker thread cap, overrides the config")
        sp.add_argument("--seed-override", type=int, default=None,
                        help="replace the config seed for this run")
    return p


_NUMERICAL_ERRORS = (
    StabilityError,
    SingularCoefficientError,
    NonConvergenceError,
    DegenerateCurvatureError,
    EvaluationError,
    OutOfBoundsError,
    FloatingPointError,
)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads is not None else cfg.get("threads", 1)
        if threads < 1:
            raise ConfigError("threads must be at least 1")
        # dry-build the shared objects so validation completes before any
        # output lands on disk
        build_model(cfg)
        build_utility(cfg)
        build_grid(cfg)

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "check-identities":
            return cmd_check_identities(cfg, out_dir)
        if args.command == "solve-fd":
            return cmd_solve_fd(cfg, out_dir)
        if args.command == "reduce-ode":
            return cmd_reduce_ode(cfg, out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, threads, args.seed_override)
        return cmd_compare(cfg, out_dir, threads, args.seed_override)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
