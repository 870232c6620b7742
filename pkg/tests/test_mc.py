"""Tests for the Monte Carlo policy evaluation layer.

Oracles used here: under the zero policy wealth is deterministic, so the
estimate must equal the Euler compounding exactly with zero standard
error. Under a constant policy with constant coefficients the Euler mean
of wealth is exactly computable, and antithetic pairing cancels the
(linear-in-noise) fluctuations entirely, which turns the weak-error ratio
measurement into a deterministic quantity.
"""

import math

import numpy as np
import pytest

from hjblab.errors import ConfigError
from hjblab.fd_solver import solve
from hjblab.mc import (
    SimConfig,
    compare_policies,
    record_paths,
    simulate_paths,
    value_check,
)
from hjblab.model import GridSpec, MarketModel, PolicyField, UtilitySpec

MODEL = MarketModel.constant(r=0.03, mu=0.10, sigma=0.25, b=0.0, rho=0.0)
POWER = UtilitySpec.power(0.5)
EXPO = UtilitySpec.exponential(1.0)


def const_policy(level, label="const"):
    return PolicyField.closed_form(
        lambda t, x, y: level + 0.0 * np.asarray(x, dtype=float), label=label
    )


ZERO = const_policy(0.0, "zero")
HALF = const_policy(0.5, "const")


def test_config_validation():
    ok = dict(n_paths=200, n_steps=32, seed=1, t0=0.0, t_end=0.5, x0=1.0, y0=0.0)
    SimConfig(**ok)
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "n_paths": 50})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "n_steps": 8})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "seed": -1})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "t_end": -1.0})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "x_floor": 0.0})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "n_paths": 201, "antithetic": True})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "threads": 0})
    with pytest.raises(ConfigError):
        SimConfig(**{**ok, "block_size": 3})


def test_zero_policy_is_deterministic():
    cfg = SimConfig(n_paths=200, n_steps=64, seed=1, t0=0.5, t_end=1.0, x0=1.0, y0=0.0)
    rep = simulate_paths(MODEL, ZERO, POWER, cfg)
    euler_xt = (1.0 + 0.03 * cfg_dt(cfg)) ** 64
    assert rep.estimate == float(POWER.u(euler_xt))
    assert rep.std_error == 0.0
    assert rep.bankruptcies == 0
    # and the Euler compounding sits within O(dt) of continuous growth
    assert rep.estimate == pytest.approx(float(POWER.u(math.exp(0.015))), abs=1e-5)
    assert rep.mean_xt == pytest.approx(euler_xt, rel=1e-14)


def cfg_dt(cfg):
    return (cfg.t_end - cfg.t0) / cfg.n_steps


def test_weak_error_halves_with_step():
    """First order weak convergence, measured without sampling noise.

    Wealth under a constant policy is linear in the Gaussian increments,
    so antithetic pair means carry no noise at all and mean_xt equals the
    deterministic Euler mean. Its distance to the continuous-time mean
    must shrink by about 2x per step doubling.
    """
    m_exact = math.exp(0.015) + 0.5 * 0.07 * (math.exp(0.015) - 1.0) / 0.03

    def bias(n_steps):
        cfg = SimConfig(n_paths=2000, n_steps=n_steps, seed=3, t0=0.0, t_end=0.5,
                        x0=1.0, y0=0.0, antithetic=True)
        rep = simulate_paths(MODEL, HALF, EXPO, cfg)
        return abs(rep.mean_xt - m_exact)

    ratio_a = bias(16) / bias(32)
    ratio_b = bias(32) / bias(64)
    assert 1.6 <= ratio_a <= 2.6
    assert 1.6 <= ratio_b <= 2.6


def test_discounted_mean_is_flat_when_mu_equals_r():
    # with mu = r the policy drops out of the drift entirely; the Euler
    # mean is the riskless compounding to machine precision
    meq = MarketModel.constant(r=0.03, mu=0.03, sigma=0.25, b=0.0, rho=0.0)
    cfg = SimConfig(n_paths=2000, n_steps=32, seed=5, t0=0.0, t_end=0.5, x0=1.0,
                    y0=0.0, antithetic=True)
    rep = simulate_paths(meq, HALF, EXPO, cfg)
    euler_mean = (1.0 + 0.03 * 0.5 / 32) ** 32
    assert rep.mean_xt == pytest.approx(euler_mean, abs=1e-13)


def test_same_seed_same_bits_across_threads():
    base = dict(n_paths=4000, n_steps=32, seed=9, t0=0.0, t_end=0.5, x0=1.0, y0=0.0,
                block_size=512)
    r1 = simulate_paths(MODEL, HALF, POWER, SimConfig(**base))
    r4 = simulate_paths(MODEL, HALF, POWER, SimConfig(**base, threads=4))
    assert r1.estimate == r4.estimate
    assert r1.std_error == r4.std_error
    assert r1.mean_xt == r4.mean_xt


def test_seed_actually_matters():
    base = dict(n_paths=2000, n_steps=32, t0=0.0, t_end=0.5, x0=1.0, y0=0.0)
    r9 = simulate_paths(MODEL, HALF, POWER, SimConfig(seed=9, **base))
    r10 = simulate_paths(MODEL, HALF, POWER, SimConfig(seed=10, **base))
    assert r9.estimate != r10.estimate


def test_antithetic_reduces_standard_error():
    base = dict(n_paths=4000, n_steps=32, seed=7, t0=0.0, t_end=0.5, x0=1.0, y0=0.0)
    plain = simulate_paths(MODEL, HALF, POWER, SimConfig(**base))
    anti = simulate_paths(MODEL, HALF, POWER, SimConfig(**base, antithetic=True))
    assert anti.std_error < 0.5 * plain.std_error


def test_compare_policies_crn_self_difference_is_zero():
    cfg = SimConfig(n_paths=500, n_steps=32, seed=1, t0=0.5, t_end=1.0, x0=1.0, y0=0.0)
    twin = const_policy(0.0, "zero_twin")
    comp = compare_policies(MODEL, POWER, [ZERO, twin], cfg)
    d = comp.differences[0]
    assert d["mean_difference"] == 0.0
    assert d["std_error"] == 0.0
    assert {r.label for r in comp.reports} == {"zero", "zero_twin"}
    assert len(comp.ranking) == 2


def test_compare_policies_ranks_by_estimate():
    cfg = SimConfig(n_paths=4000, n_steps=32, seed=2, t0=0.5, t_end=1.0, x0=1.0, y0=0.0)
    merton = const_policy(2.24, "merton_like")
    comp = compare_policies(MODEL, POWER, [ZERO, merton, const_policy(8.0, "leveraged")], cfg)
    assert comp.ranking[0] == "merton_like"
    ests = {r.label: r.estimate for r in comp.reports}
    assert ests["merton_like"] > ests["zero"]
    assert len(comp.differences) == 3


def test_compare_policies_needs_two():
    cfg = SimConfig(n_paths=200, n_steps=16, seed=1, t0=0.5, t_end=1.0, x0=1.0, y0=0.0)
    with pytest.raises(ConfigError):
        compare_policies(MODEL, POWER, [ZERO], cfg)


def test_correlation_cannot_leak_into_y_free_runs():
    """With a wealth-only policy the factor never feeds back, so changing
    rho must not move a single bit of the estimate."""
    mrho = MarketModel.constant(r=0.03, mu=0.10, sigma=0.25, b=0.0, rho=0.7)
    cfg = SimConfig(n_paths=4000, n_steps=32, seed=9, t0=0.0, t_end=0.5, x0=1.0,
                    y0=0.0, block_size=512)
    a = simulate_paths(MODEL, HALF, POWER, cfg)
    b = simulate_paths(mrho, HALF, POWER, cfg)
    assert a.estimate == b.estimate


def test_bankruptcy_absorption():
    wild = const_policy(50.0, "wild")
    cfg = SimConfig(n_paths=2000, n_steps=32, seed=2, t0=0.0, t_end=0.5, x0=1.0,
                    y0=0.0, x_floor=0.25)
    rep = simulate_paths(MODEL, wild, POWER, cfg)
    assert rep.bankruptcies > 0
    assert np.isfinite(rep.estimate)
    # exponential utility tolerates negative wealth and never absorbs
    rep_e = simulate_paths(MODEL, wild, EXPO, cfg)
    assert rep_e.bankruptcies == 0


def test_record_paths_reproduces_the_estimate():
    cfg = SimConfig(n_paths=4000, n_steps=32, seed=9, t0=0.0, t_end=0.5, x0=1.0,
                    y0=0.0, block_size=512)
    rep = simulate_paths(MODEL, HALF, POWER, cfg)
    t_h, x_h, y_h, pi_h = record_paths(MODEL, HALF, POWER, cfg)
    assert t_h.shape == (33,)
    assert x_h.shape == (33, 4000)
    assert y_h.shape == (33, 4000)
    assert pi_h.shape == (32, 4000)
    assert t_h[0] == 0.0 and t_h[-1] == 0.5
    assert np.all(x_h[0] == 1.0)
    assert np.all(pi_h == 0.5)
    # identical streams and identical reduction order: the mean of the
    # recorded terminal utilities is the estimate, bit for bit
    assert float(np.mean(np.asarray(POWER.u(x_h[-1])))) == rep.estimate


def test_record_paths_shows_absorption_at_the_floor():
    wild = const_policy(50.0, "wild")
    cfg = SimConfig(n_paths=2000, n_steps=32, seed=2, t0=0.0, t_end=0.5, x0=1.0,
                    y0=0.0, x_floor=0.25)
    rep = simulate_paths(MODEL, wild, POWER, cfg)
    _, x_h, _, _ = record_paths(MODEL, wild, POWER, cfg)
    assert int(np.sum(x_h[-1] == 0.25)) == rep.bankruptcies
    assert np.min(x_h[-1]) > 0.0


def test_value_check_terminal_point_scores_zero():
    grid = GridSpec(t0=0.5, t_end=1.0, nt=41, x_min=0.5, x_max=2.0, nx=41,
                    y_min=-1.0, y_max=1.0, ny=11)
    sol = solve(MODEL, POWER, grid)
    cfg = SimConfig(n_paths=200, n_steps=16, seed=1, t0=0.5, t_end=1.0, x0=1.0, y0=0.0)
    # starting at the terminal time there is nothing to simulate: every
    # path scores u(x0) and the FD surface holds the terminal condition
    # exactly, so the z-score is exactly zero with zero variance
    row = value_check(MODEL, POWER, sol, cfg, [(1.0, grid.x_nodes[20], 0.0)])[0]
    assert row.std_error == 0.0
    assert row.z == 0.0
    assert row.v_fd == row.v_mc


def test_value_check_interior_agreement_and_boundary_flag():
    grid = GridSpec(t0=0.5, t_end=1.0, nt=81, x_min=0.5, x_max=2.0, nx=61,
                    y_min=-1.0, y_max=1.0, ny=15)
    sol = solve(MODEL, POWER, grid)
    cfg = SimConfig(n_paths=20000, n_steps=64, seed=17, t0=0.5, t_end=1.0,
                    x0=1.0, y0=0.0)
    rows = value_check(MODEL, POWER, sol, cfg, [(0.5, 1.2, 0.0), (0.5, 0.55, 0.0)])
    interior, near_edge = rows
    assert not interior.boundary_affected
    assert abs(interior.z) < 4.0
    assert interior.std_error > 0.0
    assert near_edge.boundary_affected
    for row in rows:
        d = row.to_dict()
        assert {"t", "x", "y", "v_fd", "v_mc", "std_error", "z", "boundary_affected"} == set(d)


def test_sim_report_serialization():
    cfg = SimConfig(n_paths=200, n_steps=16, seed=4, t0=0.5, t_end=1.0, x0=1.0, y0=0.0)
    rep = simulate_paths(MODEL, ZERO, POWER, cfg)
    d = rep.to_dict()
    assert d["label"] == "zero"
    assert d["n_paths"] == 200
    assert d["seed"] == 4
    assert d["estimate"] == rep.estimate
