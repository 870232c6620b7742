"""Tests for the named comparison policies."""

import numpy as np
import pytest

from hjblab.errors import ConfigError
from hjblab.fd_solver import solve
from hjblab.model import GridSpec, MarketModel, UtilitySpec
from hjblab.policies import (
    POLICY_NAMES,
    build_policy,
    merton_exponential_policy,
    merton_power_policy,
    shift_rule_policy,
    zero_policy,
)

MODEL = MarketModel.constant(r=0.03, mu=0.10, sigma=0.25, b=0.0, rho=0.0)
POWER = UtilitySpec.power(0.5)
GRID = GridSpec(t0=0.5, t_end=1.0, nt=5, x_min=0.5, x_max=2.0, nx=5,
                y_min=0.1, y_max=1.1, ny=5)


def test_zero_policy():
    pol = zero_policy()
    vals, mask = pol.evaluate_clamped(np.array([0.5, 0.9]), np.array([1.0, 7.0]),
                                      np.array([0.0, -3.0]))
    assert np.all(vals == 0.0)
    assert not mask.any()
    assert pol.label == "zero"


def test_merton_power_policy_values():
    pol = merton_power_policy(MODEL, gamma=0.5)
    vals, _ = pol.evaluate_clamped(np.array([0.5]), np.array([2.0]), np.array([0.3]))
    # (mu - r) x / (sigma^2 (1 - gamma)) = 0.07 * 2 / 0.03125
    assert vals[0] == pytest.approx(4.48, rel=1e-12)


def test_merton_power_uses_local_coefficients():
    table = MarketModel.table(
        y_nodes=np.array([-1.0, 0.0, 1.0]),
        r=np.array([0.01, 0.03, 0.05]),
        mu=np.array([0.08, 0.10, 0.12]),
        sigma=np.array([0.2, 0.25, 0.3]),
        b=np.zeros(3),
        rho=0.0,
    )
    pol = merton_power_policy(table, gamma=0.5)
    v0, _ = pol.evaluate_clamped(np.array([0.5]), np.array([1.0]), np.array([0.0]))
    v1, _ = pol.evaluate_clamped(np.array([0.5]), np.array([1.0]), np.array([1.0]))
    assert v0[0] == pytest.approx(0.07 / (0.25 ** 2 * 0.5), rel=1e-12)
    assert v1[0] == pytest.approx(0.07 / (0.30 ** 2 * 0.5), rel=1e-12)


def test_merton_exponential_policy_values():
    pol = merton_exponential_policy(MODEL, alpha=1.0, t_end=1.0)
    # at t = 0: (mu - r) e^{-r T} / (alpha sigma^2) with T = 1
    vals, _ = pol.evaluate_clamped(np.array([0.0]), np.array([1.0]), np.array([0.0]))
    assert vals[0] == pytest.approx(1.0868989975743293, rel=1e-12)
    # wealth does not enter
    other, _ = pol.evaluate_clamped(np.array([0.0]), np.array([5.0]), np.array([0.0]))
    assert other[0] == vals[0]
    # at t = T the discount disappears
    at_end, _ = pol.evaluate_clamped(np.array([1.0]), np.array([1.0]), np.array([0.0]))
    assert at_end[0] == pytest.approx(0.07 / 0.0625, rel=1e-12)


def test_shift_rule_policy_grid():
    corr = MarketModel.constant(r=0.03, mu=0.10, sigma=0.25, b=0.2, rho=0.5)
    grid = GridSpec(t0=0.5, t_end=1.0, nt=5, x_min=0.8, x_max=2.0, nx=5,
                    y_min=0.6, y_max=1.0, ny=5)
    pol = shift_rule_policy(corr, POWER, grid)
    assert pol.label == "shift"
    assert pol.values.shape == grid.shape()
    assert np.all(np.isfinite(pol.values))
    # spot check one node against the fixed point solved directly
    from hjblab.reduction import solve_portfolio_fixed_point
    i, j, k = 2, 3, 1
    res = solve_portfolio_fixed_point(
        corr, grid.t_nodes[i], grid.x_nodes[j], grid.y_nodes[k], utility=POWER
    )
    assert pol.values[i, j, k] == pytest.approx(res.pi, rel=1e-10)


def test_shift_rule_policy_fails_loudly_outside_contraction_regime():
    # at small wealth with positive correlation the plain iteration walks
    # into the singular surface of the ratio instead of settling
    from hjblab.errors import NonConvergenceError
    corr = MarketModel.constant(r=0.03, mu=0.10, sigma=0.25, b=0.2, rho=0.5)
    from hjblab.reduction import solve_portfolio_fixed_point
    with pytest.raises(NonConvergenceError):
        solve_portfolio_fixed_point(corr, 0.5, 0.5, 0.85, utility=POWER)


def test_shift_rule_policy_refuses_zero_y_node():
    grid = GridSpec(t0=0.5, t_end=1.0, nt=5, x_min=0.5, x_max=2.0, nx=5,
                    y_min=-1.0, y_max=1.0, ny=5)  # has a node at y = 0
    with pytest.raises(ConfigError):
        shift_rule_policy(MODEL, POWER, grid)


def test_build_policy_dispatch():
    names = set(POLICY_NAMES)
    assert names == {"zero", "merton_power", "merton_exponential", "fd", "shift"}
    pol = build_policy("zero", model=MODEL, utility=POWER, grid=GRID, t_end=1.0)
    assert pol.label == "zero"
    with pytest.raises(ConfigError):
        build_policy("martingale", model=MODEL, utility=POWER, grid=GRID, t_end=1.0)


def test_build_policy_family_guards():
    expo = UtilitySpec.exponential(1.0)
    with pytest.raises(ConfigError):
        build_policy("merton_power", model=MODEL, utility=expo, grid=GRID, t_end=1.0)
    with pytest.raises(ConfigError):
        build_policy("merton_exponential", model=MODEL, utility=POWER, grid=GRID, t_end=1.0)
    with pytest.raises(ConfigError):
        build_policy("fd", model=MODEL, utility=POWER, grid=GRID, t_end=1.0)


def test_build_policy_fd_passthrough():
    grid = GridSpec(t0=0.5, t_end=1.0, nt=21, x_min=0.5, x_max=2.0, nx=21,
                    y_min=-1.0, y_max=1.0, ny=7)
    sol = solve(MODEL, POWER, grid)
    pol = build_policy("fd", model=MODEL, utility=POWER, grid=grid, t_end=1.0,
                       fd_solution=sol)
    assert pol is sol.policy
    assert pol.label == "fd"
