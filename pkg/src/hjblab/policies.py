"""Reference portfolio policies for simulation and comparison runs.

Alongside the FD-extracted policy, the comparison harness knows the two
Merton closed forms (constant-market benchmarks that stay well defined
under y-dependent coefficients by evaluating them at the local factor
level), the all-cash zero policy, and the dilation-rule policy resolved
by the pi <-> W fixed point at every grid node.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import GridSpec, MarketModel, PolicyField, UtilitySpec
from .reduction import solve_portfolio_fixed_point

POLICY_NAMES = ("zero", "merton_power", "merton_exponential", "fd", "shift")


def zero_policy() -> PolicyField:
    return PolicyField.closed_form(lambda t, x, y: 0.0 * np.asarray(x, dtype=float), label="zero")


def merton_power_policy(model: MarketModel, gamma: float) -> PolicyField:
    """pi(t, x, y) = (mu - r) x / (sigma^2 (1 - gamma)), coefficients at y."""

    def fn(t, x, y):
        x = np.asarray(x, dtype=float)
        r = model.r(y)
        mu = model.mu(y)
        sig = model.sigma(y)
        return (mu - r) * x / (sig ** 2 * (1.0 - gamma))

    return PolicyField.closed_form(fn, label="merton_power")


def merton_exponential_policy(model: MarketModel, alpha: float, t_end: float) -> PolicyField:
    """pi(t, x, y) = (mu - r) exp(-r (T - t)) / (alpha sigma^2), wealth free."""

    def fn(t, x, y):
        r = model.r(y)
        mu = model.mu(y)
        sig = model.sigma(y)
        out = (mu - r) * np.exp(-r * (t_end - np.asarray(t, dtype=float))) / (alpha * sig ** 2)
        return out + 0.0 * np.asarray(x, dtype=float)

    return PolicyField.closed_form(fn, label="merton_exponential")


def shift_rule_policy(model: MarketModel, utility: UtilitySpec, grid: GridSpec,
                      variant: str = "closed_form", max_iter: int = 100,
                      rtol: float = 1e-8) -> PolicyField:
    """Dilation-rule weight resolved node by node on a grid.

    The rule divides by y, so the grid must keep every y node away from
    zero; grids that land a node on (or numerically at) y = 0 are refused
    with a hint to offset the axis by half a cell.
    """
    y_nodes = grid.y_nodes
    tol = 1e-9 * max(1.0, abs(grid.y_max - grid.y_min))
    if np.any(np.abs(y_nodes) < tol):
        raise ConfigError(
            "shift policy grid has a y node at 0; offset y_min/y_max by half "
            "a cell so the rule's 1/y factor stays finite"
        )
    nt, nx, ny = grid.shape()
    values = np.empty((nt, nx, ny))
    t_nodes = grid.t_nodes
    x_nodes = grid.x_nodes
    # the rule is t-local and x/y-local; nodes are independent of each other
    for j, x in enumerate(x_nodes):
        for k, y in enumerate(y_nodes):
            for i, t in enumerate(t_nodes):
                res = solve_portfolio_fixed_point(
                    model, t, x, y, variant=variant, utility=utility,
                    max_iter=max_iter, rtol=rtol,
                )
                values[i, j, k] = res.pi
    return PolicyField.from_grid(grid, values, label="shift")


def build_policy(name: str, *, model: MarketModel, utility: UtilitySpec,
                 grid: GridSpec, t_end: float, fd_solution=None) -> PolicyField:
    """Construct one of the named comparison policies."""
    if name == "zero":
        return zero_policy()
    if name == "merton_power":
        if utility.family != "power":
            raise ConfigError("merton_power policy needs a power utility")
        return merton_power_policy(model, utility.gamma)
    if name == "merton_exponential":
        if utility.family != "exponential":
            raise ConfigError("merton_exponential policy needs an exponential utility")
        return merton_exponential_policy(model, utility.alpha, t_end)
    if name == "fd":
        if fd_solution is None:
            raise ConfigError("fd policy needs a completed FD solve")
        return fd_solution.policy
    if name == "shift":
        return shift_rule_policy(model, utility, grid)
    raise ConfigError(f"unknown policy name {name!r}; known: {', '.join(POLICY_NAMES)}")
