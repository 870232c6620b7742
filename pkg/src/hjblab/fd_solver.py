"""Classical finite-difference solver for the portfolio HJB equation.

Backward time stepping of

    V_t + r x V_x + b V_y + 0.5 V_yy
        + max_pi { 0.5 pi^2 sigma^2 V_xx + pi (mu - r) V_x
                   + rho sigma pi V_xy } = 0,    V(T, x, y) = u(x)

on a uniform (t, x, y) grid, independent of the dilation machinery. The
inner maximization is resolved in closed form from the lagged slice
(policy frozen over each step), either fully explicitly or with the
x-direction advection and diffusion treated implicitly per y-column.

Discretization: central differences inside, one-sided differences at the
x edges, and a zero-curvature condition on the y edges. The cross
derivative uses the standard four-corner stencil in the interior.

Wealth-boundary closure: a curvature stencil on the edge rows would need
a node outside the band (or a shifted stencil that breaks the discrete
maximum principle and lets boundary error feed back through the policy),
so the edge rows replace V_xx by the asymptotic shape the value function
is known to have when the market coefficients do not depend on wealth:
V_xx = (gamma - 1) V_x / x for power utility, V_xx = -V_x / x for log,
V_xx = -alpha e^{r (T - t)} V_x for exponential. The edge rows then carry
only one-sided first derivatives. Callers that step slices outside any
utility context fall back to a zero risky position on the edge rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, StabilityError
from .model import (
    CoefficientValues,
    GridSpec,
    MarketModel,
    PolicyField,
    UtilitySpec,
    ValueSurface,
)

SCHEMES = ("explicit", "implicit_x")


@dataclass(frozen=True)
class SolverConfig:
    """Numerical controls for the backward sweep.

    pi_bounds defaults to +/- 10 * x_max at solve time. eps_curv decides
    when the quadratic in pi is treated as degenerate and the maximizer is
    taken at a bound endpoint instead of the interior stationary point.
    """

    scheme: str = "implicit_x"
    pi_bounds: tuple | None = None
    eps_curv: float = 1e-12
    cfl_limit: float = 1.0
    track_residuals: bool = True
    boundary: tuple = (("x", "one_sided"), ("y", "zero_curvature"))

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.pi_bounds is not None:
            lo, hi = self.pi_bounds
            if not lo < hi:
                raise DomainError(f"empty pi bounds [{lo}, {hi}]")
        if not self.eps_curv > 0.0:
            raise DomainError("eps_curv must be positive")


def resolve_pi_bounds(config: SolverConfig, grid: GridSpec) -> tuple:
    if config.pi_bounds is not None:
        return (float(config.pi_bounds[0]), float(config.pi_bounds[1]))
    cap = 10.0 * grid.x_max
    return (-cap, cap)


def hamiltonian_term(pi, vx, vxx, vxy, coeffs: CoefficientValues, rho: float):
    """Controlled part of the generator:
    0.5 pi^2 sigma^2 V_xx + pi (mu - r) V_x + rho sigma pi V_xy."""
    return (
        0.5 * pi ** 2 * coeffs.sigma ** 2 * vxx
        + pi * (coeffs.mu - coeffs.r) * vx
        + rho * coeffs.sigma * pi * vxy
    )


def argmax_pi_closed(vx, vxx, vxy, coeffs: CoefficientValues, rho: float,
                     bounds: tuple, eps_curv: float = 1e-12):
    """Closed-form maximizer of the pi quadratic, clipped to bounds.

    Where V_xx < -eps_curv the interior stationary point
    -((mu - r) V_x + rho sigma V_xy) / (sigma^2 V_xx) is taken and clipped;
    elsewhere the quadratic is non-concave and the better bound endpoint
    wins (ties resolve to the lower bound). Returns (pi, clipped_mask)
    where the mask also covers the degenerate nodes.
    """
    lo, hi = bounds
    vx = np.asarray(vx, dtype=float)
    vxx = np.asarray(vxx, dtype=float)
    vxy = np.asarray(vxy, dtype=float)
    lin = (coeffs.mu - coeffs.r) * vx + rho * coeffs.sigma * vxy
    quad = coeffs.sigma ** 2 * vxx
    concave = vxx < -eps_curv
    safe_quad = np.where(concave, quad, -1.0)
    pi_unc = -lin / safe_quad
    pi_int = np.clip(pi_unc, lo, hi)

    h_lo = 0.5 * quad * lo ** 2 + lin * lo
    h_hi = 0.5 * quad * hi ** 2 + lin * hi
    pi_edge = np.where(h_hi > h_lo, hi, lo)

    pi = np.where(concave, pi_int, pi_edge)
    clipped = ~concave | (pi_unc < lo) | (pi_unc > hi)
    if pi.ndim == 0:
        return float(pi), bool(clipped)
    return pi, clipped


def _derivatives(v: np.ndarray, dx: float, dy: float):
    """All slice derivatives used by the generator and the policy."""
    vx = np.gradient(v, dx, axis=0, edge_order=2)
    vy = np.gradient(v, dy, axis=1, edge_order=2)

    vxx = np.empty_like(v)
    vxx[1:-1, :] = (v[2:, :] - 2.0 * v[1:-1, :] + v[:-2, :]) / dx ** 2
    vxx[0, :] = (v[0, :] - 2.0 * v[1, :] + v[2, :]) / dx ** 2
    vxx[-1, :] = (v[-1, :] - 2.0 * v[-2, :] + v[-3, :]) / dx ** 2

    vyy = np.zeros_like(v)
    vyy[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / dy ** 2
    # zero-curvature condition on the y edges: vyy stays 0 there

    vxy = np.gradient(vy, dx, axis=0, edge_order=2)
    return vx, vxx, vyy, vy, vxy


def _coeff_rows(model: MarketModel, y_nodes: np.ndarray):
    """(r, mu, sigma, b) evaluated on the y axis, shaped (1, ny)."""
    r = np.asarray(model.r(y_nodes), dtype=float)[None, :]
    mu = np.asarray(model.mu(y_nodes), dtype=float)[None, :]
    sig = np.asarray(model.sigma(y_nodes), dtype=float)[None, :]
    b = np.asarray(model.b(y_nodes), dtype=float)[None, :]
    return r, mu, sig, b


def _edge_curvature_factors(utility: UtilitySpec, t: float, grid: GridSpec,
                            r_row: np.ndarray):
    """Per-edge factors c with V_xx = c * V_x on the x boundary rows.

    Exact for power and log utility whenever the coefficients depend on
    the factor only, and for exponential utility under a constant short
    rate; for a factor-dependent rate the exponential factor uses the
    local r(y), which is the natural first approximation.
    """
    if utility.family == "power":
        lo = np.full(grid.ny, (utility.gamma - 1.0) / grid.x_min)
        hi = np.full(grid.ny, (utility.gamma - 1.0) / grid.x_max)
    elif utility.family == "log":
        lo = np.full(grid.ny, -1.0 / grid.x_min)
        hi = np.full(grid.ny, -1.0 / grid.x_max)
    else:
        theta = utility.alpha * np.exp(r_row.ravel() * (grid.t_end - t))
        lo = -theta
        hi = -theta.copy()
    return lo, hi


def _policy_slice(v: np.ndarray, model: MarketModel, grid: GridSpec,
                  config: SolverConfig, utility: UtilitySpec | None = None,
                  t: float | None = None):
    """Lagged policy for one slice, with the x edge rows closed.

    With a utility in hand the edge-row curvature is replaced by the
    asymptotic relation (module docstring) before the argmax; without one
    the edge rows keep a zero risky position.
    """
    vx, vxx, vyy, vy, vxy = _derivatives(v, grid.dx, grid.dy)
    rows = _coeff_rows(model, grid.y_nodes)
    edges = None
    if utility is not None:
        t_eval = grid.t_end if t is None else t
        edges = _edge_curvature_factors(utility, t_eval, grid, rows[0])
        vxx[0, :] = edges[0] * vx[0, :]
        vxx[-1, :] = edges[1] * vx[-1, :]
    coeffs = CoefficientValues(r=rows[0], mu=rows[1], sigma=rows[2], b=rows[3])
    bounds = resolve_pi_bounds(config, grid)
    pi, clipped = argmax_pi_closed(
        vx, vxx, vxy, coeffs, model.rho, bounds, config.eps_curv
    )
    if edges is None:
        pi[0, :] = 0.0
        pi[-1, :] = 0.0
    return pi, clipped, (vx, vxx, vyy, vy, vxy), rows, edges


def _generator(v_derivs, pi, x_col, coeff_rows, rho):
    vx, vxx, vyy, vy, vxy = v_derivs
    r, mu, sig, b = coeff_rows
    return (
        r * x_col * vx
        + b * vy
        + 0.5 * vyy
        + 0.5 * pi ** 2 * sig ** 2 * vxx
        + pi * (mu - r) * vx
        + rho * sig * pi * vxy
    )


def _cfl_number(pi, x_col, coeff_rows, rho, grid: GridSpec, dt: float) -> float:
    r, mu, sig, b = coeff_rows
    adv_x = np.abs(r * x_col + (mu - r) * pi)
    rate = (
        sig ** 2 * pi ** 2 / grid.dx ** 2
        + 1.0 / grid.dy ** 2
        + adv_x / grid.dx
        + np.abs(b) / grid.dy
        + np.abs(rho * sig * pi) / (grid.dx * grid.dy)
    )
    return float(dt * np.max(rate))


@dataclass
class StepResult:
    v: np.ndarray
    pi: np.ndarray
    diagnostics: dict


def step_backward(v_next: np.ndarray, config: SolverConfig, model: MarketModel,
                  grid: GridSpec, utility: UtilitySpec | None = None,
                  t: float | None = None) -> StepResult:
    """One backward step of size grid.dt from the slice at t + dt.

    The policy is computed from the incoming slice (lagged) and frozen over
    the step. utility and t (the incoming slice's time) select the x edge
    closure; without them the edge rows carry no risky position.
    Diagnostics report the discrete equation residual (evaluated with the
    forward time difference and the spatial operator on the new slice, an
    O(dt) measure), the clipped-node count, and the CFL number of the
    explicitly-treated terms. The explicit scheme refuses to step when
    that number exceeds config.cfl_limit.
    """
    v_next = np.asarray(v_next, dtype=float)
    if v_next.shape != (grid.nx, grid.ny):
        raise DomainError(
            f"slice shape {v_next.shape} does not match grid ({grid.nx}, {grid.ny})"
        )
    dt = grid.dt
    x_col = grid.x_nodes[:, None]
    pi, clipped, derivs, rows, edges = _policy_slice(
        v_next, model, grid, config, utility, t
    )

    if config.scheme == "explicit":
        cfl = _cfl_number(pi, x_col, rows, model.rho, grid, dt)
        if cfl > config.cfl_limit:
            raise StabilityError(cfl, config.cfl_limit)
        v_prev = v_next + dt * _generator(derivs, pi, x_col, rows, model.rho)
    else:
        cfl = _explicit_part_cfl(rows, model.rho, pi, grid, dt)
        v_prev = _implicit_x_step(
            v_next, pi, derivs, rows, model.rho, grid, dt, x_col, edges
        )

    diag = {
        "clipped_nodes": int(np.sum(clipped)),
        "cfl": cfl,
    }
    if config.track_residuals:
        derivs_prev = _derivatives(v_prev, grid.dx, grid.dy)
        resid = (v_next - v_prev) / dt + _generator(derivs_prev, pi, x_col, rows, model.rho)
        diag["max_residual"] = float(np.max(np.abs(resid[1:-1, 1:-1])))
    return StepResult(v=v_prev, pi=pi, diagnostics=diag)


def _explicit_part_cfl(rows, rho, pi, grid: GridSpec, dt: float) -> float:
    """CFL number of the terms the implicit-x scheme still treats explicitly."""
    r, mu, sig, b = rows
    rate = (
        1.0 / grid.dy ** 2
        + np.abs(b) / grid.dy
        + np.abs(rho * sig * pi) / (grid.dx * grid.dy)
    )
    return float(dt * np.max(rate))


def _implicit_x_step(v_next, pi, derivs, rows, rho, grid: GridSpec, dt, x_col,
                     edges=None):
    """Solve (I - dt * L_x) v = v_next + dt * (L_y + L_cross) v_next per y-column.

    L_x holds the x advection and the controlled x diffusion with the lagged
    policy. On the boundary rows the curvature closure V_xx = c V_x folds
    the diffusion into an effective advection a + c d, differenced into the
    band with the one-sided two-point stencil, so the system stays
    tridiagonal.
    """
    r, mu, sig, b = rows
    vx, vxx, vyy, vy, vxy = derivs
    nx, ny = v_next.shape
    dx = grid.dx

    l_rest = b * vy + 0.5 * vyy + rho * sig * pi * vxy
    rhs_all = v_next + dt * l_rest

    adv = r * x_col + (mu - r) * pi          # (nx, ny)
    dif = 0.5 * sig ** 2 * pi ** 2           # (nx, ny)
    if edges is None:
        c_lo = np.zeros(ny)
        c_hi = np.zeros(ny)
    else:
        c_lo, c_hi = edges
    a_lo = adv[0] + c_lo * dif[0]            # (ny,)
    a_hi = adv[-1] + c_hi * dif[-1]

    v_prev = np.empty_like(v_next)
    ab = np.zeros((3, nx))
    for j in range(ny):
        a = adv[:, j]
        d = dif[:, j]
        ab[:] = 0.0
        # interior rows: central first and second differences
        ab[0, 2:] = -dt * (a[1:-1] / (2.0 * dx) + d[1:-1] / dx ** 2)     # M[i, i+1]
        ab[1, 1:-1] = 1.0 + dt * 2.0 * d[1:-1] / dx ** 2                 # M[i, i]
        ab[2, 0:-2] = -dt * (-a[1:-1] / (2.0 * dx) + d[1:-1] / dx ** 2)  # M[i, i-1]
        # boundary rows: effective advection differenced into the band
        ab[1, 0] = 1.0 + dt * a_lo[j] / dx
        ab[0, 1] = -dt * a_lo[j] / dx
        ab[1, -1] = 1.0 - dt * a_hi[j] / dx
        ab[2, -2] = dt * a_hi[j] / dx
        v_prev[:, j] = solve_banded((1, 1), ab, rhs_all[:, j])
    return v_prev


@dataclass(frozen=True)
class HjbSolution:
    """Full backward solve: value surface, policy field, per-step diagnostics."""

    surface: ValueSurface
    policy: PolicyField
    diagnostics: list = field(repr=False)
    clipped_total: int = 0
    monotonicity_violations: int = 0


def solve(model: MarketModel, utility: UtilitySpec, grid: GridSpec,
          config: SolverConfig | None = None) -> HjbSolution:
    """Backward sweep from the exact terminal condition V(T, x, y) = u(x)."""
    if config is None:
        config = SolverConfig()
    nt, nx, ny = grid.shape()
    values = np.empty((nt, nx, ny))
    pi_arr = np.empty((nt, nx, ny))
    values[-1] = np.asarray(utility.u(grid.x_nodes), dtype=float)[:, None]

    t_nodes = grid.t_nodes
    diagnostics = []
    clipped_total = 0
    for k in range(nt - 2, -1, -1):
        step = step_backward(values[k + 1], config, model, grid, utility, t_nodes[k + 1])
        values[k] = step.v
        pi_arr[k + 1] = step.pi
        step.diagnostics["step"] = k
        diagnostics.append(step.diagnostics)
        clipped_total += step.diagnostics["clipped_nodes"]
    pi_arr[0], _, _, _, _ = _policy_slice(values[0], model, grid, config, utility, t_nodes[0])

    surface = ValueSurface(grid=grid, values=values, metadata=f"fd:{config.scheme}")
    policy = PolicyField.from_grid(grid, pi_arr, label="fd")
    return HjbSolution(
        surface=surface,
        policy=policy,
        diagnostics=diagnostics,
        clipped_total=clipped_total,
        monotonicity_violations=surface.monotonicity_violations(),
    )


def extract_policy(solution: HjbSolution) -> PolicyField:
    """The grid policy sampled during the sweep, for simulation reuse."""
    return solution.policy
