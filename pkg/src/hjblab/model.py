"""Market, utility, grid, and surface types shared by every solver.

The market is a single risky asset driven by one Brownian motion plus a
scalar stochastic factor driven by a correlated second Brownian motion.
All coefficient functions (rate, risky drift, risky vol, factor drift)
are functions of the factor level y and come from one of three families:
constant, affine in y with clamping, or a bounded table with linear
interpolation. The factor diffusion is normalized to one.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, OutOfBoundsError

COEFFICIENT_FAMILIES = ("constant", "affine", "table")
UTILITY_FAMILIES = ("exponential", "power", "log")

CoefficientValues = namedtuple("CoefficientValues", ["r", "mu", "sigma", "b"])


def _constant_fn(value: float) -> Callable:
    def fn(y):
        return value + 0.0 * np.asarray(y, dtype=float)

    return fn


def _affine_fn(intercept: float, slope: float, lo: float, hi: float) -> Callable:
    def fn(y):
        yc = np.clip(np.asarray(y, dtype=float), lo, hi)
        return intercept + slope * yc

    return fn


def _table_fn(nodes: np.ndarray, values: np.ndarray) -> Callable:
    # np.interp extends constantly outside the node range, which keeps the
    # coefficient bounded when simulated paths stray past the table.
    def fn(y):
        return np.interp(np.asarray(y, dtype=float), nodes, values)

    return fn


@dataclass(frozen=True)
class MarketModel:
    """Coefficient bundle for the wealth-factor system.

    Attributes
    ----------
    family : str
        One of ``constant``, ``affine``, ``table``.
    r, mu, sigma, b : callable
        Rate, risky drift, risky vol, and factor drift as functions of the
        factor level y. Each accepts scalars or numpy arrays.
    rho : float
        Instantaneous correlation between the asset and factor noises,
        strictly inside (-1, 1).
    sigma_min : float
        Uniform lower bound on sigma(y), strictly positive.
    y_table_range : tuple or None
        For the table family, the covered factor range. eval_coefficients
        raises DomainError for queries outside it; the vectorized callables
        extend constantly instead so path simulation stays defined.
    """

    family: str
    r: Callable = field(repr=False)
    mu: Callable = field(repr=False)
    sigma: Callable = field(repr=False)
    b: Callable = field(repr=False)
    rho: float = 0.0
    sigma_min: float = 1e-8
    y_table_range: tuple | None = None

    def __post_init__(self):
        if self.family not in COEFFICIENT_FAMILIES:
            raise DomainError(f"unknown coefficient family {self.family!r}")
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie strictly inside (-1, 1), got {self.rho}")
        if not self.sigma_min > 0.0:
            raise DomainError(f"sigma_min must be positive, got {self.sigma_min}")

    @classmethod
    def constant(cls, r, mu, sigma, b, rho=0.0, sigma_min=1e-8):
        if sigma < sigma_min:
            raise DomainError(
                f"constant sigma {sigma} is below the floor sigma_min {sigma_min}"
            )
        return cls(
            family="constant",
            r=_constant_fn(r),
            mu=_constant_fn(mu),
            sigma=_constant_fn(sigma),
            b=_constant_fn(b),
            rho=rho,
            sigma_min=sigma_min,
        )

    @classmethod
    def affine(cls, r, mu, sigma, b, clamp, rho=0.0, sigma_min=1e-8):
        """Affine coefficients a + s*y with y clamped to the interval ``clamp``.

        Each of r, mu, sigma, b is an (intercept, slope) pair. Clamping keeps
        every coefficient bounded on the whole real line, and the sigma floor
        is checked at both clamp endpoints (an affine function attains its
        extremes there).
        """
        lo, hi = float(clamp[0]), float(clamp[1])
        if not lo < hi:
            raise DomainError(f"empty clamp interval [{lo}, {hi}]")
        s_lo = sigma[0] + sigma[1] * lo
        s_hi = sigma[0] + sigma[1] * hi
        if min(s_lo, s_hi) < sigma_min:
            raise DomainError(
                f"sigma(y) dips to {min(s_lo, s_hi)} on the clamp interval, "
                f"below sigma_min {sigma_min}"
            )
        return cls(
            family="affine",
            r=_affine_fn(*r, lo, hi),
            mu=_affine_fn(*mu, lo, hi),
            sigma=_affine_fn(*sigma, lo, hi),
            b=_affine_fn(*b, lo, hi),
            rho=rho,
            sigma_min=sigma_min,
        )

    @classmethod
    def table(cls, y_nodes, r, mu, sigma, b, rho=0.0, sigma_min=1e-8):
        nodes = np.asarray(y_nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("table family needs at least two y nodes")
        if not np.all(np.diff(nodes) > 0):
            raise DomainError("table y nodes must be strictly increasing")
        cols = {}
        for name, vals in (("r", r), ("mu", mu), ("sigma", sigma), ("b", b)):
            arr = np.asarray(vals, dtype=float)
            if arr.shape != nodes.shape:
                raise DomainError(
                    f"table column {name} has {arr.size} entries for {nodes.size} nodes"
                )
            cols[name] = arr
        if cols["sigma"].min() < sigma_min:
            raise DomainError(
                f"tabulated sigma dips to {cols['sigma'].min()}, below "
                f"sigma_min {sigma_min}"
            )
        return cls(
            family="table",
            r=_table_fn(nodes, cols["r"]),
            mu=_table_fn(nodes, cols["mu"]),
            sigma=_table_fn(nodes, cols["sigma"]),
            b=_table_fn(nodes, cols["b"]),
            rho=rho,
            sigma_min=sigma_min,
            y_table_range=(float(nodes[0]), float(nodes[-1])),
        )


def eval_coefficients(model: MarketModel, y: float) -> CoefficientValues:
    """Evaluate (r, mu, sigma, b) at a single factor level.

    Raises DomainError if y is not finite, if the model is tabulated and y
    falls outside the table, or if the evaluated sigma dips below the
    model's floor.
    """
    y = float(y)
    if not np.isfinite(y):
        raise DomainError(f"factor level must be finite, got {y}")
    if model.y_table_range is not None:
        lo, hi = model.y_table_range
        if y < lo or y > hi:
            raise DomainError(
                f"factor level {y} outside tabulated range [{lo}, {hi}]"
            )
    vals = CoefficientValues(
        r=float(model.r(y)),
        mu=float(model.mu(y)),
        sigma=float(model.sigma(y)),
        b=float(model.b(y)),
    )
    if vals.sigma < model.sigma_min:
        raise DomainError(
            f"sigma({y}) = {vals.sigma} violates the floor {model.sigma_min}"
        )
    return vals


@dataclass(frozen=True)
class UtilitySpec:
    """Terminal wealth utility: exponential, power, or log family."""

    family: str
    alpha: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.family not in UTILITY_FAMILIES:
            raise DomainError(f"unknown utility family {self.family!r}")
        if self.family == "exponential":
            if self.alpha is None or not self.alpha > 0:
                raise DomainError("exponential utility needs alpha > 0")
        elif self.family == "power":
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise DomainError("power utility needs gamma in (0, 1)")

    @classmethod
    def exponential(cls, alpha: float) -> "UtilitySpec":
        return cls(family="exponential", alpha=float(alpha))

    @classmethod
    def power(cls, gamma: float) -> "UtilitySpec":
        return cls(family="power", gamma=float(gamma))

    @classmethod
    def log(cls) -> "UtilitySpec":
        return cls(family="log")

    @property
    def wealth_domain_min(self) -> float:
        return 0.0 if self.family in ("power", "log") else -np.inf

    def _check_domain(self, x):
        if self.family in ("power", "log") and np.any(np.asarray(x) <= 0.0):
            raise DomainError(f"{self.family} utility requires wealth > 0")

    def u(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        if self.family == "exponential":
            out = -np.exp(-self.alpha * x)
        elif self.family == "power":
            out = x ** self.gamma / self.gamma
        else:
            out = np.log(x)
        return out if out.ndim else float(out)

    def du(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        if self.family == "exponential":
            out = self.alpha * np.exp(-self.alpha * x)
        elif self.family == "power":
            out = x ** (self.gamma - 1.0)
        else:
            out = 1.0 / x
        return out if out.ndim else float(out)

    def d2u(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        if self.family == "exponential":
            out = -self.alpha ** 2 * np.exp(-self.alpha * x)
        elif self.family == "power":
            out = (self.gamma - 1.0) * x ** (self.gamma - 2.0)
        else:
            out = -1.0 / x ** 2
        return out if out.ndim else float(out)


def utility_eval(utility: UtilitySpec, x):
    """Return (u, u', u'') at x. Marginal utility is positive and decreasing
    for every supported family, so u' > 0 and u'' < 0 wherever defined."""
    return utility.u(x), utility.du(x), utility.d2u(x)


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid over (t, x, y).

    nt, nx, ny count grid nodes including both endpoints, so the time axis
    makes nt - 1 backward steps. t0 must be strictly positive (the dilation
    rule for the time derivative divides by t) and x_min must be strictly
    positive for every utility family so that policy formulas dividing by
    powers of x stay evaluable on the whole wealth axis.
    """

    t0: float
    t_end: float
    nt: int
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int

    def __post_init__(self):
        if not self.t0 > 0.0:
            raise DomainError(f"t0 must be > 0, got {self.t0}")
        if not self.t_end > self.t0:
            raise DomainError(f"need t_end > t0, got [{self.t0}, {self.t_end}]")
        if not self.x_min > 0.0:
            raise DomainError(f"x_min must be > 0, got {self.x_min}")
        if not self.x_max > self.x_min:
            raise DomainError("need x_max > x_min")
        if not self.y_max > self.y_min:
            raise DomainError("need y_max > y_min")
        for name, n in (("nt", self.nt), ("nx", self.nx), ("ny", self.ny)):
            if int(n) != n or n < 4:
                raise DomainError(f"{name} must be an integer >= 4, got {n}")

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.t_end, self.nt)

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y_nodes(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / (self.nt - 1)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    def shape(self) -> tuple:
        return (self.nt, self.nx, self.ny)


_SNAP = 1e-12


def _axis_locate(q, lo, delta, n, clamp, span):
    """Map queries to (cell index, fractional offset) on a uniform axis."""
    q = np.asarray(q, dtype=float)
    hi = lo + delta * (n - 1)
    tol = _SNAP * max(span, 1.0)
    below = q < lo - tol
    above = q > hi + tol
    oob = below | above
    if np.any(oob) and not clamp:
        bad = float(np.asarray(q)[oob].flat[0])
        raise OutOfBoundsError(
            f"query {bad:.6g} outside axis range [{lo:.6g}, {hi:.6g}]"
        )
    qc = np.clip(q, lo, hi)
    u = (qc - lo) / delta
    idx = np.clip(np.floor(u).astype(int), 0, n - 2)
    frac = u - idx
    # snap node-coincident queries so grid values are reproduced exactly
    frac = np.where(frac < _SNAP, 0.0, frac)
    frac = np.where(frac > 1.0 - _SNAP, 1.0, frac)
    return idx, frac, oob


def trilinear_interpolate(grid: GridSpec, values: np.ndarray, t, x, y, clamp=False):
    """Trilinear interpolation of a (nt, nx, ny) array on the grid.

    With clamp=False an out-of-box query raises OutOfBoundsError. With
    clamp=True queries are moved to the nearest box face and a boolean
    mask marking the moved ones is returned alongside the values.
    """
    span_t = grid.t_end - grid.t0
    span_x = grid.x_max - grid.x_min
    span_y = grid.y_max - grid.y_min
    it, ft, ot = _axis_locate(t, grid.t0, grid.dt, grid.nt, clamp, span_t)
    ix, fx, ox = _axis_locate(x, grid.x_min, grid.dx, grid.nx, clamp, span_x)
    iy, fy, oy = _axis_locate(y, grid.y_min, grid.dy, grid.ny, clamp, span_y)
    it, ix, iy = np.broadcast_arrays(it, ix, iy)
    ft, fx, fy = np.broadcast_arrays(ft, fx, fy)

    out = np.zeros(it.shape, dtype=float)
    for dt_ in (0, 1):
        wt = np.where(dt_ == 0, 1.0 - ft, ft)
        for dx_ in (0, 1):
            wx = np.where(dx_ == 0, 1.0 - fx, fx)
            for dy_ in (0, 1):
                wy = np.where(dy_ == 0, 1.0 - fy, fy)
                out = out + wt * wx * wy * values[it + dt_, ix + dx_, iy + dy_]
    if clamp:
        moved = np.broadcast_arrays(ot, ox, oy)
        mask = moved[0] | moved[1] | moved[2]
        if out.ndim == 0:
            return float(out), bool(mask)
        return out, mask
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ValueSurface:
    """Value function samples on a GridSpec, shape (nt, nx, ny)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)
    metadata: str = ""

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape():
            raise DomainError(
                f"surface shape {vals.shape} does not match grid {self.grid.shape()}"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("surface contains non-finite values")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def interpolate(self, t, x, y):
        return trilinear_interpolate(self.grid, self.values, t, x, y, clamp=False)

    def monotonicity_violations(self, rtol: float = 1e-8) -> int:
        """Count nodes where the surface decreases in x beyond a relative
        tolerance. More wealth never lowers attainable utility, so a clean
        solve reports zero."""
        scale = float(np.max(np.abs(self.values))) or 1.0
        diffs = np.diff(self.values, axis=1)
        return int(np.sum(diffs < -rtol * scale))


def surface_interpolate(surface: ValueSurface, t, x, y):
    """Interpolate a value surface at (t, x, y); exact at grid nodes."""
    return surface.interpolate(t, x, y)


@dataclass(frozen=True)
class PolicyField:
    """Portfolio weight pi(t, x, y), either closed form or grid sampled."""

    kind: str
    label: str = "policy"
    fn: Callable | None = field(default=None, repr=False)
    grid: GridSpec | None = None
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "closed_form":
            if self.fn is None:
                raise DomainError("closed_form policy needs a callable")
        elif self.kind == "grid":
            if self.grid is None or self.values is None:
                raise DomainError("grid policy needs both a grid and values")
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != self.grid.shape():
                raise DomainError(
                    f"policy shape {vals.shape} does not match grid {self.grid.shape()}"
                )
            if not np.all(np.isfinite(vals)):
                raise DomainError("policy contains non-finite values")
            vals = vals.copy()
            vals.flags.writeable = False
            object.__setattr__(self, "values", vals)
        else:
            raise DomainError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def closed_form(cls, fn: Callable, label: str = "policy") -> "PolicyField":
        return cls(kind="closed_form", label=label, fn=fn)

    @classmethod
    def from_grid(cls, grid: GridSpec, values, label: str = "policy") -> "PolicyField":
        return cls(kind="grid", label=label, grid=grid, values=values)

    def evaluate(self, t, x, y):
        """Strict evaluation; grid policies raise outside their box."""
        if self.kind == "closed_form":
            out = self.fn(t, x, y)
            return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)
        return trilinear_interpolate(self.grid, self.values, t, x, y, clamp=False)

    def evaluate_clamped(self, t, x, y):
        """Evaluation with out-of-box queries moved to the nearest face.

        Returns (values, clamped_mask) so callers can count how often the
        simulation left the sampled box.
        """
        if self.kind == "closed_form":
            out = self.fn(t, x, y)
            if np.ndim(out) == 0:
                return float(out), False
            out = np.asarray(out, dtype=float)
            return out, np.zeros(out.shape, dtype=bool)
        return trilinear_interpolate(self.grid, self.values, t, x, y, clamp=True)


def surface_to_csv(surface: ValueSurface, path) -> None:
    """Write a surface as CSV with header t,x,y,value in row-major order."""
    _grid_csv(surface.grid, surface.values, path)


def policy_to_csv(policy: PolicyField, path) -> None:
    if policy.kind != "grid":
        raise DomainError("only grid policies can be exported as CSV")
    _grid_csv(policy.grid, policy.values, path)


def _grid_csv(grid: GridSpec, values: np.ndarray, path) -> None:
    tt, xx, yy = np.meshgrid(
        grid.t_nodes, grid.x_nodes, grid.y_nodes, indexing="ij"
    )
    table = np.column_stack(
        [tt.ravel(), xx.ravel(), yy.ravel(), np.asarray(values).ravel()]
    )
    np.savetxt(
        path,
        table,
        fmt="%.15g",
        delimiter=",",
        header="t,x,y,value",
        comments="",
    )
