"""Dilation-parameter derivative identities and their numerical checker.

Write a smooth surface V as V(beta*x, y) with a dilation parameter beta
whose initial value is one. Chain rule in beta then recovers the partial
derivatives of V in x through algebraic identities, and dilating y or t
instead recovers the y and t derivatives. Every identity is local to the
scope that was dilated: a beta-derivative taken while scaling x says
nothing about d/dy, so derivative bundles carry an explicit scope tag and
the formula layer refuses bundles taken in the wrong scope.

Identity catalogue (all at a point with x != 0, y != 0, t > 0):

    EQ1  V_x  = beta * V_beta / x            (x dilation)
    EQ2  V_xx = beta^2 * V_betabeta / x^2    (x dilation)
    EQ3  V_yy = beta^2 * V_betabeta / y^2    (y dilation)
    EQ4  V_y  = beta * V_beta / y            (y dilation)
    EQ5  V_betay = x * V_xy / beta           (x dilation)
    EQ6  V_yy = beta*(beta*y*V_betay - V_beta) / y^2   (y dilation, beta = 1)
    EQ9  V_xy = beta*(V_betabeta + V_beta) / (x*y)     (joint scope)
    VT   V_t  = beta * V_beta / t            (t dilation)

EQ9 is only valid on the consistency class x*V_x = y*V_y (surfaces that
depend on x and y through the product x*y); off that class the two
dilation scopes disagree and the identity fails loudly, which the checker
demonstrates on witness functions.

Ratio-form identities admit a flipped orientation (for EQ2 that would be
V_xx = x^2 * V_betabeta / beta^2). The checker evaluates both and reports
the flipped one as residual_alt; at beta = 1 only the orientation above
matches analytic second derivatives once x != 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import EvaluationError, ScopeMismatchError


class ScalingScope(Enum):
    """Which coordinate the dilation parameter multiplies."""

    X_SCALING = "x"
    Y_SCALING = "y"
    T_SCALING = "t"
    JOINT = "joint"


class Identity(str, Enum):
    EQ1 = "EQ1"
    EQ2 = "EQ2"
    EQ3 = "EQ3"
    EQ4 = "EQ4"
    EQ5 = "EQ5"
    EQ6 = "EQ6"
    EQ9 = "EQ9"
    VT = "VT"


IDENTITY_SCOPE = {
    Identity.EQ1: ScalingScope.X_SCALING,
    Identity.EQ2: ScalingScope.X_SCALING,
    Identity.EQ3: ScalingScope.Y_SCALING,
    Identity.EQ4: ScalingScope.Y_SCALING,
    Identity.EQ5: ScalingScope.X_SCALING,
    Identity.EQ6: ScalingScope.Y_SCALING,
    Identity.EQ9: ScalingScope.JOINT,
    Identity.VT: ScalingScope.T_SCALING,
}

DEFAULT_H = 1e-4
MAX_H = 0.1


@dataclass(frozen=True)
class ShiftPoint:
    """Evaluation point (beta, x, y, t); beta defaults to its initial value 1."""

    x: float
    y: float
    t: float
    beta: float = 1.0

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y), ("t", self.t), ("beta", self.beta)):
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.t > 0.0:
            raise ValueError(
                f"t must be strictly positive (the time rule divides by t), got {self.t}"
            )

    @property
    def g(self) -> float:
        """Dilated wealth coordinate beta*x."""
        return self.beta * self.x

    @property
    def f(self) -> float:
        """Dilated factor coordinate beta*y."""
        return self.beta * self.y


@dataclass(frozen=True)
class BetaDerivatives:
    """First and second dilation derivatives taken in a single scope."""

    v_beta: float
    v_betabeta: float
    scope: ScalingScope

    def __post_init__(self):
        if not (math.isfinite(self.v_beta) and math.isfinite(self.v_betabeta)):
            raise ValueError("beta derivatives must be finite")


def _require_scope(d: BetaDerivatives, wanted: ScalingScope, what: str):
    if d.scope is not wanted:
        raise ScopeMismatchError(
            f"{what} needs derivatives taken in {wanted.name}, got {d.scope.name}"
        )


def _profile(fn, point: ShiftPoint, scope: ScalingScope):
    """The scalar map b -> test function with coordinate b*coordinate."""
    x, y, t = point.x, point.y, point.t
    if scope in (ScalingScope.X_SCALING, ScalingScope.JOINT):
        return lambda b: fn(b * x, y, t)
    if scope is ScalingScope.Y_SCALING:
        return lambda b: fn(x, b * y, t)
    return lambda b: fn(x, y, b * t)


def _scoped_surface(fn, point: ShiftPoint, scope: ScalingScope):
    """The surface with the point's dilation folded into the scoped axis.

    At beta = 1 this is the test function itself; for other beta values the
    direct-side derivatives must be taken on the dilated surface for the
    identities to close.
    """
    b = point.beta
    if scope in (ScalingScope.X_SCALING, ScalingScope.JOINT):
        return lambda x, y, t: fn(b * x, y, t)
    if scope is ScalingScope.Y_SCALING:
        return lambda x, y, t: fn(x, b * y, t)
    return lambda x, y, t: fn(x, y, b * t)


def _check_h(h: float):
    if not 0.0 < h <= MAX_H:
        raise ValueError(f"step h must lie in (0, {MAX_H}], got {h}")


def _finite(*vals):
    if not all(math.isfinite(v) for v in vals):
        raise EvaluationError("test function returned a non-finite value")


def beta_derivative_fd(fn, point: ShiftPoint, scope: ScalingScope, h: float = DEFAULT_H) -> BetaDerivatives:
    """Central finite differences of the dilation profile at the point's beta.

    Steps are absolute. Using steps proportional to the dilated coordinate
    would make the leading truncation error of the beta side cancel the
    direct side's exactly, hiding the second-order convergence the checker
    verifies, so the plain step h is applied on every axis.
    """
    _check_h(h)
    phi = _profile(fn, point, scope)
    b = point.beta
    fp, f0, fm = phi(b + h), phi(b), phi(b - h)
    _finite(fp, f0, fm)
    v_beta = (fp - fm) / (2.0 * h)
    v_betabeta = (fp - 2.0 * f0 + fm) / (h * h)
    return BetaDerivatives(v_beta=v_beta, v_betabeta=v_betabeta, scope=scope)


def beta_cross_derivative_fd(fn, point: ShiftPoint, scope: ScalingScope, h: float = DEFAULT_H) -> float:
    """Mixed derivative d^2/(d beta d y) by a four-point cross stencil."""
    _check_h(h)
    if scope not in (ScalingScope.X_SCALING, ScalingScope.Y_SCALING):
        raise ScopeMismatchError(
            f"beta-y cross derivative is defined for x or y dilation, got {scope.name}"
        )
    x, y, t = point.x, point.y, point.t
    b = point.beta
    if scope is ScalingScope.X_SCALING:
        F = lambda bb, yy: fn(bb * x, yy, t)
    else:
        F = lambda bb, yy: fn(x, bb * yy, t)
    vals = (
        F(b + h, y + h),
        F(b + h, y - h),
        F(b - h, y + h),
        F(b - h, y - h),
    )
    _finite(*vals)
    return (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h * h)


# ---------------------------------------------------------------------------
# formula layer: recover coordinate derivatives from dilation derivatives
# ---------------------------------------------------------------------------

def vx_from_beta(d: BetaDerivatives, point: ShiftPoint) -> float:
    """V_x = beta * V_beta / x."""
    _require_scope(d, ScalingScope.X_SCALING, "vx_from_beta")
    if point.x == 0.0:
        raise ValueError("vx_from_beta divides by x; x = 0 is not allowed")
    return point.beta * d.v_beta / point.x


def vxx_from_beta(d: BetaDerivatives, point: ShiftPoint) -> float:
    """V_xx = beta^2 * V_betabeta / x^2 (the internally consistent orientation)."""
    _require_scope(d, ScalingScope.X_SCALING, "vxx_from_beta")
    if point.x == 0.0:
        raise ValueError("vxx_from_beta divides by x; x = 0 is not allowed")
    return point.beta ** 2 * d.v_betabeta / point.x ** 2


def vy_from_beta(d: BetaDerivatives, point: ShiftPoint) -> float:
    """V_y = beta * V_beta / y."""
    _require_scope(d, ScalingScope.Y_SCALING, "vy_from_beta")
    if point.y == 0.0:
        raise ValueError("vy_from_beta divides by y; y = 0 is not allowed")
    return point.beta * d.v_beta / point.y


def vyy_from_beta(d: BetaDerivatives, point: ShiftPoint) -> float:
    """V_yy = beta^2 * V_betabeta / y^2."""
    _require_scope(d, ScalingScope.Y_SCALING, "vyy_from_beta")
    if point.y == 0.0:
        raise ValueError("vyy_from_beta divides by y; y = 0 is not allowed")
    return point.beta ** 2 * d.v_betabeta / point.y ** 2


def vbetay_from_vxy(v_xy: float, point: ShiftPoint) -> float:
    """V_betay = x * V_xy / beta (x-dilation scope)."""
    return point.x * v_xy / point.beta


def vxy_from_beta(d: BetaDerivatives, point: ShiftPoint) -> float:
    """V_xy = beta * (V_betabeta + V_beta) / (x*y), joint scope only.

    Valid on surfaces satisfying the cross-scope consistency condition
    x*V_x = y*V_y; the caller asserts membership by tagging the bundle
    with the joint scope.
    """
    _require_scope(d, ScalingScope.JOINT, "vxy_from_beta")
    if point.x == 0.0 or point.y == 0.0:
        raise ValueError("vxy_from_beta divides by x*y; axes points are not allowed")
    return point.beta * (d.v_betabeta + d.v_beta) / (point.x * point.y)


def vt_from_beta(d: BetaDerivatives, point: ShiftPoint) -> float:
    """V_t = beta * V_beta / t. ShiftPoint already enforces t > 0."""
    _require_scope(d, ScalingScope.T_SCALING, "vt_from_beta")
    return point.beta * d.v_beta / point.t


# ---------------------------------------------------------------------------
# direct-side finite differences on the scoped surface
# ---------------------------------------------------------------------------

def _dx(g, p, h):
    return (g(p.x + h, p.y, p.t) - g(p.x - h, p.y, p.t)) / (2.0 * h)


def _dxx(g, p, h):
    return (g(p.x + h, p.y, p.t) - 2.0 * g(p.x, p.y, p.t) + g(p.x - h, p.y, p.t)) / (h * h)


def _dy(g, p, h):
    return (g(p.x, p.y + h, p.t) - g(p.x, p.y - h, p.t)) / (2.0 * h)


def _dyy(g, p, h):
    return (g(p.x, p.y + h, p.t) - 2.0 * g(p.x, p.y, p.t) + g(p.x, p.y - h, p.t)) / (h * h)


def _dxdy(g, p, h):
    return (
        g(p.x + h, p.y + h, p.t)
        - g(p.x + h, p.y - h, p.t)
        - g(p.x - h, p.y + h, p.t)
        + g(p.x - h, p.y - h, p.t)
    ) / (4.0 * h * h)


def _dt(g, p, h):
    # keep the backward sample at a positive time
    ht = min(h, 0.5 * p.t)
    return (g(p.x, p.y, p.t + ht) - g(p.x, p.y, p.t - ht)) / (2.0 * ht)


@dataclass(frozen=True)
class IdentityReport:
    """Outcome of one identity check at one point."""

    identity: Identity
    point: ShiftPoint
    scope: ScalingScope
    lhs: float
    rhs: float
    residual: float
    passed: bool
    h: float
    residual_alt: float | None = None

    def to_json_dict(self) -> dict:
        rec = {
            "identity": self.identity.value,
            "point": {
                "beta": self.point.beta,
                "x": self.point.x,
                "y": self.point.y,
                "t": self.point.t,
            },
            "scope": self.scope.name,
            "residual": self.residual,
            "pass": self.passed,
            "h": self.h,
        }
        if self.residual_alt is not None:
            rec["residual_alt"] = self.residual_alt
        return rec


def _residual(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (1.0 + abs(rhs))


def check_identity(fn, point: ShiftPoint, identity: Identity, tolerance: float = 1e-6,
                   h: float = DEFAULT_H) -> IdentityReport:
    """Evaluate both sides of one identity at one point.

    The transform side comes from dilation-parameter finite differences,
    the direct side from (x, y, t) finite differences on the scoped
    surface; the report carries |lhs - rhs| / (1 + |rhs|). For EQ2 and EQ3
    the flipped ratio orientation is evaluated as well and reported in
    residual_alt.
    """
    identity = Identity(identity)
    _check_h(h)
    scope = IDENTITY_SCOPE[identity]
    g = _scoped_surface(fn, point, scope)
    beta, x, y = point.beta, point.x, point.y
    alt = None

    if identity is Identity.EQ1:
        d = beta_derivative_fd(fn, point, scope, h)
        lhs = _dx(g, point, h)
        rhs = vx_from_beta(d, point)
    elif identity is Identity.EQ2:
        d = beta_derivative_fd(fn, point, scope, h)
        lhs = _dxx(g, point, h)
        rhs = vxx_from_beta(d, point)
        alt = _residual(lhs, x ** 2 * d.v_betabeta / beta ** 2)
    elif identity is Identity.EQ3:
        d = beta_derivative_fd(fn, point, scope, h)
        lhs = _dyy(g, point, h)
        rhs = vyy_from_beta(d, point)
        alt = _residual(lhs, y ** 2 * d.v_betabeta / beta ** 2)
    elif identity is Identity.EQ4:
        d = beta_derivative_fd(fn, point, scope, h)
        lhs = _dy(g, point, h)
        rhs = vy_from_beta(d, point)
    elif identity is Identity.EQ5:
        lhs = beta_cross_derivative_fd(fn, point, scope, h)
        rhs = vbetay_from_vxy(_dxdy(g, point, h), point)
    elif identity is Identity.EQ6:
        d = beta_derivative_fd(fn, point, scope, h)
        cross = beta_cross_derivative_fd(fn, point, scope, h)
        if y == 0.0:
            raise ValueError("EQ6 divides by y; y = 0 is not allowed")
        lhs = _dyy(g, point, h)
        rhs = beta * (beta * y * cross - d.v_beta) / y ** 2
    elif identity is Identity.EQ9:
        d = beta_derivative_fd(fn, point, scope, h)
        lhs = _dxdy(g, point, h)
        rhs = vxy_from_beta(d, point)
    else:  # VT
        d = beta_derivative_fd(fn, point, scope, h)
        lhs = _dt(g, point, h)
        rhs = vt_from_beta(d, point)

    _finite(lhs, rhs)
    res = _residual(lhs, rhs)
    return IdentityReport(
        identity=identity,
        point=point,
        scope=scope,
        lhs=lhs,
        rhs=rhs,
        residual=res,
        passed=bool(res < tolerance),
        h=h,
        residual_alt=alt,
    )


# ---------------------------------------------------------------------------
# built-in analytic test suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestSurface:
    """Named smooth test function f(x, y, t) for the identity checker."""

    name: str
    fn: object
    product_form: bool  # True when f depends on (x, y) only through x*y
    time_dependent: bool = False

    def __call__(self, x, y, t):
        return self.fn(x, y, t)


ANALYTIC_SUITE = {
    s.name: s
    for s in (
        TestSurface("sq_x", lambda x, y, t: x * x, product_form=False),
        TestSurface("bilinear", lambda x, y, t: x * y, product_form=True),
        TestSurface("exp_xy", lambda x, y, t: math.exp(x * y), product_form=True),
        TestSurface("x_plus_ysq", lambda x, y, t: x + y * y, product_form=False),
        TestSurface(
            "sincos_xy", lambda x, y, t: math.sin(x) * math.cos(y), product_form=False
        ),
        TestSurface("cos_xy", lambda x, y, t: math.cos(x * y), product_form=True),
        TestSurface("prod_sq", lambda x, y, t: (x * y) ** 2, product_form=True),
        TestSurface("t_sq", lambda x, y, t: t * t, product_form=False, time_dependent=True),
        TestSurface(
            "xsq_t", lambda x, y, t: x * x * t, product_form=False, time_dependent=True
        ),
        TestSurface(
            "exp_xy_tsq",
            lambda x, y, t: math.exp(x * y) * t * t,
            product_form=True,
            time_dependent=True,
        ),
    )
}

# the five suite members every scope-local identity is expected to pass on
CORE_SUITE = ("sq_x", "bilinear", "exp_xy", "x_plus_ysq", "sincos_xy")

# coordinates deliberately avoid 1.0: at |x| = 1 the two orientations of a
# ratio identity coincide and the checker could not tell them apart
_XS = (0.6, 0.9, 1.25, 1.5, 1.8)
_YS = (0.55, 0.8, 1.1, 1.4, 1.7)


def default_check_points(t: float = 0.7, beta: float = 1.0) -> list:
    """5 x 5 lattice of interior points clear of the coordinate axes."""
    return [ShiftPoint(x=x, y=y, t=t, beta=beta) for x in _XS for y in _YS]
