"""Reduction of the transformed HJB equation to a first-order ODE in beta.

Substituting the dilation identities into the portfolio HJB equation at a
frozen state point (t, x, y) with a frozen portfolio weight pi collapses
the PDE to

    A(beta) * W'(beta) + B(beta) * W(beta) = 0,      W = V_beta,

with

    A(beta) = sigma^2 pi^2 x^2 / (2 beta^2) + beta^2 / (2 y^2)
              + rho sigma pi beta / (x y)
    B(beta) = beta * (1/t + r + (mu - r) pi / x + b / y)
              + rho sigma pi beta / (x y)

The correlation term contributes to both coefficients because the mixed
derivative identity carries both V_betabeta and V_beta. The solution is
the integrating-factor quadrature

    W(beta) = c * exp(-int_1^beta B(s)/A(s) ds),

valid only while A keeps one sign on the integration range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateCurvatureError,
    NonConvergenceError,
    SingularCoefficientError,
)
from .model import MarketModel, UtilitySpec, eval_coefficients

QUAD_TOL = 1e-10
_RESID_QUAD_TOL = 1e-13
_RESID_EPS = 1e-30


@dataclass(frozen=True)
class ReductionParams:
    """State point, portfolio weight, and coefficient values frozen into the ODE."""

    t: float
    x: float
    y: float
    pi: float
    r: float
    mu: float
    sigma: float
    b: float
    rho: float

    def __post_init__(self):
        if not self.t > 0.0:
            raise ValueError(f"t must be positive, got {self.t}")
        if self.x == 0.0 or self.y == 0.0:
            raise ValueError("the reduction divides by x and y; axis points not allowed")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def from_model(cls, model: MarketModel, t: float, x: float, y: float, pi: float):
        c = eval_coefficients(model, y)
        return cls(t=t, x=x, y=y, pi=pi, r=c.r, mu=c.mu, sigma=c.sigma, b=c.b, rho=model.rho)


def reduced_lhs(beta: float, v_beta: float, v_betabeta: float, p: ReductionParams) -> float:
    """Left-hand side of the transformed equation, term by term as displayed.

    Linear in (v_beta, v_betabeta) at fixed beta and parameters.
    """
    excess = p.mu - p.r
    return (
        beta * v_beta / p.t
        + p.r * beta * v_beta
        + excess * p.pi * beta * v_beta / p.x
        + 0.5 * p.sigma ** 2 * p.pi ** 2 * p.x ** 2 * v_betabeta / beta ** 2
        + p.b * beta * v_beta / p.y
        + 0.5 * beta ** 2 * v_betabeta / p.y ** 2
        + p.rho * p.sigma * p.pi * beta * (v_betabeta + v_beta) / (p.x * p.y)
    )


@dataclass(frozen=True)
class ReducedCoefficients:
    """Collected coefficients A (on W') and B (on W) of the beta ODE."""

    params: ReductionParams

    def A(self, beta):
        p = self.params
        beta = np.asarray(beta, dtype=float)
        out = (
            p.sigma ** 2 * p.pi ** 2 * p.x ** 2 / (2.0 * beta ** 2)
            + beta ** 2 / (2.0 * p.y ** 2)
            + p.rho * p.sigma * p.pi * beta / (p.x * p.y)
        )
        return float(out) if out.ndim == 0 else out

    def B(self, beta):
        p = self.params
        beta = np.asarray(beta, dtype=float)
        out = beta * (
            1.0 / p.t + p.r + (p.mu - p.r) * p.pi / p.x + p.b / p.y
        ) + p.rho * p.sigma * p.pi * beta / (p.x * p.y)
        return float(out) if out.ndim == 0 else out


def collect_ode(params: ReductionParams) -> ReducedCoefficients:
    """Group the transformed equation into A(beta) W' + B(beta) W = 0."""
    return ReducedCoefficients(params=params)


def adaptive_simpson(f, a: float, b: float, tol: float = QUAD_TOL, max_depth: int = 50) -> float:
    """Classic adaptive Simpson quadrature with absolute tolerance."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if depth <= 0 or abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    return _simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_rec(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


@dataclass(frozen=True)
class OdeSolution:
    """Quadrature solution W on a beta grid with per-node residuals."""

    betas: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    c: float
    coeffs: ReducedCoefficients

    def w_at(self, beta: float) -> float:
        """Fresh quadrature evaluation of W at an arbitrary beta."""
        ratio = _ratio_fn(self.coeffs)
        return self.c * math.exp(-adaptive_simpson(ratio, 1.0, beta, tol=QUAD_TOL))


def _ratio_fn(coeffs: ReducedCoefficients):
    def ratio(s):
        return coeffs.B(s) / coeffs.A(s)

    return ratio


def _check_sign(coeffs: ReducedCoefficients, lo: float, hi: float, samples: int = 512):
    ss = np.linspace(lo, hi, samples)
    a = coeffs.A(ss)
    if np.all(a > 0.0) or np.all(a < 0.0):
        return
    # locate an adjacent pair bracketing the sign change (or hitting zero)
    sign = np.sign(a)
    flips = np.nonzero(np.diff(sign) != 0)[0]
    if flips.size:
        k = int(flips[0])
        raise SingularCoefficientError((float(ss[k]), float(ss[k + 1])))
    # all one sign but with zeros mixed in
    k = int(np.argmin(np.abs(a)))
    lo_b = float(ss[max(k - 1, 0)])
    hi_b = float(ss[min(k + 1, samples - 1)])
    raise SingularCoefficientError((lo_b, hi_b))


def solve_vbeta(coeffs: ReducedCoefficients, beta_range=(0.5, 2.0), c: float = 1.0,
                n_nodes: int = 65, quad_tol: float = QUAD_TOL) -> OdeSolution:
    """Integrate W(beta) = c * exp(-int_1^beta B/A) on a beta grid.

    The second-order coefficient A is sampled over the (slightly padded)
    range first; a sign change raises SingularCoefficientError with a
    bracketing interval instead of integrating through the singularity.

    Residuals are an independent diagnostic: W' is recomputed from the
    quadrature representation by a fourth-order five-point stencil with
    fresh tightly-toleranced integrals, then
    |A W' + B W| / (|A W'| + |B W| + eps) is reported per node.
    """
    lo, hi = float(beta_range[0]), float(beta_range[1])
    if not lo < hi:
        raise ValueError(f"empty beta range [{lo}, {hi}]")
    if not lo > 0.0:
        raise ValueError(f"beta range must stay positive, got lower edge {lo}")
    if c == 0.0:
        raise ValueError("normalization c must be nonzero")
    # the quadrature runs from 1 to every node, so the sign check must cover
    # the whole traversed range even when 1 sits outside [lo, hi]
    span_lo = min(lo, 1.0)
    span_hi = max(hi, 1.0)
    pad = 2e-3 * max(1.0, span_hi)
    _check_sign(coeffs, max(span_lo - pad, 1e-12), span_hi + pad)

    ratio = _ratio_fn(coeffs)
    nodes = np.linspace(lo, hi, n_nodes)
    anchors = np.unique(np.concatenate([nodes, [1.0]]))
    # cumulative integral of B/A from 1 to each anchor, segment by segment
    i_at = {}
    k1 = int(np.nonzero(anchors == 1.0)[0][0])
    i_at[k1] = 0.0
    for k in range(k1 + 1, anchors.size):
        i_at[k] = i_at[k - 1] + adaptive_simpson(ratio, anchors[k - 1], anchors[k], quad_tol)
    for k in range(k1 - 1, -1, -1):
        i_at[k] = i_at[k + 1] + adaptive_simpson(ratio, anchors[k + 1], anchors[k], quad_tol)

    anchor_integral = np.array([i_at[k] for k in range(anchors.size)])

    def integral_to(bb: float) -> float:
        k = int(np.argmin(np.abs(anchors - bb)))
        return anchor_integral[k] + adaptive_simpson(ratio, anchors[k], bb, _RESID_QUAD_TOL)

    node_idx = np.searchsorted(anchors, nodes)
    w = c * np.exp(-anchor_integral[node_idx])

    residuals = np.empty_like(w)
    for i, bb in enumerate(nodes):
        h = 1e-3 * max(1.0, abs(bb))
        w_vals = [c * math.exp(-integral_to(bb + k * h)) for k in (-2, -1, 1, 2)]
        w_prime = (w_vals[0] - 8.0 * w_vals[1] + 8.0 * w_vals[2] - w_vals[3]) / (12.0 * h)
        aw = coeffs.A(bb) * w_prime
        bw = coeffs.B(bb) * w[i]
        residuals[i] = abs(aw + bw) / (abs(aw) + abs(bw) + _RESID_EPS)

    return OdeSolution(betas=nodes, w=w, residuals=residuals, c=float(c), coeffs=coeffs)


# ---------------------------------------------------------------------------
# portfolio rules at beta = 1
# ---------------------------------------------------------------------------

def _curvature_guard(v_betabeta: float, eps_curv: float):
    if abs(v_betabeta) < eps_curv:
        raise DegenerateCurvatureError(
            f"|v_betabeta| = {abs(v_betabeta):.3g} is below {eps_curv:g}; "
            "the portfolio rules divide by it"
        )


def closed_form_portfolio(v_beta: float, v_betabeta: float, t: float, x: float, y: float,
                          model: MarketModel, eps_curv: float = 1e-12) -> float:
    """Dilation-rule portfolio weight, reproduced exactly as displayed.

    pi = -(mu - r) V_beta / (sigma^2 x^3 V_betabeta)
         - rho sigma (V_betabeta + V_beta) / (sigma x^3 y V_betabeta)

    The t argument documents the frozen evaluation point; the rule itself
    is t-free. Note the hedging term differs from the first-order
    condition root of the beta = 1 equation by a factor of sigma, which
    foc_root_portfolio and the audit report surface side by side.
    """
    if x <= 0.0:
        raise ValueError("the portfolio rule divides by x^3; x must be positive")
    if y == 0.0:
        raise ValueError("the portfolio rule divides by y; y = 0 is not allowed")
    _curvature_guard(v_betabeta, eps_curv)
    c = eval_coefficients(model, y)
    return (
        -(c.mu - c.r) * v_beta / (c.sigma ** 2 * x ** 3 * v_betabeta)
        - model.rho * c.sigma * (v_betabeta + v_beta) / (c.sigma * x ** 3 * y * v_betabeta)
    )


def foc_residual(pi: float, v_beta: float, v_betabeta: float, t: float, x: float, y: float,
                 model: MarketModel) -> float:
    """d/dpi of the beta = 1 reduced equation at the given weight.

    (mu - r) V_beta / x + sigma^2 pi x^2 V_betabeta
        + rho sigma (V_betabeta + V_beta) / (x y)

    Affine in pi with slope sigma^2 x^2 V_betabeta.
    """
    if x == 0.0 or y == 0.0:
        raise ValueError("the first-order condition divides by x and y")
    c = eval_coefficients(model, y)
    return (
        (c.mu - c.r) * v_beta / x
        + c.sigma ** 2 * pi * x ** 2 * v_betabeta
        + model.rho * c.sigma * (v_betabeta + v_beta) / (x * y)
    )


def foc_root_portfolio(v_beta: float, v_betabeta: float, t: float, x: float, y: float,
                       model: MarketModel, eps_curv: float = 1e-12) -> float:
    """Unique zero of foc_residual in pi (requires nonzero curvature)."""
    if x <= 0.0:
        raise ValueError("x must be positive")
    if y == 0.0:
        raise ValueError("y = 0 is not allowed")
    _curvature_guard(v_betabeta, eps_curv)
    c = eval_coefficients(model, y)
    num = (c.mu - c.r) * v_beta / x + model.rho * c.sigma * (v_betabeta + v_beta) / (x * y)
    return -num / (c.sigma ** 2 * x ** 2 * v_betabeta)


PORTFOLIO_VARIANTS = ("closed_form", "foc")


@dataclass(frozen=True)
class FixedPointResult:
    pi: float
    v_beta: float
    v_betabeta: float
    iterations: int
    variant: str


def default_normalization(utility: UtilitySpec, x: float) -> float:
    """c = x * u'(x): the terminal condition V_x = u' combined with the
    first dilation identity at beta = 1 gives V_beta = x V_x."""
    return x * float(utility.du(x))


def solve_portfolio_fixed_point(model: MarketModel, t: float, x: float, y: float,
                                variant: str = "closed_form",
                                c: float | None = None,
                                utility: UtilitySpec | None = None,
                                max_iter: int = 100, rtol: float = 1e-8,
                                eps_curv: float = 1e-12) -> FixedPointResult:
    """Resolve the pi <-> W coupling at one state point.

    The portfolio rule needs (V_beta, V_betabeta) at beta = 1, which the
    quadrature representation gives in closed form: W(1) = c and
    W'(1) = -B(1)/A(1) * c. Iterate rule and ratio until the weight is
    stationary to rtol, starting from the rule evaluated with the
    curvature proxy v_betabeta / v_beta = -1. Convergence is empirical;
    exhausting max_iter raises NonConvergenceError.
    """
    if variant not in PORTFOLIO_VARIANTS:
        raise ValueError(f"unknown portfolio variant {variant!r}")
    if c is None:
        if utility is None:
            raise ValueError("provide either the normalization c or a utility")
        c = default_normalization(utility, x)
    if c == 0.0:
        raise ValueError("normalization c must be nonzero")

    rule = closed_form_portfolio if variant == "closed_form" else foc_root_portfolio
    pi = rule(1.0, -1.0, t, x, y, model, eps_curv=eps_curv)
    base = ReductionParams.from_model(model, t, x, y, pi)
    v_b = v_bb = float("nan")
    for it in range(1, max_iter + 1):
        coeffs = collect_ode(replace(base, pi=pi))
        a1 = coeffs.A(1.0)
        if a1 == 0.0:
            raise SingularCoefficientError((1.0, 1.0), "A(1) vanished during iteration")
        v_b = c
        v_bb = -coeffs.B(1.0) / a1 * c
        pi_new = rule(v_b, v_bb, t, x, y, model, eps_curv=eps_curv)
        if abs(pi_new - pi) <= rtol * max(1.0, abs(pi_new)):
            return FixedPointResult(
                pi=pi_new, v_beta=v_b, v_betabeta=v_bb, iterations=it, variant=variant
            )
        pi = pi_new
    raise NonConvergenceError(
        f"portfolio fixed point did not settle within {max_iter} iterations "
        f"(last weight {pi:.6g})"
    )
