"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of a coefficient or utility."""


class OutOfBoundsError(ValueError):
    """Query point falls outside a grid's bounding box."""


class ScopeMismatchError(ValueError):
    """A derivative bundle was produced under a different scaling scope."""


class EvaluationError(RuntimeError):
    """A test function returned a non-finite value during differencing."""


class StabilityError(RuntimeError):
    """An explicit time step violates the CFL-type stability bound."""

    def __init__(self, cfl: float, limit: float = 1.0):
        self.cfl = cfl
        self.limit = limit
        super().__init__(
            f"explicit step unstable: CFL number {cfl:.6g} exceeds limit {limit:g}"
        )


class SingularCoefficientError(RuntimeError):
    """The second-order ODE coefficient changes sign inside the solve range."""

    def __init__(self, bracket: tuple, message: str | None = None):
        self.bracket = bracket
        if message is None:
            message = (
                "second-order coefficient changes sign in "
                f"[{bracket[0]:.6g}, {bracket[1]:.6g}]; the quadrature "
                "representation is invalid there"
            )
        super().__init__(message)


class DegenerateCurvatureError(RuntimeError):
    """The dilation-parameter second derivative is too close to zero to divide by."""


class NonConvergenceError(RuntimeError):
    """A fixed-point iteration exhausted its iteration budget."""


class ConfigError(ValueError):
    """A run configuration failed validation."""
