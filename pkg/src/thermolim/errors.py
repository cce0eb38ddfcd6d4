"""Exception hierarchy shared across the package.

Every failure mode that a caller can meaningfully react to gets its own
class; all inherit from :class:`ThermolimError` so the harness can fence
off library failures from programming errors.
"""


class ThermolimError(Exception):
    """Base class for all package-specific errors."""


class DomainError(ThermolimError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class CutoffError(ThermolimError):
    """A Fock-space truncation is too small for the requested state.

    Raised when the tail-mass bound fails: probability has leaked into
    the top of the truncated ladder and the result cannot be trusted.
    """


class CapacityError(ThermolimError):
    """A requested problem size exceeds a configured hard limit."""


class QuadratureError(ThermolimError):
    """A time integral failed to converge to the requested tolerance."""


class IntegrationError(ThermolimError):
    """The exact evolver could not certify its convergence contract.

    Carries a ``diagnostics`` dict (steps, Krylov order, observed
    deviation) to make refinement failures debuggable.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ValidationError(ThermolimError):
    """A scenario config is malformed; the message names the bad field."""


class ConvergenceError(ThermolimError):
    """An averaging or fitting loop exhausted its refinement budget."""
