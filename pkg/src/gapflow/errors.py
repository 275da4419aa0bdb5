"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: validation errors -> 2, solver
failures -> 3, certificate violations -> 4.
"""


class GapflowError(Exception):
    """Base class for all package errors."""


class ValidationError(GapflowError):
    """Invalid parameters, state, or scenario input."""


class UnitError(ValidationError):
    """Unknown or dimensionally wrong unit in a quantity string."""


class InfeasibleEquilibriumError(ValidationError):
    """Inflow incompatible with a congested uniform equilibrium."""


class NoControlAuthorityError(ValidationError):
    """Feedback requested with zero ACC penetration (c3 = 0)."""


class SolverError(GapflowError):
    """Base class for time-integration failures."""

    def __init__(self, message, step=None, cell=None):
        super().__init__(message)
        self.step = step
        self.cell = cell


class CFLError(SolverError):
    """Explicit step would exceed the configured CFL bound."""


class RegionExitError(SolverError):
    """State left the admissible congested region in some cell."""


class BoundaryError(SolverError):
    """Boundary closure failed (e.g. non-positive extrapolated speed)."""


class AnalysisError(GapflowError):
    """An analysis routine could not complete (e.g. root not bracketed)."""


class CertificateError(GapflowError):
    """An analysis certificate did not hold."""
