"""Exception hierarchy. The CLI maps these onto its exit codes."""


class StochregError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(StochregError, ValueError):
    """Matrix shapes do not fit together."""


class AssumptionError(StochregError):
    """A solvability assumption (stabilizability, non-resonance, ...) fails."""


class SynthesisError(StochregError):
    """A design stage could not produce a valid result."""


class InfeasibleError(StochregError):
    """The LMI has no (strictly) feasible point.

    Attributes
    ----------
    violation : float
        Best top eigenvalue of the LMI block reached by the solver. Positive
        values quantify how far the problem is from feasibility.
    """

    def __init__(self, message, violation=float("nan")):
        super().__init__(message)
        self.violation = violation


class NumericalBreakdown(StochregError):
    """The solver failed for numerical reasons (distinct from infeasibility)."""


class ConfigError(StochregError):
    """Malformed configuration or regulator file."""
