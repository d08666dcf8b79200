"""Exception hierarchy.

ConfigurationError covers malformed parameters and contract violations that
are detectable before any time stepping (CLI exit code 2).  DomainError covers
runtime failures of the mathematical domain: CFL violations, loss of density
positivity, non-finite fields (CLI exit code 1).
"""


class FrflError(Exception):
    pass


class ConfigurationError(FrflError, ValueError):
    pass


class DomainError(FrflError, RuntimeError):
    pass


class CflViolation(DomainError):
    """Transport step rejected; carries a usable smaller step size."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class DensityPositivityError(DomainError):
    """1 + sigma lost positivity; carries the offending state for a dump."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
