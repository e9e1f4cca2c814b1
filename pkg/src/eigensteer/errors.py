"""Exception types raised by the library."""


class EigensteerError(Exception):
    """Base class for all library errors."""


class DegenerateCouplingError(EigensteerError):
    """A coupling coefficient <B phi_j, phi_k> vanishes where it must not."""

    def __init__(self, j, k, message=None):
        self.j = j
        self.k = k
        super().__init__(message or f"degenerate coupling: <B phi_{j}, phi_{k}> = 0")


class QuadratureError(EigensteerError):
    """Adaptive quadrature did not reach the requested accuracy."""


class TruncationError(EigensteerError):
    """A series truncation is too short for the requested tail tolerance."""


class SynthesisError(EigensteerError):
    """The moment problem could not be solved to tolerance."""

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class StiffnessError(EigensteerError):
    """The adaptive step size collapsed below the admissible minimum."""


class DivergenceError(EigensteerError):
    """The steering iteration stopped contracting."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class PreconditionError(EigensteerError):
    """An input violates a hypothesis required by the requested operation."""


class DecayPhaseError(EigensteerError):
    """The free-decay phase did not bring the state inside the local basin."""

    def __init__(self, message, log_norm=None):
        self.log_norm = log_norm
        super().__init__(message)


class ConfigError(EigensteerError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ControlDomainError(EigensteerError, ValueError):
    """A control was evaluated outside its time window."""
