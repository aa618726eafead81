"""Exception taxonomy.

Contract violations (bad arguments, malformed inputs) raise plain ValueError.
Numerical failures raise a NumericalError subclass carrying the pipeline
stage and whatever diagnostics were available at the point of failure, so
callers can retry with different settings instead of parsing strings.
"""

from __future__ import annotations

__all__ = [
    "NumericalError",
    "PoleError",
    "IncompleteRootsError",
    "DegenerateRamificationError",
    "DomainViolationError",
    "LiftFailureError",
    "NoContourError",
    "NoisyContourError",
    "InvalidMomentsError",
    "ForwardSolverError",
    "BaselineFailureError",
]


class NumericalError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""

    def __init__(self, message, *, stage=None, diagnostics=None):
        super().__init__(message)
        self.stage = stage
        self.diagnostics = dict(diagnostics or {})


class PoleError(NumericalError):
    """Evaluation requested at (or too close to) a pole of a transform."""


class IncompleteRootsError(NumericalError):
    """Root finder could not certify the full set of critical points."""


class DegenerateRamificationError(NumericalError):
    """A branch point sits on (or hugs) the real axis; no slit domain exists."""


class DomainViolationError(NumericalError):
    """A lift path leaves the slit domain."""


class LiftFailureError(NumericalError):
    """Path lifting stalled: step size underflowed before reaching the target."""

    def __init__(self, message, *, state=None, stage=None, diagnostics=None):
        super().__init__(message, stage=stage, diagnostics=diagnostics)
        self.state = state


class NoContourError(NumericalError):
    """No admissible integration contour exists for the given constraints."""


class NoisyContourError(NumericalError):
    """Contour moments carry an imaginary residue above tolerance."""


class InvalidMomentsError(NumericalError):
    """Moment sequence is not realizable by a positive measure."""


class ForwardSolverError(NumericalError):
    """Fixed-point solver for the forward spectral equation did not converge."""


class BaselineFailureError(NumericalError):
    """Subordination baseline failed to converge on too many grid points."""
