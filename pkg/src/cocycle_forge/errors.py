"""Exception types shared across the package."""

from __future__ import annotations


class CocycleForgeError(Exception):
    """Base class for all package errors."""


class DomainError(CocycleForgeError):
    """An argument is outside the documented domain (bad t, odd dimension, ...)."""


class ParseError(CocycleForgeError):
    """Input file violates the interchange schema or a cocycle invariant."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class PreconditionError(CocycleForgeError):
    """A documented precondition of an operation does not hold."""


class NotHyperbolic(PreconditionError):
    """The period map has an eigenvalue too close to the unit circle."""


class SpectrumNotSimple(PreconditionError):
    """Eigenvalues of the period map coincide within tolerance."""


class SpectrumNotReal(PreconditionError):
    """The period map has non-real eigenvalues where real ones are required."""


class DegenerateFrameError(CocycleForgeError):
    """A frame is too ill-conditioned to be used as a change of basis."""


class EigenSolverError(CocycleForgeError):
    """The eigenvalue solver failed to converge; message carries the matrix."""


class HeadroomExceeded(CocycleForgeError):
    """The construction cannot finish within the requested perturbation size.

    Carries partial diagnostics: what was achieved and what was needed.
    """

    def __init__(self, message: str, *, needed: float | None = None,
                 available: float | None = None, achieved: float | None = None):
        super().__init__(message)
        self.needed = needed
        self.available = available
        self.achieved = achieved


class PeriodTooShort(CocycleForgeError):
    """The period is too short for the per-index budget to absorb the move."""


class NoBreakFound(CocycleForgeError):
    """No non-dominated scalar pair / domination break exists in the scan range."""


class StrategyFailed(CocycleForgeError):
    """An injected exponent-mixing strategy failed; message carries the stage trace."""


class CertificateError(CocycleForgeError):
    """A domination scan could neither certify nor refute within its range."""


class GenerationError(CocycleForgeError):
    """Random ensemble generation exhausted its rejection budget."""
