"""Exception types shared across the library.

Every error carries a plain-language message; callers that add context
(scenario name, h, phase) wrap the message rather than the type.
"""
from __future__ import annotations


class SclError(Exception):
    """Base class for all library errors."""


class SpanError(SclError):
    """A vector expected to lie in the rational span of a module does not."""


class ExactnessError(SclError):
    """Exact rational arithmetic was required but is not available."""


class ConvergenceError(SclError):
    """An iterative solve failed to reach its residual tolerance."""


class DomainError(SclError):
    """A point left the validated domain of a coordinate map or pairing."""


class ScaleError(SclError):
    """A state constructor was asked for an invalid or oversized scale."""


class ParameterError(SclError):
    """A constructor parameter is outside its documented range."""


class ToleranceAmbiguity(SclError):
    """Two candidate spectral groups are too close to separate reliably."""


class FlowDomainError(SclError):
    """A symbol flow was applied outside its admissible eta-support."""


class IntegralityError(SclError):
    """A quantity that must be an integer vector missed by too much."""


class FitError(SclError):
    """A regression or extrapolation was requested on too few rows."""


class SchemaError(SclError):
    """An input file does not match the documented schema."""
