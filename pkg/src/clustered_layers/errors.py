"""Exception hierarchy shared by all modules.

Every exception carries an ``exit_code`` so the command line front end can
map failures onto its documented status codes without string matching.
"""

from __future__ import annotations


class LayerError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ValidationError(LayerError):
    """Bad input or configuration."""

    exit_code = 2


class NumericalError(LayerError):
    """A numerical procedure failed to reach its tolerance."""

    exit_code = 3


class ResonanceError(LayerError):
    """A spectral gap condition is violated for the requested epsilon."""

    exit_code = 4

    def __init__(self, message: str, *, nearest=None, margin: float | None = None):
        super().__init__(message)
        self.nearest = nearest
        self.margin = margin


class InvalidExponentError(ValidationError):
    pass


class EllipticityError(ValidationError):
    pass


class TruncationError(NumericalError):
    def __init__(self, message: str, *, suggested_half_width: float | None = None):
        super().__init__(message)
        self.suggested_half_width = suggested_half_width


class DecayFitError(NumericalError):
    pass


class SolvabilityError(NumericalError):
    def __init__(self, message: str, *, projection: float):
        super().__init__(message)
        self.projection = projection


class SpectralError(NumericalError):
    pass


class GeometryError(NumericalError):
    pass


class TubeError(GeometryError):
    pass


class DegenerateGeometryError(GeometryError):
    pass


class NonConvergenceError(NumericalError):
    def __init__(self, message: str, *, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class BranchError(NonConvergenceError):
    pass


class RefinementError(NonConvergenceError):
    pass


class RecursionStallError(NonConvergenceError):
    pass


class LayerOverlapError(ValidationError):
    pass


class ChartError(GeometryError):
    pass
