"""Exception types raised across the package."""


class LieMomentumError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LieMomentumError, ValueError):
    """Operands live in groups/algebras of different dimension."""


class AngleAtCut(LieMomentumError, ValueError):
    """A rotation angle sits at (or within tolerance of) pi; log is not unique there."""


class SeriesDivergence(LieMomentumError, ValueError):
    """An operator power series was asked to run outside its radius of convergence."""


class DegenerateSpectrum(LieMomentumError, ValueError):
    """Repeated eigenvalues make the strong-convexity estimate vanish."""


class InvalidPermutation(LieMomentumError, ValueError):
    pass


class ParameterError(LieMomentumError, ValueError):
    """A configuration or scheme parameter violates its invariant.

    ``field`` names the offending parameter so front ends can report it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TailTooShort(LieMomentumError, ValueError):
    """Not enough iterations in the linear-convergence tail to estimate a rate."""


class InsufficientData(LieMomentumError, ValueError):
    """Too few surviving sweep points for a regression fit."""
