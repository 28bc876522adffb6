"""Exception types shared across the package."""

__all__ = [
    "ParameterDomainError",
    "NumericalFailure",
    "ProxNonConvergence",
    "InsufficientDecayError",
    "ManifestError",
]


class ParameterDomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class NumericalFailure(RuntimeError):
    """A numerical routine produced an unusable result.

    Raised for singular factorisations, lost invariants (stationarity
    residuals, contraction bounds) and non-finite intermediate values.
    """


class ProxNonConvergence(NumericalFailure):
    """The iterative prox solve exhausted its budget.

    Carries the Euclidean norm of the final fixed-point residual in
    :attr:`residual`.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = float(residual)


class InsufficientDecayError(ValueError):
    """Too few trajectory points above the fit floor to estimate a rate."""


class ManifestError(ValueError):
    """A grid manifest file is missing required keys or malformed."""
