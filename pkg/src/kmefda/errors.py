"""Exception types shared across the package."""


class KmefdaError(ValueError):
    """Base class for every error raised by this package."""


class InvalidArgumentError(KmefdaError):
    """An argument violates a documented precondition."""


class OverParameterizedBasisError(KmefdaError):
    """More basis functions were requested than grid points can support."""


class IllConditionedBasisError(KmefdaError):
    """The basis design is rank deficient or numerically unusable."""


class BasisMismatchError(KmefdaError):
    """Two functional objects do not share a basis system."""


class NotPositiveSemidefiniteError(KmefdaError):
    """A matrix expected to be PSD has a significantly negative eigenvalue."""


class NumericalInconsistencyError(KmefdaError):
    """A quantity that is nonnegative in exact arithmetic came out clearly negative."""


class SingularDesignError(KmefdaError):
    """The regression design matrix is rank deficient."""


class UnderDeterminedError(KmefdaError):
    """Too few samples for the number of regression parameters."""


class InsufficientPermutationsError(KmefdaError):
    """The permutation count is too small for a meaningful p-value."""


class DataFormatError(KmefdaError):
    """A data or config file does not conform to the documented layout."""
