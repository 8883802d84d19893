"""Exception hierarchy.

Every exception carries a short machine-readable ``code`` which the
command-line interface prints verbatim.
"""


class FrechetUQError(ValueError):
    code = "INVALID_ARG"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class DimensionMismatchError(FrechetUQError):
    code = "DATA_SHAPE"


class DegenerateWeightsError(FrechetUQError):
    code = "DEGENERATE_WEIGHTS"


class SingularCovarianceError(FrechetUQError):
    code = "SINGULAR_COV"


class InvalidPointError(FrechetUQError):
    code = "INVALID_POINT"


class InvalidLaplacianError(InvalidPointError):
    code = "INVALID_LAPLACIAN"


class EmptyDataError(FrechetUQError):
    code = "EMPTY_DATA"
