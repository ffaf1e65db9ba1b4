"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad data, bad
arguments, unsupported combinations) and :class:`NumericalError` (the
input was acceptable but the computation could not produce a usable
answer). The command line maps them to exit codes 2 and 3.
"""


class SpatialError(Exception):
    """Base class for every error raised by this package."""


class InputError(SpatialError, ValueError):
    pass


class NumericalError(SpatialError, ArithmeticError):
    pass


class InvalidInputError(InputError):
    pass


class TooFewObservationsError(InputError):
    pass


class CoincidentPointsError(InputError):
    """Two distinct observations share a location under an inverse-distance transform."""

    def __init__(self, i, j, ids=None):
        self.pair = (i, j)
        if ids is not None:
            label = f"{ids[i]!r} and {ids[j]!r} (rows {i}, {j})"
        else:
            label = f"rows {i} and {j}"
        super().__init__(
            f"coincident points: observations {label} are at distance 0; "
            "inverse-distance weights are undefined"
        )


class ZeroVarianceError(InputError):
    pass


class EmptyWeightsError(InputError):
    pass


class SampleTooSmallError(InputError):
    pass


class InsufficientDrawsError(InputError):
    pass


class CollinearityError(InputError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class InvalidComparisonError(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class BoundarySolutionError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    pass


class IllConditionedInformationError(NumericalError):
    pass
