"""Exception hierarchy for mldict.

Every error raised on purpose by the library derives from :class:`MLDError`.
The ``exit_code`` attribute is what the command line maps the error to.
"""


class MLDError(Exception):
    """Base class for all library errors."""

    exit_code = 4


class DataError(MLDError, ValueError):
    """Invalid or unusable input data."""

    exit_code = 3


class NumericalError(MLDError, ArithmeticError):
    """A numerical routine could not produce a valid result."""

    exit_code = 4


class ZeroMatrix(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class DegenerateGraph(NumericalError):
    pass


class DimensionMismatch(DataError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class SizeMismatch(DimensionMismatch):
    pass


class DictMismatch(DimensionMismatch):
    pass


class NonUnitAtom(DataError):
    pass


class TooFewSamples(DataError):
    pass


class ZeroData(DataError):
    pass


class EmptySamples(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class EmptyCodes(DataError):
    pass


class EmptyTrainSet(DataError):
    pass


class InvalidK(DataError):
    pass


class InvalidVariance(DataError):
    pass


class SubsetTooLarge(DataError):
    pass


class ImageTooSmall(DataError):
    pass


class IncompleteTiling(DataError):
    pass


class FormatError(DataError):
    """A file does not follow the expected binary or text layout."""
