"""Module containing the bdrylib exceptions."""

from bdrylib.proto.iformat import EFormatError

###############################################################################
# Class: BdryError
###############################################################################


class BdryError(Exception):
    """Base class for all bdrylib errors."""


class InputShapeError(BdryError, ValueError):
    """Input does not match the network input shape."""


class BoundaryPointError(BdryError, ValueError):
    """Point lies on an activation facet (a pre-activation is exactly 0)."""


class SameLabelError(BdryError, ValueError):
    """Both ends of a segment have the same predicted label."""


class NoBoundaryError(BdryError, RuntimeError):
    """No decision boundary available."""


class ScaleError(BdryError, ValueError):
    """Problem size exceeds what a brute-force method supports."""


class UndefinedMetricError(BdryError, ArithmeticError):
    """Metric denominator vanishes."""


class DomainError(BdryError, ValueError):
    """Argument outside of the mathematical domain."""


class TrainingError(BdryError, RuntimeError):
    """Training diverged."""


class PreconditionError(BdryError, ValueError):
    """Operation precondition violated."""


class ConfigError(BdryError, ValueError):
    """Invalid configuration."""


###############################################################################
# Class: FormatError
###############################################################################


class FormatError(BdryError, ValueError):
    """Malformed model or tensor file."""

    def __init__(self, err: EFormatError, offset: int, msg: str = "") -> None:
        """Initialize a format error.

        :param err: error code
        :param offset: byte offset where decoding failed
        :param msg: optional detail
        """
        self.err = err
        self.offset = offset
        text = f"{err.name} at byte offset {offset}"
        if msg:
            text += ": " + msg
        super().__init__(text)
