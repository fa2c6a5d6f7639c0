"""
Exceptions
==========

Error types raised by the ecla_learner package. Library code raises these;
the command layer catches ``EclaError`` and turns it into a nonzero exit code.

Example usage:
--------------
    from ecla_learner.exceptions import DimensionError

    raise DimensionError("input (4, 3) does not match layer input width 5")

License:
--------
MIT License
"""

from typing import Optional


class EclaError(Exception):
    """Base class for every error raised by ecla_learner."""


class DimensionError(EclaError, ValueError):
    """Raised when array shapes do not line up."""


class ValidationError(EclaError, ValueError):
    """Raised when arguments or configuration values are invalid."""


class StateError(EclaError, RuntimeError):
    """Raised when an object is used out of order (e.g. a stale cache)."""


class IdxParseError(ValidationError):
    """
    Raised when an IDX file cannot be parsed.

    :param message: Description of the problem.
    :param path: File being parsed.
    :param offset: Byte offset at which parsing failed.
    """

    def __init__(self, message: str, path: Optional[str] = None, offset: int = 0):
        self.path = path
        self.offset = offset
        super().__init__(f"{path or '<bytes>'} at offset {offset}: {message}")
