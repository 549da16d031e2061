"""Module containing common bdrylib file format definitions."""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Generic, TypeVar

###############################################################################
# Enum: EFormatId
###############################################################################


class EFormatId(IntEnum):
    """bdrylib file kinds."""

    UNDEF = 0
    NET = 1
    TENSOR = 2


###############################################################################
# Enum: EFormatError
###############################################################################


class EFormatError(IntEnum):
    """bdrylib file format errors."""

    NOERR = 0
    MAGIC = 1
    TRUNC = 2
    NONFINITE = 3
    KIND = 4
    DTYPE = 5
    SHAPE = 6
    TRAILING = 7


###############################################################################
# Class: DFormatHdr
###############################################################################


@dataclass
class DFormatHdr:
    """bdrylib file header data."""

    fid: EFormatId = EFormatId.UNDEF
    hlen: int = 0
    err: EFormatError = EFormatError.NOERR


T = TypeVar("T")

###############################################################################
# Class: IFileFormat
###############################################################################


class IFileFormat(ABC, Generic[T]):
    """The bdrylib file format interface."""

    @property
    @abstractmethod
    def magic(self) -> bytes:
        """Get the file magic."""

    @property
    @abstractmethod
    def hdr_len(self) -> int:
        """Get the size of a header."""

    @abstractmethod
    def hdr_decode(self, data: bytes) -> DFormatHdr:
        """Decode a header from bytes.

        :param data: bytes to decode
        """

    @abstractmethod
    def decode(self, data: bytes, **kwargs: Any) -> T:
        """Decode an object from bytes.

        :param data: bytes to decode
        """

    @abstractmethod
    def encode(self, obj: T) -> bytes:
        """Encode an object to bytes.

        :param obj: object to encode
        """
