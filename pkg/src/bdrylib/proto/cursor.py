"""Module containing the little-endian byte cursor used by the decoders."""

import struct

import numpy as np
import numpy.typing as npt

from bdrylib.errors import FormatError
from bdrylib.logger import logger
from bdrylib.proto.iformat import EFormatError

###############################################################################
# Class: ByteCursor
###############################################################################


class ByteCursor:
    """Sequential reader that reports the byte offset of every failure."""

    def __init__(self, data: bytes, offset: int = 0) -> None:
        """Initialize a cursor.

        :param data: bytes to decode
        :param offset: start offset
        """
        self._data = data
        self._offset = offset

    @property
    def offset(self) -> int:
        """Get the current offset."""
        return self._offset

    @property
    def remaining(self) -> int:
        """Get the number of unread bytes."""
        return len(self._data) - self._offset

    def _take(self, size: int, what: str) -> bytes:
        if self.remaining < size:
            logger.error("truncated %s at offset %d", what, self._offset)
            raise FormatError(
                EFormatError.TRUNC,
                self._offset,
                f"need {size} bytes for {what}, have {self.remaining}",
            )
        chunk = self._data[self._offset : self._offset + size]
        self._offset += size
        return chunk

    def u8(self, what: str) -> int:
        """Read an unsigned byte."""
        return int(self._take(1, what)[0])

    def u32(self, what: str) -> int:
        """Read a little-endian u32."""
        return int(struct.unpack("<I", self._take(4, what))[0])

    def f32(self, count: int, what: str) -> npt.NDArray[np.float32]:
        """Read finite little-endian f32 values.

        :param count: number of values
        :param what: field name used in error messages
        """
        start = self._offset
        raw = self._take(4 * count, what)
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size > 0:
            offset = start + 4 * int(bad[0])
            logger.error("non-finite %s at offset %d", what, offset)
            raise FormatError(EFormatError.NONFINITE, offset, what)
        return arr

    def finish(self) -> None:
        """Check that every byte was consumed."""
        if self.remaining != 0:
            raise FormatError(
                EFormatError.TRAILING,
                self._offset,
                f"{self.remaining} unexpected trailing bytes",
            )


def pack_f32(arr: npt.ArrayLike) -> bytes:
    """Encode values as little-endian f32, row-major."""
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()
