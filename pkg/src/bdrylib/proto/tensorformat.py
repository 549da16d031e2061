"""Module containing the BDRYTEN1 tensor file format."""

import math
import struct
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from bdrylib.errors import FormatError
from bdrylib.logger import logger
from bdrylib.proto.cursor import ByteCursor, pack_f32
from bdrylib.proto.iformat import (
    DFormatHdr,
    EFormatError,
    EFormatId,
    IFileFormat,
)

# only f32 payloads are defined
DTYPE_F32 = 0

###############################################################################
# Class: TensorFormat
###############################################################################


class TensorFormat(IFileFormat[npt.NDArray[np.float32]]):
    """Tensor file codec.

    Layout: magic | u8 dtype | u8 ndim | ndim x u32 dims | f32 data.
    """

    @property
    def magic(self) -> bytes:
        """Get the file magic."""
        return b"BDRYTEN1"

    @property
    def hdr_len(self) -> int:
        """Get the size of a fixed header part."""
        return len(self.magic) + 2

    def hdr_decode(self, data: bytes) -> DFormatHdr:
        """Decode a header from bytes.

        :param data: bytes to decode
        """
        if len(data) < len(self.magic):
            return DFormatHdr(err=EFormatError.TRUNC)
        if data[: len(self.magic)] != self.magic:
            logger.error("invalid tensor magic = %s", data[:8].hex())
            return DFormatHdr(err=EFormatError.MAGIC)
        if len(data) < self.hdr_len:
            return DFormatHdr(err=EFormatError.TRUNC)
        if data[len(self.magic)] != DTYPE_F32:
            return DFormatHdr(err=EFormatError.DTYPE)
        ndim = data[len(self.magic) + 1]
        return DFormatHdr(fid=EFormatId.TENSOR, hlen=self.hdr_len + 4 * ndim)

    def decode(self, data: bytes, **kwargs: Any) -> npt.NDArray[np.float32]:
        """Decode a tensor from bytes.

        :param data: bytes to decode
        """
        hdr = self.hdr_decode(data)
        if hdr.err is EFormatError.DTYPE:
            raise FormatError(hdr.err, len(self.magic), "dtype")
        if hdr.err is not EFormatError.NOERR:
            raise FormatError(hdr.err, 0, "tensor header")

        cur = ByteCursor(data, len(self.magic) + 1)
        ndim = cur.u8("ndim")
        shape = tuple(cur.u32("dim") for _ in range(ndim))
        values = cur.f32(math.prod(shape), "tensor data")
        cur.finish()
        return values.reshape(shape)

    def encode(self, obj: npt.NDArray[np.float32]) -> bytes:
        """Encode a tensor to bytes.

        :param obj: array to encode
        """
        arr = np.asarray(obj)
        assert arr.ndim <= 255
        if not np.all(np.isfinite(arr)):
            raise FormatError(EFormatError.NONFINITE, 0, "refusing to write")
        _bytes = self.magic + struct.pack("<BB", DTYPE_F32, arr.ndim)
        _bytes += struct.pack(f"<{arr.ndim}I", *arr.shape)
        return _bytes + pack_f32(arr)


def load_tensor(path: str | Path) -> npt.NDArray[np.float64]:
    """Load a tensor file as a 64-bit array.

    :param path: file path
    """
    return TensorFormat().decode(Path(path).read_bytes()).astype(np.float64)


def save_tensor(arr: npt.ArrayLike, path: str | Path) -> None:
    """Save an array as a tensor file.

    :param arr: values to save
    :param path: file path
    """
    Path(path).write_bytes(TensorFormat().encode(np.asarray(arr)))
    logger.debug("tensor written to %s", path)
