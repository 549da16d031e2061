import struct

import numpy as np
import pytest  # type: ignore

from bdrylib.errors import FormatError
from bdrylib.proto.cursor import ByteCursor, pack_f32
from bdrylib.proto.iformat import EFormatError


def test_cursor_read():
    data = b"\x07" + struct.pack("<I", 3) + pack_f32([1.5, -2.0])
    cur = ByteCursor(data)
    assert cur.remaining == 13
    assert cur.u8("kind") == 7
    assert cur.u32("count") == 3
    assert cur.offset == 5
    values = cur.f32(2, "values")
    assert values.dtype == np.float32
    assert values.tolist() == [1.5, -2.0]
    cur.finish()


def test_cursor_truncated():
    cur = ByteCursor(b"\x01\x02", offset=1)
    with pytest.raises(FormatError) as exc:
        cur.u32("count")
    assert exc.value.err is EFormatError.TRUNC
    assert exc.value.offset == 1
    assert "TRUNC at byte offset 1" in str(exc.value)


def test_cursor_nonfinite():
    data = pack_f32([0.0, 1.0]) + struct.pack("<f", float("nan"))
    cur = ByteCursor(data)
    with pytest.raises(FormatError) as exc:
        cur.f32(3, "weights")
    assert exc.value.err is EFormatError.NONFINITE
    assert exc.value.offset == 8


def test_cursor_trailing():
    cur = ByteCursor(b"\x00\x00")
    cur.u8("a")
    with pytest.raises(FormatError) as exc:
        cur.finish()
    assert exc.value.err is EFormatError.TRAILING
    assert exc.value.offset == 1
