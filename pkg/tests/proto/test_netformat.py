import struct

import numpy as np
import pytest  # type: ignore

from bdrylib.errors import FormatError
from bdrylib.net import (
    Conv2dLayer,
    DenseLayer,
    FlattenLayer,
    Network,
    ReluLayer,
    SoftplusLayer,
)
from bdrylib.proto.iformat import EFormatError, EFormatId
from bdrylib.proto.netformat import NetFormat, load_model, save_model


def test_netformat_header():
    fmt = NetFormat()
    assert fmt.magic == b"BDRYNET1"
    assert fmt.hdr_len == 12

    hdr = fmt.hdr_decode(b"BDRYNET1\x01\x00\x00\x00")
    assert hdr.fid is EFormatId.NET
    assert hdr.err is EFormatError.NOERR

    assert fmt.hdr_decode(b"BDRY").err is EFormatError.TRUNC
    assert fmt.hdr_decode(b"BDRYNET2\x00\x00\x00\x00").err is (
        EFormatError.MAGIC
    )
    assert fmt.hdr_decode(b"BDRYNET1\x01").err is EFormatError.TRUNC


def test_netformat_dense_bytes():
    net = Network([DenseLayer([[1.0, 2.0]], [0.5])])
    data = NetFormat().encode(net)
    expect = b"BDRYNET1" + struct.pack("<IBII", 1, 0, 2, 1)
    expect += struct.pack("<3f", 1.0, 2.0, 0.5)
    assert data == expect


def test_netformat_decode(tmp_path, relu_net, conv_net):
    soft = Network(
        [
            FlattenLayer(),
            DenseLayer(np.ones((3, 4)), np.zeros(3)),
            SoftplusLayer(2.5),
            DenseLayer(np.ones((2, 3)), np.zeros(2)),
        ]
    )
    for net in (relu_net, conv_net, soft):
        path = tmp_path / "model.bnet"
        save_model(net, path)
        loaded = load_model(path)
        assert loaded == net
        assert loaded.input_shape == net.input_shape

    assert soft.input_shape == (1, 2, 2)

    # explicit input shape
    data = NetFormat().encode(conv_net)
    assert NetFormat().decode(data, input_shape=(1, 5, 5)) == conv_net


def test_netformat_errors(relu_net):
    fmt = NetFormat()
    data = fmt.encode(relu_net)

    with pytest.raises(FormatError) as exc:
        fmt.decode(b"NOTANET1" + data[8:])
    assert exc.value.err is EFormatError.MAGIC

    # truncated weights
    with pytest.raises(FormatError) as exc:
        fmt.decode(data[:-3])
    assert exc.value.err is EFormatError.TRUNC

    with pytest.raises(FormatError) as exc:
        fmt.decode(data + b"\x00")
    assert exc.value.err is EFormatError.TRAILING
    assert exc.value.offset == len(data)

    # unknown layer kind
    bad = b"BDRYNET1" + struct.pack("<IB", 1, 9)
    with pytest.raises(FormatError) as exc:
        fmt.decode(bad)
    assert exc.value.err is EFormatError.KIND
    assert exc.value.offset == 12

    # no layers
    with pytest.raises(FormatError) as exc:
        fmt.decode(b"BDRYNET1" + struct.pack("<I", 0))
    assert exc.value.err is EFormatError.SHAPE

    # non-finite weight
    nan = b"BDRYNET1" + struct.pack("<IBII", 1, 0, 1, 1)
    nan += struct.pack("<2f", float("inf"), 0.0)
    with pytest.raises(FormatError) as exc:
        fmt.decode(nan)
    assert exc.value.err is EFormatError.NONFINITE
    assert exc.value.offset == 21

    # softplus beta must be positive
    beta = b"BDRYNET1" + struct.pack("<IBf", 1, 2, -1.0)
    with pytest.raises(FormatError) as exc:
        fmt.decode(beta)
    assert exc.value.err is EFormatError.SHAPE


def test_netformat_conv_stride():
    conv = Conv2dLayer(np.ones((1, 1, 2, 2)), np.zeros(1), stride=1)
    net = Network(
        [conv, FlattenLayer(), DenseLayer(np.ones((2, 9)), np.zeros(2))]
    )
    data = bytearray(NetFormat().encode(net))
    # stride field of the convolution header
    struct.pack_into("<I", data, 13 + 16, 0)
    with pytest.raises(FormatError) as exc:
        NetFormat().decode(bytes(data))
    assert exc.value.err is EFormatError.SHAPE

    assert net.input_shape == (1, 4, 4)
    assert ReluLayer().relu_units((2, 3)) == 6
