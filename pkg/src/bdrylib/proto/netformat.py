"""Module containing the BDRYNET1 model file format."""

import struct
from pathlib import Path
from typing import Any

from bdrylib.errors import FormatError
from bdrylib.logger import logger
from bdrylib.net import (
    Conv2dLayer,
    DenseLayer,
    ELayerKind,
    FlattenLayer,
    ILayer,
    Network,
    ReluLayer,
    SoftplusLayer,
)
from bdrylib.proto.cursor import ByteCursor, pack_f32
from bdrylib.proto.iformat import (
    DFormatHdr,
    EFormatError,
    EFormatId,
    IFileFormat,
)

###############################################################################
# Class: NetFormat
###############################################################################


class NetFormat(IFileFormat[Network]):
    """Model file codec.

    Layout: magic | u32 layer count | per layer u8 kind and the layer
    payload. Everything is little-endian.
    """

    @property
    def magic(self) -> bytes:
        """Get the file magic."""
        return b"BDRYNET1"

    @property
    def hdr_len(self) -> int:
        """Get the size of a header."""
        return len(self.magic) + 4

    def hdr_decode(self, data: bytes) -> DFormatHdr:
        """Decode a header from bytes.

        :param data: bytes to decode
        """
        if len(data) < len(self.magic):
            return DFormatHdr(err=EFormatError.TRUNC)
        if data[: len(self.magic)] != self.magic:
            logger.error("invalid model magic = %s", data[:8].hex())
            return DFormatHdr(err=EFormatError.MAGIC)
        if len(data) < self.hdr_len:
            return DFormatHdr(err=EFormatError.TRUNC)
        return DFormatHdr(fid=EFormatId.NET, hlen=self.hdr_len)

    def _layer_decode(self, cur: ByteCursor) -> ILayer:
        start = cur.offset
        kind = cur.u8("layer kind")
        try:
            lkind = ELayerKind(kind)
        except ValueError:
            logger.error("unknown layer kind = %d", kind)
            raise FormatError(EFormatError.KIND, start, str(kind)) from None

        if lkind is ELayerKind.DENSE:
            fin = cur.u32("dense in")
            fout = cur.u32("dense out")
            weight = cur.f32(fin * fout, "dense weights")
            bias = cur.f32(fout, "dense biases")
            return DenseLayer(weight.reshape(fout, fin), bias)

        if lkind is ELayerKind.CONV2D:
            in_ch, out_ch, kh, kw, stride, pad = (
                cur.u32(name)
                for name in ("in_ch", "out_ch", "kh", "kw", "stride", "pad")
            )
            if stride < 1:
                raise FormatError(EFormatError.SHAPE, start, "stride 0")
            weight = cur.f32(out_ch * in_ch * kh * kw, "conv2d weights")
            bias = cur.f32(out_ch, "conv2d biases")
            return Conv2dLayer(
                weight.reshape(out_ch, in_ch, kh, kw), bias, stride, pad
            )

        if lkind is ELayerKind.SOFTPLUS:
            offset = cur.offset
            beta = float(cur.f32(1, "softplus beta")[0])
            if beta <= 0.0:
                raise FormatError(EFormatError.SHAPE, offset, "beta <= 0")
            return SoftplusLayer(beta)

        if lkind is ELayerKind.RELU:
            return ReluLayer()

        return FlattenLayer()

    def decode(self, data: bytes, **kwargs: Any) -> Network:
        """Decode a network from bytes.

        :param data: bytes to decode
        :param input_shape: optional explicit input shape
        """
        hdr = self.hdr_decode(data)
        if hdr.err is not EFormatError.NOERR:
            raise FormatError(hdr.err, 0, "model header")

        cur = ByteCursor(data, len(self.magic))
        count = cur.u32("layer count")
        if count == 0:
            raise FormatError(EFormatError.SHAPE, len(self.magic), "empty")

        layers = [self._layer_decode(cur) for _ in range(count)]
        cur.finish()
        return Network(layers, kwargs.get("input_shape"))

    def _layer_encode(self, layer: ILayer) -> bytes:
        _bytes = struct.pack("<B", layer.kind.value)
        if isinstance(layer, DenseLayer):
            _bytes += struct.pack("<II", layer.in_features, layer.out_features)
            _bytes += pack_f32(layer.weight) + pack_f32(layer.bias)
        elif isinstance(layer, Conv2dLayer):
            _, _, kh, kw = layer.weight.shape
            _bytes += struct.pack(
                "<6I",
                layer.in_channels,
                layer.out_channels,
                kh,
                kw,
                layer.stride,
                layer.pad,
            )
            _bytes += pack_f32(layer.weight) + pack_f32(layer.bias)
        elif isinstance(layer, SoftplusLayer):
            _bytes += pack_f32([layer.beta])
        return _bytes

    def encode(self, obj: Network) -> bytes:
        """Encode a network to bytes.

        :param obj: network to encode
        """
        _bytes = self.magic + struct.pack("<I", len(obj.layers))
        for layer in obj.layers:
            _bytes += self._layer_encode(layer)
        return _bytes


def load_model(path: str | Path) -> Network:
    """Load a network from a model file.

    :param path: file path
    """
    net = NetFormat().decode(Path(path).read_bytes())
    logger.info("loaded %s from %s", net, path)
    return net


def save_model(net: Network, path: str | Path) -> None:
    """Save a network to a model file.

    :param net: network to save
    :param path: file path
    """
    Path(path).write_bytes(NetFormat().encode(net))
    logger.info("model written to %s", path)
