"""Module containing the bdrylib feed-forward network engine."""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import expit  # type: ignore

from bdrylib import sampler
from bdrylib.errors import BoundaryPointError, InputShapeError

Tensor = npt.NDArray[np.float64]
Weights = npt.NDArray[np.float32]
Shape = tuple[int, ...]

###############################################################################
# Enum: ELayerKind
###############################################################################


class ELayerKind(IntEnum):
    """Layer kinds, values match the model file encoding."""

    DENSE = 0
    RELU = 1
    SOFTPLUS = 2
    CONV2D = 3
    FLATTEN = 4


def _frozen(arr: npt.ArrayLike, dtype: type) -> Any:
    """Return a read-only contiguous copy of an array."""
    out = np.array(arr, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


###############################################################################
# Class: ILayer
###############################################################################


class ILayer(ABC):
    """An abstract class used to represent a network layer.

    All layer methods work on batches: the first axis is the batch axis.
    """

    @property
    @abstractmethod
    def kind(self) -> ELayerKind:
        """Get the layer kind."""

    @abstractmethod
    def output_shape(self, shape: Shape) -> Shape:
        """Get the output shape for a given input shape.

        :param shape: input shape without the batch axis
        """

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the layer.

        :param x: batch of layer inputs
        """

    @abstractmethod
    def backward(self, x: Tensor, grad: Tensor) -> Tensor:
        """Propagate an output gradient to the layer input.

        :param x: batch of layer inputs used in forward
        :param grad: gradient with respect to the layer output
        """

    def params(self) -> tuple[Weights, ...]:
        """Get the layer parameters."""
        return ()

    def param_grads(self, x: Tensor, grad: Tensor) -> tuple[Tensor, ...]:
        """Get the parameter gradients summed over the batch.

        :param x: batch of layer inputs used in forward
        :param grad: gradient with respect to the layer output
        """
        return ()

    def relu_units(self, shape: Shape) -> int:
        """Get the number of ReLU units for a given input shape."""
        return 0

    def same_as(self, other: "ILayer") -> bool:
        """Return True if both layers are bit-identical."""
        if self.kind is not other.kind:
            return False
        if self.hyper() != other.hyper():
            return False
        mine = self.params()
        theirs = other.params()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(mine, theirs)
        )

    def hyper(self) -> tuple[float | int, ...]:
        """Get the layer hyper-parameters."""
        return ()


###############################################################################
# Class: DenseLayer
###############################################################################


class DenseLayer(ILayer):
    """Fully connected layer, y = W x + b."""

    def __init__(self, weight: npt.ArrayLike, bias: npt.ArrayLike) -> None:
        """Initialize a dense layer.

        :param weight: weight matrix with shape (out, in)
        :param bias: bias vector with shape (out,)
        """
        self._weight: Weights = _frozen(weight, np.float32)
        self._bias: Weights = _frozen(bias, np.float32)
        assert self._weight.ndim == 2
        assert self._bias.shape == (self._weight.shape[0],)
        self._w = self._weight.astype(np.float64)
        self._b = self._bias.astype(np.float64)

    @property
    def kind(self) -> ELayerKind:
        """Get the layer kind."""
        return ELayerKind.DENSE

    @property
    def weight(self) -> Weights:
        """Get the weight matrix."""
        return self._weight

    @property
    def bias(self) -> Weights:
        """Get the bias vector."""
        return self._bias

    @property
    def in_features(self) -> int:
        """Get the input size."""
        return int(self._weight.shape[1])

    @property
    def out_features(self) -> int:
        """Get the output size."""
        return int(self._weight.shape[0])

    def output_shape(self, shape: Shape) -> Shape:
        """Get the output shape for a given input shape."""
        if shape != (self.in_features,):
            msg = f"dense expects ({self.in_features},), got {shape}"
            raise InputShapeError(msg)
        return (self.out_features,)

    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the layer."""
        return x @ self._w.T + self._b

    def backward(self, x: Tensor, grad: Tensor) -> Tensor:
        """Propagate an output gradient to the layer input."""
        return grad @ self._w

    def params(self) -> tuple[Weights, ...]:
        """Get the layer parameters."""
        return self._weight, self._bias

    def param_grads(self, x: Tensor, grad: Tensor) -> tuple[Tensor, ...]:
        """Get the parameter gradients summed over the batch."""
        return grad.T @ x, grad.sum(axis=0)


###############################################################################
# Class: Conv2dLayer
###############################################################################


class Conv2dLayer(ILayer):
    """2-D convolution with zero padding and a single dilation."""

    def __init__(
        self,
        weight: npt.ArrayLike,
        bias: npt.ArrayLike,
        stride: int = 1,
        pad: int = 0,
    ) -> None:
        """Initialize a convolution layer.

        :param weight: kernels with shape (out_ch, in_ch, kh, kw)
        :param bias: bias vector with shape (out_ch,)
        :param stride: stride, at least 1
        :param pad: zero padding on every side
        """
        self._weight: Weights = _frozen(weight, np.float32)
        self._bias: Weights = _frozen(bias, np.float32)
        assert self._weight.ndim == 4
        assert self._bias.shape == (self._weight.shape[0],)
        assert stride >= 1
        assert pad >= 0
        self._stride = int(stride)
        self._pad = int(pad)
        self._w = self._weight.astype(np.float64)
        self._b = self._bias.astype(np.float64)

    @property
    def kind(self) -> ELayerKind:
        """Get the layer kind."""
        return ELayerKind.CONV2D

    @property
    def weight(self) -> Weights:
        """Get the kernels."""
        return self._weight

    @property
    def bias(self) -> Weights:
        """Get the bias vector."""
        return self._bias

    @property
    def stride(self) -> int:
        """Get the stride."""
        return self._stride

    @property
    def pad(self) -> int:
        """Get the padding."""
        return self._pad

    @property
    def in_channels(self) -> int:
        """Get the number of input channels."""
        return int(self._weight.shape[1])

    @property
    def out_channels(self) -> int:
        """Get the number of output channels."""
        return int(self._weight.shape[0])

    def hyper(self) -> tuple[float | int, ...]:
        """Get the layer hyper-parameters."""
        return self._stride, self._pad

    def output_shape(self, shape: Shape) -> Shape:
        """Get the output shape for a given input shape."""
        _, _, kh, kw = self._weight.shape
        if len(shape) != 3 or shape[0] != self.in_channels:
            msg = f"conv2d expects ({self.in_channels}, H, W), got {shape}"
            raise InputShapeError(msg)
        hout = (shape[1] + 2 * self._pad - kh) // self._stride + 1
        wout = (shape[2] + 2 * self._pad - kw) // self._stride + 1
        if hout < 1 or wout < 1:
            msg = f"conv2d kernel larger than padded input {shape}"
            raise InputShapeError(msg)
        return (self.out_channels, hout, wout)

    def _windows(self, x: Tensor) -> Tensor:
        """Get strided (N, C, Ho, Wo, kh, kw) windows of a padded input."""
        _, _, kh, kw = self._weight.shape
        p = self._pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(
            xp, (kh, kw), axis=(2, 3)
        )
        return win[:, :, :: self._stride, :: self._stride]  # type: ignore

    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the layer."""
        win = self._windows(x)
        out = np.einsum("nihwkl,oikl->nohw", win, self._w)
        return out + self._b[None, :, None, None]  # type: ignore

    def backward(self, x: Tensor, grad: Tensor) -> Tensor:
        """Propagate an output gradient to the layer input."""
        n, c, h, w = x.shape
        _, _, kh, kw = self._weight.shape
        p, s = self._pad, self._stride
        hout, wout = grad.shape[2], grad.shape[3]

        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=np.float64)
        for ki in range(kh):
            for kj in range(kw):
                rows = slice(ki, ki + s * (hout - 1) + 1, s)
                cols = slice(kj, kj + s * (wout - 1) + 1, s)
                dxp[:, :, rows, cols] += np.einsum(
                    "nohw,oi->nihw", grad, self._w[:, :, ki, kj]
                )

        return dxp[:, :, p : p + h, p : p + w]

    def params(self) -> tuple[Weights, ...]:
        """Get the layer parameters."""
        return self._weight, self._bias

    def param_grads(self, x: Tensor, grad: Tensor) -> tuple[Tensor, ...]:
        """Get the parameter gradients summed over the batch."""
        win = self._windows(x)
        dw = np.einsum("nohw,nihwkl->oikl", grad, win)
        return dw, grad.sum(axis=(0, 2, 3))


###############################################################################
# Class: ReluLayer
###############################################################################


class ReluLayer(ILayer):
    """ReLU activation, the derivative at exactly 0 is 0."""

    @property
    def kind(self) -> ELayerKind:
        """Get the layer kind."""
        return ELayerKind.RELU

    def output_shape(self, shape: Shape) -> Shape:
        """Get the output shape for a given input shape."""
        return shape

    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the layer."""
        return np.maximum(x, 0.0)

    def backward(self, x: Tensor, grad: Tensor) -> Tensor:
        """Propagate an output gradient to the layer input."""
        return grad * (x > 0.0)

    def relu_units(self, shape: Shape) -> int:
        """Get the number of ReLU units for a given input shape."""
        return math.prod(shape)


###############################################################################
# Class: SoftplusLayer
###############################################################################


class SoftplusLayer(ILayer):
    """Softplus activation, y = log(1 + exp(beta x)) / beta."""

    def __init__(self, beta: float) -> None:
        """Initialize a softplus layer.

        :param beta: sharpness, must be positive
        """
        if not beta > 0.0 or not math.isfinite(beta):
            raise ValueError("softplus beta must be a positive float")
        # stored exactly as on disk
        self._beta = float(np.float32(beta))

    @property
    def kind(self) -> ELayerKind:
        """Get the layer kind."""
        return ELayerKind.SOFTPLUS

    @property
    def beta(self) -> float:
        """Get the softplus sharpness."""
        return self._beta

    def hyper(self) -> tuple[float | int, ...]:
        """Get the layer hyper-parameters."""
        return (self._beta,)

    def output_shape(self, shape: Shape) -> Shape:
        """Get the output shape for a given input shape."""
        return shape

    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the layer."""
        return np.logaddexp(0.0, self._beta * x) / self._beta  # type: ignore

    def backward(self, x: Tensor, grad: Tensor) -> Tensor:
        """Propagate an output gradient to the layer input."""
        return grad * expit(self._beta * x)  # type: ignore


###############################################################################
# Class: FlattenLayer
###############################################################################


class FlattenLayer(ILayer):
    """Flatten all non-batch axes in row-major order."""

    @property
    def kind(self) -> ELayerKind:
        """Get the layer kind."""
        return ELayerKind.FLATTEN

    def output_shape(self, shape: Shape) -> Shape:
        """Get the output shape for a given input shape."""
        return (math.prod(shape),)

    def forward(self, x: Tensor) -> Tensor:
        """Evaluate the layer."""
        return x.reshape(x.shape[0], -1)

    def backward(self, x: Tensor, grad: Tensor) -> Tensor:
        """Propagate an output gradient to the layer input."""
        return grad.reshape(x.shape)


###############################################################################
# Class: DActivationPattern
###############################################################################


@dataclass(frozen=True)
class DActivationPattern:
    """ON/OFF status of every ReLU unit, in network order."""

    bits: tuple[bool, ...]

    def __len__(self) -> int:
        """Get the number of ReLU units."""
        return len(self.bits)

    def hamming(self, other: "DActivationPattern") -> int:
        """Get the number of differing units."""
        assert len(self) == len(other)
        return sum(a != b for a, b in zip(self.bits, other.bits))


###############################################################################
# Class: DLinearRegion
###############################################################################


@dataclass(frozen=True)
class DLinearRegion:
    """Affine model of the network inside one activation region."""

    pattern: DActivationPattern
    weights: Tensor
    biases: Tensor

    def evaluate(self, x: npt.ArrayLike) -> Tensor:
        """Evaluate the affine scores at a point.

        :param x: input point
        """
        flat = np.asarray(x, dtype=np.float64).reshape(-1)
        w = self.weights.reshape(self.weights.shape[0], -1)
        return w @ flat + self.biases  # type: ignore


def _infer_input_shape(layers: list[ILayer]) -> Shape:
    """Infer the network input shape from the layer list.

    Dense-first networks take (in,), convolution-first networks take
    square (in_ch, s, s) images and flatten-first networks take square
    single channel (1, s, s) images, s being solved from the first
    dense layer.
    """
    first = layers[0]
    if isinstance(first, DenseLayer):
        return (first.in_features,)

    channels = first.in_channels if isinstance(first, Conv2dLayer) else 1
    for side in range(1, 1025):
        shape: Shape = (channels, side, side)
        try:
            for layer in layers:
                if isinstance(layer, DenseLayer):
                    layer.output_shape(shape)
                    return (channels, side, side)
                shape = layer.output_shape(shape)
        except InputShapeError:
            continue

    msg = "input shape cannot be inferred, pass it explicitly"
    raise InputShapeError(msg)


###############################################################################
# Class: Network
###############################################################################


class Network:
    """A class used to represent an immutable feed-forward network.

    The network computes the pre-softmax scores f(x). Weights are stored as
    32-bit floats, every computation is carried out in 64-bit.
    """

    def __init__(
        self, layers: list[ILayer], input_shape: Shape | None = None
    ) -> None:
        """Initialize a network.

        :param layers: ordered layer list
        :param input_shape: input shape, inferred when not given
        """
        assert len(layers) > 0
        if input_shape is None:
            input_shape = _infer_input_shape(layers)

        shapes = [tuple(int(d) for d in input_shape)]
        units = 0
        for layer in layers:
            units += layer.relu_units(shapes[-1])
            shapes.append(layer.output_shape(shapes[-1]))

        if len(shapes[-1]) != 1 or shapes[-1][0] < 1:
            msg = f"last layer must produce a score vector, got {shapes[-1]}"
            raise InputShapeError(msg)

        self._layers = tuple(layers)
        self._shapes = tuple(shapes)
        self._relu_count = units
        self._initdone = True

    def __setattr__(self, name: str, value: Any) -> None:
        """Make the network read-only."""
        if getattr(self, "_initdone", False):
            msg = name + " proprety is read-only"
            raise TypeError(msg)
        self.__dict__[name] = value

    def __eq__(self, other: object) -> bool:
        """Compare two networks bit-exactly."""
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.input_shape == other.input_shape
            and len(self.layers) == len(other.layers)
            and all(a.same_as(b) for a, b in zip(self.layers, other.layers))
        )

    __hash__ = None  # type: ignore

    def __str__(self) -> str:
        """Get network string represenation."""
        kinds = ", ".join(layer.kind.name.lower() for layer in self._layers)
        return f"Network: ({self.input_shape} -> [{kinds}])"

    @property
    def layers(self) -> tuple[ILayer, ...]:
        """Get the layers."""
        return self._layers

    @property
    def input_shape(self) -> Shape:
        """Get the input shape."""
        return self._shapes[0]

    @property
    def num_classes(self) -> int:
        """Get the number of classes."""
        return self._shapes[-1][0]

    @property
    def relu_count(self) -> int:
        """Get the total number of ReLU units."""
        return self._relu_count

    def _as_input(self, x: npt.ArrayLike) -> Tensor:
        """Validate a single input and add the batch axis."""
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape != self.input_shape:
            msg = f"input shape {arr.shape} != {self.input_shape}"
            raise InputShapeError(msg)
        return arr[None]

    def _as_batch(self, xs: npt.ArrayLike) -> Tensor:
        """Validate a batch of inputs."""
        arr = np.asarray(xs, dtype=np.float64)
        if arr.shape[1:] != self.input_shape:
            msg = f"batch shape {arr.shape} != (N, *{self.input_shape})"
            raise InputShapeError(msg)
        return arr

    def _trace(self, xs: Tensor) -> list[Tensor]:
        """Run forward and keep every layer input plus the output."""
        trace = [xs]
        for layer in self._layers:
            trace.append(layer.forward(trace[-1]))
        return trace

    def forward_batch(self, xs: npt.ArrayLike) -> Tensor:
        """Get the scores for a batch of inputs.

        :param xs: inputs with shape (N, *input_shape)
        """
        return self._trace(self._as_batch(xs))[-1]

    def forward(self, x: npt.ArrayLike) -> Tensor:
        """Get the pre-softmax scores for one input.

        :param x: input with the network input shape
        """
        return self._trace(self._as_input(x))[-1][0]

    def predict_batch(self, xs: npt.ArrayLike) -> npt.NDArray[np.int64]:
        """Get the predicted classes for a batch of inputs.

        Ties are broken by the lowest class index.

        :param xs: inputs with shape (N, *input_shape)
        """
        return np.argmax(self.forward_batch(xs), axis=1)

    def predict(self, x: npt.ArrayLike) -> int:
        """Get the predicted class, ties broken by the lowest index.

        :param x: input with the network input shape
        """
        return int(np.argmax(self.forward(x)))

    def vjp(self, xs: npt.ArrayLike, grad_out: npt.ArrayLike) -> Tensor:
        """Get vector-Jacobian products for a batch of inputs.

        :param xs: inputs with shape (N, *input_shape)
        :param grad_out: score gradients with shape (N, num_classes)
        """
        trace = self._trace(self._as_batch(xs))
        grad = np.asarray(grad_out, dtype=np.float64)
        assert grad.shape == trace[-1].shape
        for i in range(len(self._layers) - 1, -1, -1):
            grad = self._layers[i].backward(trace[i], grad)
        return grad

    def param_grads(
        self, xs: npt.ArrayLike, grad_out: npt.ArrayLike
    ) -> list[tuple[Tensor, ...]]:
        """Get parameter gradients summed over a batch.

        :param xs: inputs with shape (N, *input_shape)
        :param grad_out: score gradients with shape (N, num_classes)
        """
        trace = self._trace(self._as_batch(xs))
        grad = np.asarray(grad_out, dtype=np.float64)
        out: list[tuple[Tensor, ...]] = []
        for i in range(len(self._layers) - 1, -1, -1):
            out.append(self._layers[i].param_grads(trace[i], grad))
            grad = self._layers[i].backward(trace[i], grad)
        out.reverse()
        return out

    def gradients_batch(self, xs: npt.ArrayLike, c: int) -> Tensor:
        """Get the gradients of f_c for a batch of inputs.

        :param xs: inputs with shape (N, *input_shape)
        :param c: class index
        """
        assert 0 <= c < self.num_classes
        arr = self._as_batch(xs)
        onehot = np.zeros((arr.shape[0], self.num_classes))
        onehot[:, c] = 1.0
        return self.vjp(arr, onehot)

    def input_gradient(self, x: npt.ArrayLike, c: int) -> Tensor:
        """Get the exact gradient of f_c with respect to the input.

        :param x: input with the network input shape
        :param c: class index
        """
        return self.gradients_batch(self._as_input(x), c)[0]

    def jacobian(self, x: npt.ArrayLike) -> Tensor:
        """Get the gradients of all class scores at one input.

        :param x: input with the network input shape
        """
        arr = self._as_input(x)
        k = self.num_classes
        rep = np.repeat(arr, k, axis=0)
        return self.vjp(rep, np.eye(k))

    def preactivations_batch(self, xs: npt.ArrayLike) -> Tensor:
        """Get the flattened ReLU pre-activations for a batch of inputs.

        :param xs: inputs with shape (N, *input_shape)
        """
        trace = self._trace(self._as_batch(xs))
        parts = [
            trace[i].reshape(trace[i].shape[0], -1)
            for i, layer in enumerate(self._layers)
            if layer.kind is ELayerKind.RELU
        ]
        if not parts:
            return np.zeros((trace[0].shape[0], 0))
        return np.concatenate(parts, axis=1)

    def activation_patterns_batch(
        self, xs: npt.ArrayLike
    ) -> npt.NDArray[np.bool_]:
        """Get the activation bits for a batch of inputs.

        :param xs: inputs with shape (N, *input_shape)
        """
        return self.preactivations_batch(xs) >= 0.0

    def activation_pattern(self, x: npt.ArrayLike) -> DActivationPattern:
        """Get the activation pattern at one input.

        :param x: input with the network input shape
        """
        bits = self.activation_patterns_batch(self._as_input(x))[0]
        return DActivationPattern(tuple(bool(b) for b in bits))

    def local_linear_model(self, x: npt.ArrayLike) -> DLinearRegion:
        """Get the affine model of the activation region containing x.

        :param x: input with the network input shape
        """
        arr = self._as_input(x)
        pre = self.preactivations_batch(arr)[0]
        if np.any(pre == 0.0):
            msg = "input lies on an activation facet"
            raise BoundaryPointError(msg)

        weights = self.jacobian(arr[0])
        flat = weights.reshape(self.num_classes, -1)
        scores = self.forward(arr[0])
        biases = scores - flat @ arr[0].reshape(-1)
        pattern = DActivationPattern(tuple(bool(b) for b in pre >= 0.0))
        return DLinearRegion(pattern, weights, biases)

    def smoothed_predict(
        self, x: npt.ArrayLike, sigma: float, n: int, seed: int
    ) -> int:
        """Get the randomized smoothing prediction (majority vote).

        :param x: input with the network input shape
        :param sigma: Gaussian noise standard deviation
        :param n: number of noisy copies
        :param seed: sampler seed
        """
        assert sigma >= 0.0
        assert n >= 1
        arr = self._as_input(x)
        noise = sampler.gaussian(seed, (n,) + self.input_shape)
        votes = self.predict_batch(arr + sigma * noise)
        counts = np.bincount(votes, minlength=self.num_classes)
        return int(np.argmax(counts))

    def with_softplus(self, beta: float) -> "Network":
        """Get a copy with every ReLU replaced by softplus-beta.

        :param beta: softplus sharpness
        """
        layers: list[ILayer] = [
            SoftplusLayer(beta) if layer.kind is ELayerKind.RELU else layer
            for layer in self._layers
        ]
        return Network(layers, self.input_shape)
