"""Module containing toy network training, standard and adversarial."""

import math
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import logsumexp, softmax  # type: ignore

from bdrylib import sampler
from bdrylib.attack.iattack import ENorm
from bdrylib.attack.pgd import pgd_perturb
from bdrylib.errors import PreconditionError, TrainingError
from bdrylib.logger import logger
from bdrylib.net import (
    Conv2dLayer,
    DenseLayer,
    ELayerKind,
    FlattenLayer,
    ILayer,
    Network,
    ReluLayer,
)

if TYPE_CHECKING:
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Tensor

ARCHS = ("linear", "onelayer", "mlp16", "conv8")

BATCH_SIZE = 32
MOMENTUM = 0.9
# PGD iterations of the inner maximization
ROBUST_STEPS = 10


def _he(seed: int, shape: tuple[int, ...], fan_in: int) -> "Tensor":
    return sampler.gaussian(seed, shape) * math.sqrt(2.0 / fan_in)


def init_network(
    arch: str,
    input_shape: tuple[int, ...],
    num_classes: int,
    seed: int,
) -> Network:
    """Get a seeded He-initialized network from the architecture menu.

    linear is a single dense layer, onelayer has one hidden ReLU layer of 16
    units, mlp16 two of them, conv8 one 3x3 convolution with 8 channels.
    The output weights have zero mean over the classes.

    :param arch: one of ARCHS
    :param input_shape: input shape
    :param num_classes: number of classes
    :param seed: initialization seed
    """
    dim = math.prod(input_shape)
    layers: list[ILayer] = []
    if len(input_shape) > 1 and arch != "conv8":
        layers.append(FlattenLayer())

    def dense(n_in: int, n_out: int, output: bool = False) -> DenseLayer:
        w = _he(sampler.derive_seed(seed, len(layers)), (n_out, n_in), n_in)
        if output:
            # cross-entropy updates sum to zero over classes, a centered
            # output layer stays centered and the scores share no component
            w -= w.mean(axis=0, keepdims=True)
        return DenseLayer(w, np.zeros(n_out))

    if arch == "linear":
        layers.append(dense(dim, num_classes, output=True))
    elif arch == "onelayer":
        layers += [dense(dim, 16), ReluLayer()]
        layers.append(dense(16, num_classes, output=True))
    elif arch == "mlp16":
        layers += [dense(dim, 16), ReluLayer()]
        layers += [dense(16, 16), ReluLayer()]
        layers.append(dense(16, num_classes, output=True))
    elif arch == "conv8":
        if len(input_shape) != 3:
            raise PreconditionError("conv8 needs (C, H, W) inputs")
        ch = input_shape[0]
        k = _he(sampler.derive_seed(seed, 0), (8, ch, 3, 3), 9 * ch)
        layers += [Conv2dLayer(k, np.zeros(8), 1, 1), ReluLayer()]
        layers.append(FlattenLayer())
        layers.append(dense(8 * dim // ch, num_classes, output=True))
    else:
        raise PreconditionError(f"unknown architecture '{arch}', use {ARCHS}")

    return Network(layers, input_shape)


def _rebuild(net: Network, params: list[list["Tensor"]]) -> Network:
    layers: list[ILayer] = []
    for layer, p in zip(net.layers, params):
        if layer.kind is ELayerKind.DENSE:
            layers.append(DenseLayer(p[0], p[1]))
        elif isinstance(layer, Conv2dLayer):
            layers.append(Conv2dLayer(p[0], p[1], layer.stride, layer.pad))
        else:
            layers.append(layer)
    return Network(layers, net.input_shape)


def accuracy(net: Network, xs: "Tensor", labels: "Tensor") -> float:
    """Get the fraction of correctly predicted inputs.

    :param net: network
    :param xs: inputs
    :param labels: true labels
    """
    if len(labels) == 0:
        return 0.0
    return float(np.mean(net.predict_batch(xs) == labels))


def train_toy(
    dataset: "ToyDataset",
    arch: str,
    epochs: int,
    lr: float,
    robust_eps: float | None = None,
    norm: ENorm = ENorm.L2,
    seed: int = 0,
) -> Network:
    """Train a toy network with momentum SGD on cross-entropy.

    With robust_eps every batch is replaced by its PGD counterpart.

    :param dataset: training data
    :param arch: one of ARCHS
    :param epochs: passes over the data
    :param lr: learning rate
    :param robust_eps: adversarial training radius
    :param norm: adversarial training norm
    :param seed: initialization and shuffling seed
    """
    if epochs < 0 or lr <= 0.0:
        raise PreconditionError("need epochs >= 0 and lr > 0")
    net = init_network(
        arch, dataset.input_shape, dataset.num_classes, seed
    )
    params = [
        [p.astype(np.float64) for p in layer.params()] for layer in net.layers
    ]
    velocity = [[np.zeros_like(p) for p in layer] for layer in params]

    n = len(dataset)
    clip = dataset.domain.clip
    for epoch in range(epochs):
        order = sampler.permutation(sampler.derive_seed(seed, epoch + 1), n)
        total = 0.0
        for start in range(0, n, BATCH_SIZE):
            idx = order[start : start + BATCH_SIZE]
            xb = dataset.inputs[idx]
            yb = dataset.labels[idx]
            if robust_eps is not None:
                xb = pgd_perturb(
                    net, xb, yb, robust_eps, norm, ROBUST_STEPS, clip
                )

            scores = net.forward_batch(xb)
            rows = np.arange(len(idx))
            loss = float(
                np.sum(logsumexp(scores, axis=1) - scores[rows, yb])
            )
            if not math.isfinite(loss):
                msg = f"loss diverged in epoch {epoch}"
                logger.error(msg)
                raise TrainingError(msg)
            total += loss

            g_out = softmax(scores, axis=1)
            g_out[rows, yb] -= 1.0
            grads = net.param_grads(xb, g_out / len(idx))
            for p, v, g in zip(params, velocity, grads):
                for k in range(len(p)):
                    v[k] = MOMENTUM * v[k] + g[k]
                    p[k] = p[k] - lr * v[k]
            if not all(np.all(np.abs(a) < 1e30) for p in params for a in p):
                msg = f"weights diverged in epoch {epoch}"
                logger.error(msg)
                raise TrainingError(msg)
            net = _rebuild(net, params)

        logger.debug("epoch %d loss %.6f", epoch, total / n)

    logger.info(
        "%s trained on %s, accuracy %.4f",
        arch,
        dataset.name,
        accuracy(net, dataset.inputs, dataset.labels),
    )
    return net
