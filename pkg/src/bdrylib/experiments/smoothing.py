"""Module containing the randomized smoothing alignment experiment.

A shared set of Gaussian noises is drawn once. For every noise level the
boundary of the smoothed classifier is searched with PGD on the averaged
gradient of all noised copies, and the SmoothGrad maps at the input and at
the found point are compared.
"""

import math
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import stats  # type: ignore
from scipy.special import softmax  # type: ignore

from bdrylib import sampler
from bdrylib.attack.iattack import ENorm, clip_box, project, step_dir
from bdrylib.attribution import smooth_gradient
from bdrylib.errors import (
    DomainError,
    PreconditionError,
    UndefinedMetricError,
)
from bdrylib.experiments.common import instance_id
from bdrylib.experiments.report import (
    STATUS_MISCLASSIFIED,
    STATUS_NO_BOUNDARY,
    STATUS_OK,
    DExperimentReport,
)
from bdrylib.metrics import spearman_correlation
from bdrylib.net import ELayerKind
from bdrylib.thread import WorkerPool

if TYPE_CHECKING:
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Network, Tensor

SMOOTHING_EPS = 3.0
SMOOTHING_ITERS = 40
# stop once fewer than this share of noised copies keeps the label
KEEP_FRACTION = 0.1
# floor of the differences before the log
LOG_FLOOR = 1e-12

SMOOTHING_COLUMNS = ["sigma", "diff", "log_diff"]


def certified_radius(sigma: float, p_a: float, p_b: float) -> float:
    """Get the certified l2 radius of the smoothed classifier.

    :param sigma: noise standard deviation
    :param p_a: lower bound of the top class probability
    :param p_b: upper bound of the runner-up probability
    """
    if sigma <= 0.0:
        raise DomainError("sigma must be positive")
    if not (0.0 <= p_b < p_a <= 1.0):
        raise DomainError("need 0 <= p_b < p_a <= 1")
    return float(sigma / 2.0 * (stats.norm.ppf(p_a) - stats.norm.ppf(p_b)))


def compute_lambda_bound(
    w_frob: float,
    w_norm: float,
    c: float,
    sigma: float,
    p_a: float,
    p_b: float,
) -> float:
    """Get the SmoothGrad robustness bound of a one-layer ReLU network.

    lambda = sqrt(2 pi) W_frob^2 / (2 c w_norm) * log(2) * R / (sigma / 2),
    R the certified radius at sigma.

    :param w_frob: Frobenius norm of the hidden weights
    :param w_norm: norm of the output weights
    :param c: positive scale constant
    :param sigma: noise standard deviation
    :param p_a: top class probability, in (0.5, 1]
    :param p_b: runner-up probability, in [0, p_a)
    """
    if not (0.5 < p_a <= 1.0) or not (0.0 <= p_b < p_a):
        raise DomainError("need 0.5 < p_a <= 1 and 0 <= p_b < p_a")
    if c <= 0.0 or w_norm <= 0.0:
        raise DomainError("c and w_norm must be positive")
    spread = 2.0 * certified_radius(sigma, p_a, p_b) / sigma
    scale = math.sqrt(2.0 * math.pi) * w_frob**2 / (2.0 * c * w_norm)
    return scale * math.log(2.0) * spread / sigma


def check_one_layer(net: "Network") -> None:
    """Check that a network is dense, ReLU, dense, optionally flattened."""
    kinds = [layer.kind for layer in net.layers]
    if kinds and kinds[0] is ELayerKind.FLATTEN:
        kinds = kinds[1:]
    if kinds != [ELayerKind.DENSE, ELayerKind.RELU, ELayerKind.DENSE]:
        raise PreconditionError("smoothing needs a one-layer ReLU network")


def smoothed_pgd(
    net: "Network",
    x: "Tensor",
    label: int,
    noise: "Tensor",
    sigma: float,
    eps: float = SMOOTHING_EPS,
    iters: int = SMOOTHING_ITERS,
    clip: tuple[float, float] | None = None,
) -> tuple["Tensor", bool]:
    """Run l2 PGD against the smoothed classifier.

    Each step follows the cross-entropy gradient averaged over all noised
    copies, with step size 2 eps / iters.

    :param net: network
    :param x: input
    :param label: class to move away from
    :param noise: standard normal samples (n, *x.shape)
    :param sigma: noise standard deviation
    :param eps: l2 radius
    :param iters: maximum number of steps
    :param clip: optional input domain box
    :return: (last iterate, success)
    """
    alpha = 2.0 * eps / iters
    copies = noise if sigma > 0.0 else noise[:1]
    rows = np.arange(copies.shape[0])
    xk = x.copy()
    for _ in range(iters):
        batch = xk[None] + sigma * copies
        g_out = softmax(net.forward_batch(batch), axis=1)
        g_out[rows, label] -= 1.0
        grad = net.vjp(batch, g_out).mean(axis=0)
        if not np.any(grad):
            break
        xk = xk + alpha * step_dir(grad, ENorm.L2)
        xk = clip_box(x + project(xk - x, eps, ENorm.L2), clip)
        batch = xk[None] + sigma * copies
        keep = float(np.mean(net.predict_batch(batch) == label))
        if keep < KEEP_FRACTION:
            return xk, True
    return xk, False


def smoothing_row(
    net: "Network",
    dataset: "ToyDataset",
    index: int,
    sigma: float,
    noise: "Tensor",
    eps: float = SMOOTHING_EPS,
    iters: int = SMOOTHING_ITERS,
) -> tuple[str, dict[str, Any]]:
    """Get the SmoothGrad difference across the boundary of one instance.

    :param net: one-layer ReLU network
    :param dataset: evaluation data
    :param index: instance index
    :param sigma: noise standard deviation
    :param noise: shared standard normal samples
    :param eps: attack l2 radius
    :param iters: attack steps
    """
    x = dataset.inputs[index]
    label = int(dataset.labels[index])
    if net.predict(x) != label:
        return STATUS_MISCLASSIFIED, {"sigma": sigma}
    x_adv, success = smoothed_pgd(
        net, x, label, noise, sigma, eps, iters, dataset.domain.clip
    )
    if not success:
        return STATUS_NO_BOUNDARY, {"sigma": sigma}

    n = noise.shape[0]
    sg = smooth_gradient(net, x, label, sigma, n, noise=noise)
    sg_adv = smooth_gradient(net, x_adv, label, sigma, n, noise=noise)
    diff = float(np.linalg.norm((sg.values - sg_adv.values).reshape(-1)))
    return STATUS_OK, {
        "sigma": sigma,
        "diff": diff,
        "log_diff": math.log(max(diff, LOG_FLOOR)),
    }


def run_smoothing(
    net: "Network",
    dataset: "ToyDataset",
    sigmas: list[float],
    n_noise: int = 50,
    eps: float = SMOOTHING_EPS,
    iters: int = SMOOTHING_ITERS,
    seed: int = 2020,
    threads: int = 1,
) -> DExperimentReport:
    """Measure the SmoothGrad change across the smoothed boundary per sigma.

    Rows use the sigma value as method tag. The summary also holds the
    trend entry, the Spearman coefficient between sigma and the mean log
    difference.

    :param net: one-layer ReLU network
    :param dataset: evaluation data
    :param sigmas: noise levels, must include 0
    :param n_noise: number of shared noises
    :param eps: attack l2 radius
    :param iters: attack steps
    :param seed: noise seed
    :param threads: worker threads
    """
    check_one_layer(net)
    if 0.0 not in sigmas or any(s < 0.0 for s in sigmas):
        raise PreconditionError("sigmas must be >= 0 and include 0")
    if n_noise < 1:
        raise PreconditionError("need at least one noise sample")

    noise = sampler.gaussian(seed, (n_noise,) + dataset.input_shape)
    items = [(s, i) for s in sigmas for i in range(len(dataset))]

    def work(_: int, item: tuple[float, int]) -> tuple[str, dict[str, Any]]:
        return smoothing_row(net, dataset, item[1], item[0], noise, eps, iters)

    pool: WorkerPool[tuple[float, int], tuple[str, dict[str, Any]]]
    pool = WorkerPool(work, threads)
    report = DExperimentReport("smoothing", list(SMOOTHING_COLUMNS))
    for (sigma, index), (status, values) in zip(items, pool.map(items)):
        report.add(instance_id(index), repr(float(sigma)), status, **values)
    report.summarize()

    levels = [
        (float(s), report.summary[repr(float(s))]["log_diff"])
        for s in sigmas
        if repr(float(s)) in report.summary
    ]
    defined = [(s, v) for s, v in levels if v is not None]
    trend = None
    if len(defined) >= 2:
        try:
            trend = spearman_correlation(
                [s for s, _ in defined], [v for _, v in defined]
            )
        except UndefinedMetricError:
            trend = None
    report.summary["trend"] = {key: None for key in SMOOTHING_COLUMNS}
    report.summary["trend"]["log_diff"] = trend
    return report
