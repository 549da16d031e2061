"""Module containing the bdrylib attribution methods.

Every method returns a DAttributionMap computed on pre-softmax scores. The
target class is the prediction at x unless given.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.special import softmax  # type: ignore

from bdrylib import sampler
from bdrylib.attack.search import boundary_normal
from bdrylib.config import format_value, read_config
from bdrylib.errors import DomainError, NoBoundaryError, PreconditionError
from bdrylib.logger import logger
from bdrylib.proto.tensorformat import load_tensor, save_tensor

if TYPE_CHECKING:
    from bdrylib.attack.iattack import DBoundaryResult
    from bdrylib.net import Network, Tensor

META_SUFFIX = ".meta"

###############################################################################
# Enum: EAttrMethod
###############################################################################


class EAttrMethod(Enum):
    """Attribution methods."""

    SM = "sm"
    GTI = "gti"
    IG = "ig"
    SG = "sg"
    BSM = "bsm"
    BIG = "big"
    AGI = "agi"

    @property
    def needs_boundary(self) -> bool:
        """Return True if the method needs a boundary search result."""
        return self in (EAttrMethod.BSM, EAttrMethod.BIG)


###############################################################################
# Class: DAttributionMap
###############################################################################


@dataclass(frozen=True, eq=False)
class DAttributionMap:
    """Per-feature attribution scores and their provenance."""

    values: "Tensor"
    method: EAttrMethod
    target_class: int
    baseline: "Tensor | None" = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Check the map invariants."""
        assert np.all(np.isfinite(self.values))
        if self.baseline is not None:
            assert self.baseline.shape == self.values.shape


###############################################################################
# Class: IGConfig
###############################################################################


@dataclass(frozen=True)
class IGConfig:
    """Integrated gradients path discretization."""

    steps: int = 20
    scheme: str = "trapezoid"

    def __post_init__(self) -> None:
        """Check the configuration."""
        if self.scheme != "trapezoid":
            raise PreconditionError("only the trapezoid scheme is supported")
        if self.steps < 2:
            raise PreconditionError("trapezoid needs at least 2 steps")

    def weights(self) -> "Tensor":
        """Get the trapezoid quadrature weights over [0, 1]."""
        w = np.ones(self.steps)
        w[0] = w[-1] = 0.5
        return w / (self.steps - 1)  # type: ignore


###############################################################################
# Class: DAgiConfig
###############################################################################


@dataclass(frozen=True)
class DAgiConfig:
    """Adversarial gradient integral parameters."""

    eps: float = 0.5
    topk: int = 10
    max_iters: int = 15
    step_size: float = 0.05

    def __post_init__(self) -> None:
        """Check the configuration."""
        if self.eps <= 0.0 or self.step_size <= 0.0:
            raise PreconditionError("AGI eps and step size must be positive")
        if self.topk < 1:
            raise PreconditionError("AGI topk must be >= 1")
        if self.max_iters < 0:
            raise PreconditionError("AGI max_iters must be >= 0")


AGI_PRESETS = {
    "cifar": DAgiConfig(0.5, 10, 15),
    "imagenet-std": DAgiConfig(2.0, 15, 15),
    "imagenet-robust": DAgiConfig(6.0, 15, 15),
}


def _target(net: "Network", x: "Tensor", c: int | None) -> int:
    if c is None:
        return net.predict(x)
    assert 0 <= c < net.num_classes
    return c


def saliency_map(
    net: "Network", x: "Tensor", c: int | None = None
) -> DAttributionMap:
    """Get the gradient of the class score.

    :param net: network
    :param x: input
    :param c: target class
    """
    c = _target(net, x, c)
    return DAttributionMap(net.input_gradient(x, c), EAttrMethod.SM, c)


def grad_times_input(
    net: "Network", x: "Tensor", c: int | None = None
) -> DAttributionMap:
    """Get the saliency map multiplied elementwise by the input.

    :param net: network
    :param x: input
    :param c: target class
    """
    c = _target(net, x, c)
    values = net.input_gradient(x, c) * np.asarray(x, dtype=np.float64)
    return DAttributionMap(values, EAttrMethod.GTI, c)


def _path_average(
    net: "Network", x: "Tensor", x_b: "Tensor", c: int, cfg: IGConfig
) -> "Tensor":
    """Get the trapezoid average of the gradient along the straight path."""
    t = np.linspace(0.0, 1.0, cfg.steps)
    shape = (cfg.steps,) + (1,) * x.ndim
    points = x_b[None] + t.reshape(shape) * (x - x_b)[None]
    grads = net.gradients_batch(points, c)
    return np.tensordot(cfg.weights(), grads, axes=1)  # type: ignore


def integrated_gradients(
    net: "Network",
    x: "Tensor",
    x_b: "Tensor | None" = None,
    c: int | None = None,
    cfg: IGConfig | None = None,
) -> DAttributionMap:
    """Get integrated gradients from a baseline, zeros by default.

    :param net: network
    :param x: input
    :param x_b: baseline
    :param c: target class
    :param cfg: path discretization
    """
    cfg = cfg or IGConfig()
    x = np.asarray(x, dtype=np.float64)
    x_b = np.zeros_like(x) if x_b is None else np.asarray(x_b, np.float64)
    if x_b.shape != x.shape:
        raise PreconditionError("baseline shape differs from the input")
    c = _target(net, x, c)

    values = (x - x_b) * _path_average(net, x, x_b, c, cfg)
    return DAttributionMap(
        values, EAttrMethod.IG, c, x_b, {"steps": cfg.steps}
    )


def smooth_gradient(
    net: "Network",
    x: "Tensor",
    c: int | None = None,
    sigma: float = 0.15,
    n: int = 50,
    seed: int = 0,
    noise: "Tensor | None" = None,
) -> DAttributionMap:
    """Get the mean gradient over Gaussian perturbations of the input.

    :param net: network
    :param x: input
    :param c: target class
    :param sigma: noise standard deviation
    :param n: number of samples
    :param seed: sampler seed
    :param noise: standard normal samples (n, *x.shape) to reuse
    """
    if sigma < 0.0 or n < 1:
        raise PreconditionError("need sigma >= 0 and n >= 1")
    x = np.asarray(x, dtype=np.float64)
    c = _target(net, x, c)
    meta = {"sigma": sigma, "samples": n, "seed": seed}
    if sigma == 0.0:
        values = net.input_gradient(x, c)
        return DAttributionMap(values, EAttrMethod.SG, c, meta=meta)

    if noise is None:
        noise = sampler.gaussian(seed, (n,) + x.shape)
    assert noise.shape[1:] == x.shape
    grads = net.gradients_batch(x[None] + sigma * noise, c)
    return DAttributionMap(grads.mean(axis=0), EAttrMethod.SG, c, meta=meta)


def _checked(boundary: "DBoundaryResult") -> None:
    if not boundary.success:
        raise NoBoundaryError(f"{boundary.method} found no boundary")


def boundary_saliency_map(
    net: "Network", x: "Tensor", boundary: "DBoundaryResult"
) -> DAttributionMap:
    """Get the saliency of the predicted class at the closest boundary.

    :param net: network
    :param x: input
    :param boundary: successful boundary search result
    """
    _checked(boundary)
    c = net.predict(x)
    if boundary.label == c:
        values = boundary_normal(net, boundary)
    else:
        values = net.input_gradient(boundary.adversarial, c)
    meta = {"boundary_distance": boundary.distance, "attack": boundary.method}
    return DAttributionMap(
        values, EAttrMethod.BSM, c, boundary.adversarial, meta
    )


def boundary_integrated_gradients(
    net: "Network",
    x: "Tensor",
    boundary: "DBoundaryResult",
    cfg: IGConfig | None = None,
) -> DAttributionMap:
    """Get integrated gradients from the closest adversarial example.

    :param net: network
    :param x: input
    :param boundary: successful boundary search result
    :param cfg: path discretization
    """
    _checked(boundary)
    ig = integrated_gradients(net, x, boundary.adversarial, None, cfg)
    meta = dict(ig.meta)
    meta["boundary_distance"] = boundary.distance
    meta["attack"] = boundary.method
    return DAttributionMap(
        ig.values, EAttrMethod.BIG, ig.target_class, ig.baseline, meta
    )


def agi(
    net: "Network",
    x: "Tensor",
    eps: float = 0.5,
    topk: int = 10,
    max_iters: int = 15,
    step_size: float = 0.05,
    seed: int = 0,
    clip: tuple[float, float] | None = None,
) -> DAttributionMap:
    """Get the adversarial gradient integral.

    For every one of the topk highest scoring other classes a sign
    gradient ascent on its log-probability runs inside an l-inf eps ball.
    Each step adds -grad f_c(x_k) * (x_k+1 - x_k) to the map. A target
    stops once it is predicted. topk is capped at num_classes - 1.

    :param net: network
    :param x: input
    :param eps: l-inf radius of the path
    :param topk: number of target classes
    :param max_iters: steps per target, no steps give a zero map
    :param step_size: sign step length
    :param seed: recorded only, the path is deterministic
    :param clip: optional input domain box
    """
    x = np.asarray(x, dtype=np.float64)
    c = net.predict(x)
    scores = net.forward(x)
    others = [int(i) for i in np.argsort(-scores, kind="stable") if i != c]
    targets = others[: min(topk, net.num_classes - 1)]

    values = np.zeros_like(x)
    reached: dict[str, bool] = {}
    for t in targets:
        xk = x.copy()
        ok = False
        for _ in range(max_iters):
            g_out = -softmax(net.forward(xk))
            g_out[t] += 1.0
            grad_t = net.vjp(xk[None], g_out[None])[0]
            step = xk + step_size * np.sign(grad_t) - x
            x_new = x + np.clip(step, -eps, eps)
            if clip is not None:
                x_new = np.clip(x_new, clip[0], clip[1])
            values -= net.input_gradient(xk, c) * (x_new - xk)
            xk = x_new
            if net.predict(xk) == t:
                ok = True
                break
        reached[str(t)] = ok

    meta = {
        "eps": eps,
        "topk": len(targets),
        "max_iters": max_iters,
        "seed": seed,
        "reached": reached,
    }
    return DAttributionMap(values, EAttrMethod.AGI, c, meta=meta)


def sigma_to_beta(sigma: float) -> float:
    """Get the softplus beta whose smoothing matches Gaussian noise sigma.

    :param sigma: noise standard deviation
    """
    if sigma <= 0.0:
        raise DomainError("sigma must be positive")
    return math.log(2.0) * math.sqrt(2.0 * math.pi) / sigma**2


def attribute(
    net: "Network",
    x: "Tensor",
    method: EAttrMethod,
    boundary: "DBoundaryResult | None" = None,
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
    sg_sigma: float = 0.15,
    sg_samples: int = 50,
    seed: int = 0,
    clip: tuple[float, float] | None = None,
) -> DAttributionMap:
    """Compute any attribution method for the predicted class.

    :param net: network
    :param x: input
    :param method: attribution method
    :param boundary: boundary search result, needed by BSM and BIG
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    :param sg_sigma: SmoothGrad noise standard deviation
    :param sg_samples: SmoothGrad sample count
    :param seed: SmoothGrad and AGI seed
    :param clip: input domain box of the AGI path
    """
    if method.needs_boundary:
        if boundary is None:
            raise NoBoundaryError(f"{method.value} needs a boundary search")
        if method is EAttrMethod.BSM:
            return boundary_saliency_map(net, x, boundary)
        return boundary_integrated_gradients(net, x, boundary, ig_cfg)

    if method is EAttrMethod.SM:
        return saliency_map(net, x)
    if method is EAttrMethod.GTI:
        return grad_times_input(net, x)
    if method is EAttrMethod.IG:
        return integrated_gradients(net, x, cfg=ig_cfg)
    if method is EAttrMethod.SG:
        return smooth_gradient(net, x, None, sg_sigma, sg_samples, seed)

    cfg = agi_cfg or DAgiConfig()
    return agi(
        net,
        x,
        cfg.eps,
        cfg.topk,
        cfg.max_iters,
        cfg.step_size,
        seed,
        clip,
    )


###############################################################################
# Attribution files
###############################################################################

_META_KEYS = ("steps", "sigma", "samples", "seed", "boundary_distance")


def meta_path(path: str | Path) -> Path:
    """Get the metadata sidecar path of an attribution tensor file."""
    path = Path(path)
    return path.with_name(path.name + META_SUFFIX)


def save_attribution(amap: DAttributionMap, path: str | Path) -> None:
    """Write an attribution tensor and its metadata sidecar.

    :param amap: attribution map
    :param path: tensor file path
    """
    save_tensor(amap.values, path)
    lines = [f"method = {amap.method.value}", f"class = {amap.target_class}"]
    lines += [
        f"{key} = {format_value(amap.meta[key])}"
        for key in _META_KEYS
        if key in amap.meta
    ]
    meta_path(path).write_text("\n".join(lines) + "\n")
    logger.info("%s attribution written to %s", amap.method.value, path)


def load_attribution(path: str | Path) -> DAttributionMap:
    """Read an attribution tensor and its metadata sidecar.

    :param path: tensor file path
    """
    values = load_tensor(path)
    meta = read_config(meta_path(path))
    method = EAttrMethod(meta.pop("method"))
    target = int(meta.pop("class"))
    return DAttributionMap(values, method, target, meta=meta)
