"""Module containing brute-force boundary geometry for tiny networks.

Everything here evaluates the network on a dense grid over a box, so it is
limited to inputs with at most three features.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from bdrylib import sampler
from bdrylib.attack.search import bisect_segment
from bdrylib.errors import NoBoundaryError, PreconditionError, ScaleError
from bdrylib.logger import logger
from bdrylib.net import DActivationPattern
from bdrylib.thread import WorkerPool

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from bdrylib.net import Network, Tensor

MAX_ORACLE_DIM = 3
MIN_RESOLUTION = 16
# grid points evaluated per work item
CHUNK = 4096

###############################################################################
# Class: DBox
###############################################################################


@dataclass(frozen=True)
class DBox:
    """Axis-aligned input domain box."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        """Check the box bounds."""
        assert len(self.lo) == len(self.hi)
        assert all(a < b for a, b in zip(self.lo, self.hi))

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "DBox":
        """Get a box with the same bounds on every axis."""
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def clip(self) -> tuple[float, float]:
        """Get the scalar clipping range enclosing the box."""
        return min(self.lo), max(self.hi)

    def widths(self) -> tuple[float, ...]:
        """Get the box side lengths."""
        return tuple(b - a for a, b in zip(self.lo, self.hi))


###############################################################################
# Class: DBoundarySegment
###############################################################################


@dataclass(frozen=True, eq=False)
class DBoundarySegment:
    """Closest decision boundary point found by the grid oracle.

    normal is the gradient of f_i - f_j on the x side of the boundary,
    score_normal the gradient of f_i at the boundary point itself.
    """

    point: "Tensor"
    distance: float
    normal: "Tensor"
    score_normal: "Tensor"
    class_pair: tuple[int, int]


def _grid(net: "Network", domain: DBox, resolution: int) -> "Tensor":
    """Get every grid point of the box in the network input shape."""
    dim = math.prod(net.input_shape)
    if dim > MAX_ORACLE_DIM:
        msg = f"grid oracle supports {MAX_ORACLE_DIM} features, got {dim}"
        raise ScaleError(msg)
    if resolution < MIN_RESOLUTION:
        msg = f"resolution must be at least {MIN_RESOLUTION}"
        raise PreconditionError(msg)
    if len(domain.lo) != dim:
        raise PreconditionError("domain box does not match the input size")

    axes = [
        np.linspace(lo, hi, resolution) for lo, hi in zip(domain.lo, domain.hi)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return points.reshape((-1,) + net.input_shape)


def _chunks(points: "Tensor") -> list["Tensor"]:
    return [points[i : i + CHUNK] for i in range(0, points.shape[0], CHUNK)]


def enumerate_regions(
    net: "Network", domain: DBox, resolution: int, threads: int = 1
) -> list[tuple[DActivationPattern, "Tensor"]]:
    """Find the activation regions hit by a dense grid.

    :param net: network with at most three input features
    :param domain: box to sample
    :param resolution: grid points per axis
    :param threads: worker threads
    """
    points = _grid(net, domain, resolution)
    if net.relu_count == 0:
        return [(DActivationPattern(()), points[0])]

    pool: WorkerPool["Tensor", "Tensor"] = WorkerPool(
        lambda _, chunk: net.activation_patterns_batch(chunk), threads
    )
    bits = np.concatenate(pool.map(_chunks(points)), axis=0)
    _, first = np.unique(bits, axis=0, return_index=True)

    regions = [
        (DActivationPattern(tuple(bool(b) for b in bits[i])), points[i])
        for i in sorted(first)
    ]
    logger.debug("%d regions on a %d grid", len(regions), resolution)
    return regions


def closest_boundary_oracle(
    net: "Network",
    x: "Tensor",
    domain: DBox,
    resolution: int,
    threads: int = 1,
) -> DBoundarySegment:
    """Find the closest decision boundary point by grid search and bisection.

    :param net: network with at most three input features
    :param x: input
    :param domain: box to sample
    :param resolution: grid points per axis
    :param threads: worker threads
    """
    x = np.asarray(x, dtype=np.float64)
    points = _grid(net, domain, resolution)
    label = net.predict(x)

    def closest_in(_: int, chunk: "Tensor") -> tuple[float, int]:
        flipped = net.predict_batch(chunk) != label
        if not np.any(flipped):
            return np.inf, -1
        dist = np.linalg.norm((chunk - x).reshape(chunk.shape[0], -1), axis=1)
        dist[~flipped] = np.inf
        i = int(np.argmin(dist))
        return float(dist[i]), i

    chunks = _chunks(points)
    pool: WorkerPool["Tensor", tuple[float, int]] = WorkerPool(
        closest_in, threads
    )
    found = pool.map(chunks)
    best = min(range(len(found)), key=lambda k: found[k][0])
    if not np.isfinite(found[best][0]):
        raise NoBoundaryError("no flipped label on the grid")
    target = chunks[best][found[best][1]]

    lo, hi = bisect_segment(net, x, target, label)
    direction = target - x
    inside = x + lo * direction
    point = x + hi * direction if hi < 1.0 else target
    other = net.predict(point)

    normal = net.input_gradient(inside, label) - net.input_gradient(
        inside, other
    )
    return DBoundarySegment(
        point=point,
        distance=float(np.linalg.norm((point - x).reshape(-1))),
        normal=normal,
        score_normal=net.input_gradient(point, label),
        class_pair=(label, other),
    )


def estimate_attribution_lipschitz(
    net: "Network",
    g: "Callable[[Network, Tensor], Tensor]",
    x: "Tensor",
    delta: float,
    n_pairs: int,
    seed: int,
    anchors: "Sequence[Tensor]" = (),
) -> float:
    """Estimate max |g(y) - g(x)| / |y - x| over samples of the delta ball.

    :param net: network passed to g
    :param g: attribution function of the network and the input
    :param x: ball center
    :param delta: ball radius
    :param n_pairs: number of uniform samples in the ball
    :param seed: sampler seed
    :param anchors: extra points always included in the maximum
    """
    if delta <= 0.0 or n_pairs < 1:
        raise PreconditionError("need delta > 0 and n_pairs >= 1")

    x = np.asarray(x, dtype=np.float64)
    dim = x.size
    dirs = sampler.gaussian(seed, (n_pairs, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True) + 1e-300
    radii = delta * sampler.uniform(seed + 1, (n_pairs,)) ** (1.0 / dim)
    samples = x.reshape(1, -1) + dirs * radii[:, None]

    gx = np.asarray(g(net, x), dtype=np.float64).reshape(-1)
    lam = 0.0
    for y in [s.reshape(x.shape) for s in samples] + list(anchors):
        dist = float(np.linalg.norm((y - x).reshape(-1)))
        if dist == 0.0:
            continue
        gy = np.asarray(g(net, y), dtype=np.float64).reshape(-1)
        lam = max(lam, float(np.linalg.norm(gy - gx)) / dist)
    return lam


def check_boundary_alignment(
    net: "Network",
    x: "Tensor",
    delta: float,
    lambda_hat: float,
    domain: DBox,
    resolution: int = 64,
) -> tuple[float, float, bool]:
    """Check |n - g_S(x)| <= lambda |x - x'| for the closest boundary.

    The check is vacuously true when the boundary is farther than delta.

    :param net: network with at most three input features
    :param x: input
    :param delta: robustness radius
    :param lambda_hat: attribution Lipschitz estimate
    :param domain: box to sample
    :param resolution: grid points per axis
    :return: (lhs, rhs, holds)
    """
    seg = closest_boundary_oracle(net, x, domain, resolution)
    if seg.distance > delta:
        return 0.0, 0.0, True

    label = net.predict(x)
    sm = net.input_gradient(x, label)
    lhs = float(np.linalg.norm((seg.score_normal - sm).reshape(-1)))
    rhs = lambda_hat * seg.distance
    return lhs, rhs, lhs <= rhs * (1.0 + 1e-6)


check_proposition1 = check_boundary_alignment
