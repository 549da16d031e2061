"""Module containing the seeded Gaussian sampler.

All noise in bdrylib (SmoothGrad, randomized smoothing, random starts,
Lipschitz estimation) is drawn here, so results only depend on the seed.
"""

import numpy as np
import numpy.typing as npt

# counter-based 64-bit generator, stable across platforms
GENERATOR = "philox4x64"


def _generator(seed: int) -> np.random.Generator:
    """Get a Philox generator for a given seed."""
    assert seed >= 0
    return np.random.Generator(np.random.Philox(seed))


def uniform(seed: int, shape: tuple[int, ...]) -> npt.NDArray[np.float64]:
    """Draw uniform samples from [0, 1).

    :param seed: generator seed
    :param shape: output shape
    """
    return _generator(seed).random(shape)


def gaussian(seed: int, shape: tuple[int, ...]) -> npt.NDArray[np.float64]:
    """Draw standard normal samples with the Box-Muller transform.

    Samples are produced in row-major order: the k-th output element
    only depends on the seed and k, never on the requested shape.

    :param seed: generator seed
    :param shape: output shape
    """
    count = int(np.prod(shape, dtype=np.int64))
    pairs = (count + 1) // 2
    u = _generator(seed).random(2 * pairs)

    # (0, 1] for the log
    radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    theta = 2.0 * np.pi * u[1::2]

    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = radius * np.cos(theta)
    out[1::2] = radius * np.sin(theta)
    return out[:count].reshape(shape)


def derive_seed(seed: int, index: int) -> int:
    """Derive a per-instance seed.

    :param seed: global seed
    :param index: instance index
    """
    return (seed ^ index) & 0xFFFFFFFFFFFFFFFF


def permutation(seed: int, n: int) -> npt.NDArray[np.int64]:
    """Get a seeded permutation of range(n).

    :param seed: generator seed
    :param n: permutation size
    """
    return _generator(seed).permutation(n)
