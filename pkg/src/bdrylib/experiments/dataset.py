"""Module containing the synthetic toy datasets."""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from bdrylib import sampler
from bdrylib.errors import PreconditionError
from bdrylib.metrics import DBoundingBox
from bdrylib.oracle import DBox

KINDS = ("blobs2d", "rings2d", "patches8x8", "polarity8x8")

IMAGE_SIDE = 8
PATCH_SIDE = 3
GRAY = 0.5

###############################################################################
# Class: ToyDataset
###############################################################################


@dataclass(frozen=True, eq=False)
class ToyDataset:
    """Inputs with labels, optional boxes and the input domain box.

    aux_boxes holds the distractor patch of the polarity kind.
    """

    name: str
    inputs: npt.NDArray[np.float64]
    labels: npt.NDArray[np.int64]
    domain: DBox
    num_classes: int = 2
    boxes: list[DBoundingBox] | None = None
    aux_boxes: list[DBoundingBox] | None = None

    def __post_init__(self) -> None:
        """Check the dataset invariants."""
        assert self.inputs.shape[0] == self.labels.shape[0]
        assert np.all((self.labels >= 0) & (self.labels < self.num_classes))
        if self.boxes is not None:
            assert len(self.boxes) == len(self)

    def __len__(self) -> int:
        """Get the number of instances."""
        return int(self.labels.shape[0])

    @property
    def input_shape(self) -> tuple[int, ...]:
        """Get the shape of one input."""
        return tuple(int(d) for d in self.inputs.shape[1:])

    def subset(self, indices: "list[int]") -> "ToyDataset":
        """Get the instances at the given indices.

        :param indices: instance indices
        """
        idx = np.asarray(indices, dtype=np.int64)
        return ToyDataset(
            self.name,
            self.inputs[idx],
            self.labels[idx],
            self.domain,
            self.num_classes,
            [self.boxes[i] for i in idx] if self.boxes else None,
            [self.aux_boxes[i] for i in idx] if self.aux_boxes else None,
        )


def _balanced(n: int) -> npt.NDArray[np.int64]:
    return np.arange(n, dtype=np.int64) % 2


# centers lie 0.57 from the separating diagonal, an L2 ball of 0.5 almost
# reaches it
def _blobs(n: int, seed: int) -> ToyDataset:
    labels = _balanced(n)
    centers = np.where(labels[:, None] == 0, -0.4, 0.4)
    noise = 0.15 * sampler.gaussian(seed, (n, 2))
    domain = DBox.cube(-2.0, 2.0, 2)
    inputs = np.clip(centers + noise, -2.0, 2.0)
    return ToyDataset("blobs2d", inputs, labels, domain)


def _rings(n: int, seed: int) -> ToyDataset:
    labels = _balanced(n)
    radius = np.where(labels == 0, 0.5, 1.3)
    radius = radius + 0.1 * sampler.gaussian(seed, (n,))
    theta = 2.0 * np.pi * sampler.uniform(sampler.derive_seed(seed, 1), (n,))
    inputs = np.stack([radius * np.cos(theta), radius * np.sin(theta)], 1)
    domain = DBox.cube(-2.0, 2.0, 2)
    return ToyDataset("rings2d", np.clip(inputs, -2.0, 2.0), labels, domain)


def _patch_box(
    label: int, u: npt.NDArray[np.float64]
) -> tuple[DBoundingBox, DBoundingBox]:
    """Get the class patch box and a box in the opposite image half.

    Class 0 patches lie in the top half, class 1 patches in the bottom one.
    """
    span = IMAGE_SIDE - PATCH_SIDE + 1
    half = IMAGE_SIDE // 2
    rows = half - PATCH_SIDE + 1
    x0 = int(u[0] * span)
    x1 = int(u[1] * span)
    y0 = int(u[2] * rows)
    y1 = int(u[3] * rows)
    top = (y0, x0)
    bottom = (half + y1, x1)
    own, other = (top, bottom) if label == 0 else (bottom, top)
    return (
        DBoundingBox(
            own[1], own[0], own[1] + PATCH_SIDE, own[0] + PATCH_SIDE
        ),
        DBoundingBox(
            other[1], other[0], other[1] + PATCH_SIDE, other[0] + PATCH_SIDE
        ),
    )


def _paint(img: npt.NDArray[np.float64], box: DBoundingBox, v: float) -> None:
    img[0, box.y_min : box.y_max, box.x_min : box.x_max] = v


def _patches(n: int, seed: int, polarity: bool) -> ToyDataset:
    labels = _balanced(n)
    shape = (n, 1, IMAGE_SIDE, IMAGE_SIDE)
    noise = sampler.uniform(seed, shape)
    place = sampler.uniform(sampler.derive_seed(seed, 1), (n, 4))
    if polarity:
        inputs = GRAY + 0.1 * (noise - 0.5)
    else:
        inputs = 0.2 * noise

    boxes: list[DBoundingBox] = []
    aux: list[DBoundingBox] = []
    for i in range(n):
        box, other = _patch_box(int(labels[i]), place[i])
        _paint(inputs[i], box, 1.0)
        if polarity:
            _paint(inputs[i], other, 0.0)
        boxes.append(box)
        aux.append(other)

    domain = DBox.cube(0.0, 1.0, IMAGE_SIDE * IMAGE_SIDE)
    name = "polarity8x8" if polarity else "patches8x8"
    return ToyDataset(
        name,
        inputs,
        labels,
        domain,
        boxes=boxes,
        aux_boxes=aux if polarity else None,
    )


def synth_dataset(kind: str, n: int, seed: int) -> ToyDataset:
    """Generate a deterministic synthetic dataset with balanced labels.

    :param kind: one of KINDS
    :param n: number of instances
    :param seed: sampler seed
    """
    if n < 1:
        raise PreconditionError("dataset needs at least one instance")
    if kind == "blobs2d":
        return _blobs(n, seed)
    if kind == "rings2d":
        return _rings(n, seed)
    if kind == "patches8x8":
        return _patches(n, seed, False)
    if kind == "polarity8x8":
        return _patches(n, seed, True)
    raise PreconditionError(f"unknown dataset kind '{kind}', use {KINDS}")
