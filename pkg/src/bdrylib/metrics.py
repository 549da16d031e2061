"""Module containing bounding box localization metrics and statistics.

Sums are computed with math.fsum, so the result does not depend on the
summation order.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from scipy import stats  # type: ignore

from bdrylib.errors import (
    InputShapeError,
    PreconditionError,
    UndefinedMetricError,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from bdrylib.attribution import DAttributionMap
    from bdrylib.net import Tensor

BOX_HEADER = ["id", "x_min", "y_min", "x_max", "y_max"]
# distance floor of the concentration metric, in pixels
CON_MIN_DIST = 1.0
# relative spread below which a sample counts as constant
VARIANCE_RTOL = 1e-12

###############################################################################
# Class: DBoundingBox
###############################################################################


@dataclass(frozen=True)
class DBoundingBox:
    """Pixel rectangle, minimum inclusive and maximum exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def area(self) -> int:
        """Get the number of pixels inside the box."""
        width = max(self.x_max - self.x_min, 0)
        return width * max(self.y_max - self.y_min, 0)

    def check(self, width: int, height: int) -> None:
        """Check that the box is non-empty and inside an image.

        :param width: image width
        :param height: image height
        """
        if not (0 <= self.x_min < self.x_max <= width) or not (
            0 <= self.y_min < self.y_max <= height
        ):
            msg = f"box {self} is empty or outside {width}x{height}"
            raise PreconditionError(msg)

    def mask(self, width: int, height: int) -> npt.NDArray[np.bool_]:
        """Get the box as a (height, width) boolean mask."""
        self.check(width, height)
        out = np.zeros((height, width), dtype=bool)
        out[self.y_min : self.y_max, self.x_min : self.x_max] = True
        return out


###############################################################################
# Class: DPixelAttribution
###############################################################################


@dataclass(frozen=True, eq=False)
class DPixelAttribution:
    """Attribution reduced to one value per pixel, indexed values[y, x]."""

    values: "Tensor"

    def __post_init__(self) -> None:
        """Check the pixel map."""
        if self.values.ndim != 2:
            raise InputShapeError("pixel attribution must be 2-D")
        assert np.all(np.isfinite(self.values))

    @classmethod
    def from_values(cls, values: npt.ArrayLike) -> "DPixelAttribution":
        """Build a pixel map, (C, H, W) inputs are summed over channels.

        :param values: (H, W) or (C, H, W) attribution values
        """
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr.sum(axis=0)
        return cls(arr)

    @property
    def height(self) -> int:
        """Get the image height."""
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        """Get the image width."""
        return int(self.values.shape[1])

    def box_mask(self, box: DBoundingBox) -> npt.NDArray[np.bool_]:
        """Get the mask of a box over this map."""
        return box.mask(self.width, self.height)


def localization(attr: DPixelAttribution, box: DBoundingBox) -> float:
    """Get |Z and U| / (|U| + |Z outside U|), Z the positive pixels.

    :param attr: pixel attribution
    :param box: bounding box U
    """
    inside = attr.box_mask(box)
    pos = attr.values > 0.0
    hit = int(np.count_nonzero(pos & inside))
    spill = int(np.count_nonzero(pos & ~inside))
    return hit / (box.area + spill)


def energy_game(attr: DPixelAttribution, box: DBoundingBox) -> float:
    """Get the share of positive attribution mass inside the box.

    :param attr: pixel attribution
    :param box: bounding box U
    """
    inside = attr.box_mask(box)
    v = attr.values
    total = math.fsum(v[v > 0.0])
    if total == 0.0:
        raise UndefinedMetricError("no positive attribution")
    return math.fsum(v[(v > 0.0) & inside]) / total


def positive_percentage(attr: DPixelAttribution, box: DBoundingBox) -> float:
    """Get the positive share of the absolute attribution inside the box.

    :param attr: pixel attribution
    :param box: bounding box U
    """
    inside = attr.box_mask(box)
    v = attr.values
    pos = math.fsum(v[(v > 0.0) & inside])
    neg = math.fsum(v[(v < 0.0) & inside])
    if pos - neg == 0.0:
        raise UndefinedMetricError("all-zero attribution inside the box")
    return pos / (pos - neg)


def concentration(attr: DPixelAttribution, box: DBoundingBox) -> float:
    """Get how tightly the box attribution clusters around its center.

    Values are normalized by the absolute box sum, the center is the
    attribution weighted mean coordinate and each pixel contributes its
    normalized value divided by its distance to the center, floored at one
    pixel.

    :param attr: pixel attribution
    :param box: bounding box U
    """
    inside = attr.box_mask(box)
    ys, xs = np.nonzero(inside)
    v = attr.values[ys, xs]

    norm = math.fsum(np.abs(v))
    if norm == 0.0:
        raise UndefinedMetricError("all-zero attribution inside the box")
    g = v / norm
    mass = math.fsum(g)
    if mass == 0.0:
        raise UndefinedMetricError("center of mass is undefined")

    cx = math.fsum(g * xs) / mass
    cy = math.fsum(g * ys) / mass
    dx = xs - cx
    dy = ys - cy
    dist = np.sqrt(dx * dx + dy * dy)
    return math.fsum(g / np.maximum(dist, CON_MIN_DIST))


def attribution_l2_distance(
    a: "DAttributionMap", b: "DAttributionMap"
) -> float:
    """Get the l2 distance between two attribution maps.

    :param a: first map
    :param b: second map
    """
    if a.values.shape != b.values.shape:
        msg = f"map shapes differ: {a.values.shape} != {b.values.shape}"
        raise InputShapeError(msg)
    return float(np.linalg.norm((a.values - b.values).reshape(-1)))


def _flat(a: "Tensor") -> bool:
    scale = max(1.0, float(np.abs(a).max()))
    return bool(np.ptp(a) <= VARIANCE_RTOL * scale)


def _paired(
    xs: "Sequence[float]", ys: "Sequence[float]"
) -> tuple["Tensor", "Tensor"]:
    a = np.asarray(xs, dtype=np.float64)
    b = np.asarray(ys, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputShapeError("need two sequences of the same length")
    if a.size < 2:
        raise PreconditionError("need at least two pairs")
    if _flat(a) or _flat(b):
        raise UndefinedMetricError("zero variance")
    return a, b


def pearson_correlation(
    xs: "Sequence[float]", ys: "Sequence[float]"
) -> float:
    """Get the Pearson correlation coefficient.

    :param xs: first sample
    :param ys: second sample
    """
    a, b = _paired(xs, ys)
    r = stats.pearsonr(a, b)[0]
    return float(np.clip(r, -1.0, 1.0))


def spearman_correlation(
    xs: "Sequence[float]", ys: "Sequence[float]"
) -> float:
    """Get the Spearman rank correlation coefficient.

    :param xs: first sample
    :param ys: second sample
    """
    a, b = _paired(xs, ys)
    return float(stats.spearmanr(a, b)[0])


def read_boxes(path: str | Path) -> dict[str, DBoundingBox]:
    """Read a bounding box CSV file.

    :param path: file path
    """
    with Path(path).open(newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != BOX_HEADER:
            raise PreconditionError(f"{path}: header must be {BOX_HEADER}")
        return {
            row["id"]: DBoundingBox(
                int(row["x_min"]),
                int(row["y_min"]),
                int(row["x_max"]),
                int(row["y_max"]),
            )
            for row in reader
        }


def write_boxes(boxes: dict[str, DBoundingBox], path: str | Path) -> None:
    """Write a bounding box CSV file.

    :param boxes: boxes by instance id
    :param path: file path
    """
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(BOX_HEADER)
        for key, box in boxes.items():
            writer.writerow([key, box.x_min, box.y_min, box.x_max, box.y_max])
