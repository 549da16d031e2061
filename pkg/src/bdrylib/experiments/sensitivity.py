"""Module containing the baseline sensitivity study.

On images with a white patch that decides the class and a black distractor
patch, IG from a black and from a white baseline is compared with BIG. A
counterfactual check masks the patch each map ranks higher with the
background level and records whether the prediction changes.
"""

from typing import TYPE_CHECKING, Any

import numpy as np

from bdrylib.attribution import (
    DAttributionMap,
    IGConfig,
    boundary_integrated_gradients,
    integrated_gradients,
)
from bdrylib.errors import PreconditionError, UndefinedMetricError
from bdrylib.experiments.common import (
    find_boundary,
    instance_id,
    pixel_map,
)
from bdrylib.experiments.dataset import GRAY, IMAGE_SIDE
from bdrylib.experiments.report import (
    STATUS_MISCLASSIFIED,
    STATUS_NO_BOUNDARY,
    STATUS_OK,
    DExperimentReport,
)
from bdrylib.metrics import DBoundingBox, energy_game
from bdrylib.net import DenseLayer, FlattenLayer, Network, ReluLayer
from bdrylib.thread import WorkerPool

if TYPE_CHECKING:
    from bdrylib.attack.iattack import DAttackConfig
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Tensor

SENSITIVITY_COLUMNS = ["eg", "eg_undefined", "flip"]
VARIANTS = ("ig_black", "ig_white", "big")

# pixels brighter than this count as patch evidence
DETECTOR_THRESHOLD = 0.75
# score of the no-patch class
DETECTOR_NONE = 0.1

Row = tuple[str, str, dict[str, Any]]


def build_polarity_detector(side: int = IMAGE_SIDE) -> Network:
    """Get a fixed network that locates the white patch of an image.

    Class 0 sums the bright evidence of the top half, class 1 the one of
    the bottom half, class 2 is a constant for images without evidence.

    :param side: image side
    """
    dim = side * side
    rows = np.arange(dim) // side
    out = np.zeros((3, dim))
    out[0, rows < side // 2] = 1.0
    out[1, rows >= side // 2] = 1.0
    layers = [
        FlattenLayer(),
        DenseLayer(np.eye(dim), np.full(dim, -DETECTOR_THRESHOLD)),
        ReluLayer(),
        DenseLayer(out, np.array([0.0, 0.0, DETECTOR_NONE])),
    ]
    return Network(layers, (1, side, side))


def top_ranked(
    amap: DAttributionMap, boxes: tuple[DBoundingBox, DBoundingBox]
) -> DBoundingBox:
    """Get the box with the larger attribution sum, ties to the first.

    :param amap: attribution map
    :param boxes: candidate boxes
    """
    pix = pixel_map(amap.values)
    sums = [float(pix.values[pix.box_mask(b)].sum()) for b in boxes]
    return boxes[0] if sums[0] >= sums[1] else boxes[1]


def mask_box(x: "Tensor", box: DBoundingBox, level: float) -> "Tensor":
    """Get a copy of an image with a box filled with a constant.

    :param x: (C, H, W) image
    :param box: box to fill
    :param level: fill value
    """
    out = x.copy()
    out[:, box.y_min : box.y_max, box.x_min : box.x_max] = level
    return out


def _score(
    net: Network,
    x: "Tensor",
    amap: DAttributionMap,
    boxes: tuple[DBoundingBox, DBoundingBox],
) -> dict[str, Any]:
    pix = pixel_map(amap.values)
    try:
        eg = energy_game(pix, boxes[0])
        undefined = False
    except UndefinedMetricError:
        eg, undefined = 0.0, True
    masked = mask_box(x, top_ranked(amap, boxes), GRAY)
    flip = net.predict(masked) != net.predict(x)
    return {
        "eg": eg,
        "eg_undefined": 1.0 if undefined else 0.0,
        "flip": 1.0 if flip else 0.0,
    }


def sensitivity_rows(
    net: Network,
    dataset: "ToyDataset",
    index: int,
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
) -> list[Row]:
    """Compare IG under both fixed baselines with BIG on one instance.

    :param net: network
    :param dataset: polarity dataset
    :param index: instance index
    :param configs: attack configurations
    :param ig_cfg: path discretization
    """
    assert dataset.boxes is not None and dataset.aux_boxes is not None
    x = dataset.inputs[index]
    if net.predict(x) != dataset.labels[index]:
        return [(v, STATUS_MISCLASSIFIED, {}) for v in VARIANTS]

    lo, hi = dataset.domain.clip
    boxes = (dataset.boxes[index], dataset.aux_boxes[index])
    black = integrated_gradients(net, x, np.full_like(x, lo), cfg=ig_cfg)
    white = integrated_gradients(net, x, np.full_like(x, hi), cfg=ig_cfg)
    rows: list[Row] = [
        ("ig_black", STATUS_OK, _score(net, x, black, boxes)),
        ("ig_white", STATUS_OK, _score(net, x, white, boxes)),
    ]

    boundary = find_boundary(net, dataset, index, configs)
    if not boundary.success:
        rows.append(("big", STATUS_NO_BOUNDARY, {}))
    else:
        big = boundary_integrated_gradients(net, x, boundary, ig_cfg)
        rows.append(("big", STATUS_OK, _score(net, x, big, boxes)))
    return rows


def run_baseline_sensitivity(
    net: Network,
    dataset: "ToyDataset",
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    threads: int = 1,
) -> DExperimentReport:
    """Run the baseline sensitivity study on a polarity dataset.

    The eg column is the energy game on the class patch, undefined values
    count as 0 and are flagged. The flip mean is the counterfactual flip
    rate. The summary entry big_vs_ig_white holds the share of instances
    where BIG has the larger energy game.

    :param net: network
    :param dataset: dataset with a distractor box per instance
    :param configs: attack configurations
    :param ig_cfg: path discretization
    :param threads: worker threads
    """
    if dataset.boxes is None or dataset.aux_boxes is None:
        raise PreconditionError("need class and distractor patch boxes")

    def work(_: int, index: int) -> list[Row]:
        return sensitivity_rows(net, dataset, index, configs, ig_cfg)

    pool: WorkerPool[int, list[Row]] = WorkerPool(work, threads)
    report = DExperimentReport("sensitivity", list(SENSITIVITY_COLUMNS))
    wins: list[float] = []
    for index, rows in enumerate(pool.map(list(range(len(dataset))))):
        by_variant = {}
        for variant, status, values in rows:
            report.add(instance_id(index), variant, status, **values)
            if status == STATUS_OK:
                by_variant[variant] = values["eg"]
        if "big" in by_variant:
            beat = by_variant["big"] > by_variant["ig_white"]
            wins.append(1.0 if beat else 0.0)

    report.summarize()
    share = sum(wins) / len(wins) if wins else None
    report.summary["big_vs_ig_white"] = {
        "eg": share,
        "eg_undefined": None,
        "flip": None,
    }
    return report
