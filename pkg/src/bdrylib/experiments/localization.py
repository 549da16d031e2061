"""Module containing the bounding box localization experiment."""

from typing import TYPE_CHECKING, Any

from bdrylib.attribution import (
    DAgiConfig,
    DAttributionMap,
    EAttrMethod,
    IGConfig,
    attribute,
)
from bdrylib.errors import UndefinedMetricError
from bdrylib.experiments.common import (
    find_boundary,
    instance_id,
    pixel_map,
    require_boxes,
)
from bdrylib.experiments.report import (
    STATUS_MISCLASSIFIED,
    STATUS_NO_BOUNDARY,
    STATUS_OK,
    STATUS_UNDEFINED,
    DExperimentReport,
)
from bdrylib.metrics import (
    DBoundingBox,
    concentration,
    energy_game,
    localization,
    positive_percentage,
)
from bdrylib.thread import WorkerPool

if TYPE_CHECKING:
    from bdrylib.attack.iattack import DAttackConfig
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Network

METRIC_COLUMNS = ["loc", "eg", "pp", "con"]

_METRICS = {
    "loc": localization,
    "eg": energy_game,
    "pp": positive_percentage,
    "con": concentration,
}

Row = tuple[str, str, dict[str, Any]]


def score_map(
    amap: DAttributionMap, box: DBoundingBox
) -> tuple[str, dict[str, float | None]]:
    """Get the four box metrics of a map, undefined ones are None.

    :param amap: image attribution map
    :param box: bounding box
    """
    pix = pixel_map(amap.values)
    values: dict[str, float | None] = {}
    status = STATUS_OK
    for key, metric in _METRICS.items():
        try:
            values[key] = metric(pix, box)
        except UndefinedMetricError:
            values[key] = None
            status = STATUS_UNDEFINED
    return status, values


def localization_rows(
    net: "Network",
    dataset: "ToyDataset",
    index: int,
    methods: list[EAttrMethod],
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
    seed: int = 0,
    sg_sigma: float = 0.15,
    sg_samples: int = 50,
) -> list[Row]:
    """Score every method on one instance.

    :param net: network
    :param dataset: evaluation data with boxes
    :param index: instance index
    :param methods: attribution methods
    :param configs: attack configurations
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    :param seed: SmoothGrad seed
    :param sg_sigma: SmoothGrad noise standard deviation
    :param sg_samples: SmoothGrad sample count
    """
    assert dataset.boxes is not None
    x = dataset.inputs[index]
    if net.predict(x) != dataset.labels[index]:
        return [(m.value, STATUS_MISCLASSIFIED, {}) for m in methods]

    boundary = None
    if any(m.needs_boundary for m in methods):
        boundary = find_boundary(net, dataset, index, configs)

    rows: list[Row] = []
    for m in methods:
        if m.needs_boundary and not (boundary and boundary.success):
            rows.append((m.value, STATUS_NO_BOUNDARY, {}))
            continue
        amap = attribute(
            net,
            x,
            m,
            boundary,
            ig_cfg=ig_cfg,
            agi_cfg=agi_cfg,
            sg_sigma=sg_sigma,
            sg_samples=sg_samples,
            seed=seed,
            clip=dataset.domain.clip,
        )
        status, values = score_map(amap, dataset.boxes[index])
        rows.append((m.value, status, values))
    return rows


def run_localization(
    net: "Network",
    dataset: "ToyDataset",
    methods: list[EAttrMethod],
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
    seed: int = 0,
    threads: int = 1,
    sg_sigma: float = 0.15,
    sg_samples: int = 50,
) -> DExperimentReport:
    """Score attribution methods against the dataset bounding boxes.

    Rows with an undefined metric are flagged and left out of the means.

    :param net: network
    :param dataset: evaluation data with boxes
    :param methods: attribution methods
    :param configs: attack configurations
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    :param seed: SmoothGrad seed
    :param threads: worker threads
    :param sg_sigma: SmoothGrad noise standard deviation
    :param sg_samples: SmoothGrad sample count
    """
    require_boxes(dataset)

    def work(_: int, index: int) -> list[Row]:
        return localization_rows(
            net,
            dataset,
            index,
            methods,
            configs,
            ig_cfg,
            agi_cfg,
            seed,
            sg_sigma,
            sg_samples,
        )

    pool: WorkerPool[int, list[Row]] = WorkerPool(work, threads)
    report = DExperimentReport("localization", list(METRIC_COLUMNS))
    for index, rows in enumerate(pool.map(list(range(len(dataset))))):
        for method, status, values in rows:
            report.add(instance_id(index), method, status, **values)

    report.summarize()
    return report
