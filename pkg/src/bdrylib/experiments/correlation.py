"""Module containing the alignment and localization correlation study."""

import math
from typing import TYPE_CHECKING, Any

from bdrylib.attribution import (
    DAgiConfig,
    EAttrMethod,
    IGConfig,
    attribute,
)
from bdrylib.errors import PreconditionError, UndefinedMetricError
from bdrylib.experiments.common import (
    find_boundary,
    instance_id,
    require_boxes,
)
from bdrylib.experiments.localization import METRIC_COLUMNS, score_map
from bdrylib.experiments.report import (
    STATUS_MISCLASSIFIED,
    STATUS_NO_BOUNDARY,
    STATUS_OK,
    DExperimentReport,
)
from bdrylib.logger import logger
from bdrylib.metrics import attribution_l2_distance, pearson_correlation
from bdrylib.thread import WorkerPool

if TYPE_CHECKING:
    from collections.abc import Sequence

    from bdrylib.attack.iattack import DAttackConfig
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Network

# (pair tag, scored method, its boundary counterpart)
PAIRS = (
    ("sm_bsm", EAttrMethod.SM, EAttrMethod.BSM),
    ("ig_agi", EAttrMethod.IG, EAttrMethod.AGI),
    ("ig_big", EAttrMethod.IG, EAttrMethod.BIG),
)
MIN_INSTANCES = 3

Row = tuple[str, str, dict[str, Any]]


def correlate(
    alignment: "Sequence[float]",
    scores: "dict[str, Sequence[float | None]]",
) -> dict[str, float | None]:
    """Get the Pearson coefficient of the alignment with every score column.

    Instances with an undefined score are dropped from that column, columns
    with zero variance or fewer than two pairs give None.

    :param alignment: alignment values, larger is better aligned
    :param scores: score columns by name
    """
    out: dict[str, float | None] = {}
    for key, col in scores.items():
        pairs = [(a, s) for a, s in zip(alignment, col) if s is not None]
        if len(pairs) < 2:
            out[key] = None
            continue
        try:
            out[key] = pearson_correlation(
                [a for a, _ in pairs], [s for _, s in pairs]
            )
        except UndefinedMetricError:
            logger.info("correlation of %s omitted, zero variance", key)
            out[key] = None
    return out


def correlation_rows(
    net: "Network",
    dataset: "ToyDataset",
    index: int,
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
) -> list[Row]:
    """Get the alignment and localization scores of one instance per pair.

    :param net: network
    :param dataset: evaluation data with boxes
    :param index: instance index
    :param configs: attack configurations
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    """
    assert dataset.boxes is not None
    x = dataset.inputs[index]
    if net.predict(x) != dataset.labels[index]:
        return [(tag, STATUS_MISCLASSIFIED, {}) for tag, _, _ in PAIRS]
    boundary = find_boundary(net, dataset, index, configs)
    if not boundary.success:
        return [(tag, STATUS_NO_BOUNDARY, {}) for tag, _, _ in PAIRS]

    maps = {
        m: attribute(
            net,
            x,
            m,
            boundary,
            ig_cfg=ig_cfg,
            agi_cfg=agi_cfg,
            clip=dataset.domain.clip,
        )
        for m in (
            EAttrMethod.SM,
            EAttrMethod.BSM,
            EAttrMethod.IG,
            EAttrMethod.AGI,
            EAttrMethod.BIG,
        )
    }
    rows: list[Row] = []
    for tag, scored, other in PAIRS:
        _, values = score_map(maps[scored], dataset.boxes[index])
        align = -attribution_l2_distance(maps[scored], maps[other])
        rows.append((tag, STATUS_OK, dict(values, align=align)))
    return rows


def run_correlation(
    net: "Network",
    dataset: "ToyDataset",
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
    threads: int = 1,
) -> DExperimentReport:
    """Correlate attribution alignment with localization quality.

    The summary holds, per pair, the mean alignment and one Pearson
    coefficient per metric, None where it is undefined.

    :param net: network
    :param dataset: evaluation data with boxes
    :param configs: attack configurations
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    :param threads: worker threads
    """
    require_boxes(dataset)

    def work(_: int, index: int) -> list[Row]:
        return correlation_rows(
            net, dataset, index, configs, ig_cfg, agi_cfg
        )

    pool: WorkerPool[int, list[Row]] = WorkerPool(work, threads)
    report = DExperimentReport("correlation", ["align"] + METRIC_COLUMNS)
    for index, rows in enumerate(pool.map(list(range(len(dataset))))):
        for tag, status, values in rows:
            report.add(instance_id(index), tag, status, **values)

    evaluated = report.counts(PAIRS[0][0])[0]
    if evaluated < MIN_INSTANCES:
        msg = f"correlation needs {MIN_INSTANCES} instances, got {evaluated}"
        raise PreconditionError(msg)

    for tag, _, _ in PAIRS:
        ok = [
            r
            for r in report.rows
            if r["method"] == tag and r["status"] == STATUS_OK
        ]
        align = [float(r["align"]) for r in ok]
        cols = {k: [r[k] for r in ok] for k in METRIC_COLUMNS}
        coef = correlate(align, cols)
        summary: dict[str, float | None] = {
            "align": math.fsum(align) / len(align)
        }
        summary.update(coef)
        report.summary[tag] = summary
    return report
