"""Module containing the attribution alignment experiment.

For every correctly classified instance the distances between SM and BSM,
IG and AGI, IG and BIG are recorded. Robust networks are expected to show
smaller distances.
"""

from typing import TYPE_CHECKING, Any

from bdrylib.attribution import (
    DAgiConfig,
    EAttrMethod,
    IGConfig,
    attribute,
)
from bdrylib.experiments.common import find_boundary, instance_id
from bdrylib.experiments.report import (
    STATUS_MISCLASSIFIED,
    STATUS_NO_BOUNDARY,
    STATUS_OK,
    DExperimentReport,
)
from bdrylib.metrics import attribution_l2_distance
from bdrylib.thread import WorkerPool

if TYPE_CHECKING:
    from bdrylib.attack.iattack import DAttackConfig
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Network

ALIGNMENT_COLUMNS = ["sm_bsm", "ig_agi", "ig_big", "distance"]


def alignment_row(
    net: "Network",
    dataset: "ToyDataset",
    index: int,
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
) -> tuple[str, dict[str, Any]]:
    """Get the status and the alignment values of one instance.

    :param net: network
    :param dataset: evaluation data
    :param index: instance index
    :param configs: attack configurations
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    """
    x = dataset.inputs[index]
    if net.predict(x) != dataset.labels[index]:
        return STATUS_MISCLASSIFIED, {}
    boundary = find_boundary(net, dataset, index, configs)
    if not boundary.success:
        return STATUS_NO_BOUNDARY, {}

    def attr(method: EAttrMethod) -> Any:
        return attribute(
            net,
            x,
            method,
            boundary,
            ig_cfg=ig_cfg,
            agi_cfg=agi_cfg,
            clip=dataset.domain.clip,
        )

    ig = attr(EAttrMethod.IG)
    return STATUS_OK, {
        "sm_bsm": attribution_l2_distance(
            attr(EAttrMethod.SM), attr(EAttrMethod.BSM)
        ),
        "ig_agi": attribution_l2_distance(ig, attr(EAttrMethod.AGI)),
        "ig_big": attribution_l2_distance(ig, attr(EAttrMethod.BIG)),
        "distance": boundary.distance,
    }


def run_alignment(
    nets: "list[tuple[str, Network]]",
    dataset: "ToyDataset",
    configs: "list[DAttackConfig]",
    ig_cfg: IGConfig | None = None,
    agi_cfg: DAgiConfig | None = None,
    threads: int = 1,
) -> DExperimentReport:
    """Compare attributions with their boundary variants on several nets.

    Rows use the network tag as method, the summary holds means per net.

    :param nets: tagged networks
    :param dataset: evaluation data
    :param configs: attack configurations
    :param ig_cfg: path discretization of IG and BIG
    :param agi_cfg: AGI parameters
    :param threads: worker threads
    """
    report = DExperimentReport("alignment", list(ALIGNMENT_COLUMNS))
    for tag, net in nets:

        def work(
            _: int, index: int, net: "Network" = net
        ) -> tuple[str, dict[str, Any]]:
            return alignment_row(
                net, dataset, index, configs, ig_cfg, agi_cfg
            )

        pool: WorkerPool[int, tuple[str, dict[str, Any]]] = WorkerPool(
            work, threads
        )
        results = pool.map(list(range(len(dataset))))
        for index, (status, values) in enumerate(results):
            report.add(instance_id(index), tag, status, **values)

    report.summarize()
    return report
