"""Module containing helpers shared by the experiments."""

from dataclasses import replace
from typing import TYPE_CHECKING

from bdrylib import sampler
from bdrylib.attack.search import boundary_search_ensemble
from bdrylib.errors import InputShapeError, PreconditionError
from bdrylib.metrics import DPixelAttribution

if TYPE_CHECKING:
    from bdrylib.attack.iattack import DAttackConfig, DBoundaryResult
    from bdrylib.experiments.dataset import ToyDataset
    from bdrylib.net import Network, Tensor


def instance_id(index: int) -> str:
    """Get the report id of a dataset instance."""
    return f"{index:04d}"


def instance_configs(
    configs: "list[DAttackConfig]",
    index: int,
    clip: tuple[float, float] | None,
) -> "list[DAttackConfig]":
    """Get attack configurations with per-instance seeds and a domain box.

    :param configs: attack configurations
    :param index: instance index
    :param clip: input domain box
    """
    return [
        replace(cfg, seed=sampler.derive_seed(cfg.seed, index), clip=clip)
        for cfg in configs
    ]


def find_boundary(
    net: "Network",
    dataset: "ToyDataset",
    index: int,
    configs: "list[DAttackConfig]",
) -> "DBoundaryResult":
    """Run the boundary search ensemble on one dataset instance.

    :param net: network
    :param dataset: dataset holding the instance
    :param index: instance index
    :param configs: attack configurations
    """
    cfgs = instance_configs(configs, index, dataset.domain.clip)
    return boundary_search_ensemble(net, dataset.inputs[index], cfgs)


def pixel_map(values: "Tensor") -> DPixelAttribution:
    """Reduce an image attribution to one value per pixel.

    :param values: (H, W) or (C, H, W) attribution values
    """
    if values.ndim not in (2, 3):
        raise InputShapeError("pixel metrics need image shaped inputs")
    return DPixelAttribution.from_values(values)


def require_boxes(dataset: "ToyDataset") -> None:
    """Check that a dataset carries bounding boxes."""
    if dataset.boxes is None:
        raise PreconditionError(f"{dataset.name} has no bounding boxes")
