"""Module containing the boundary search ensemble."""

from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from bdrylib.attack.apgd import AutoPgdAttack
from bdrylib.attack.cw import CwAttack
from bdrylib.attack.iattack import (
    DAttackConfig,
    DBoundaryResult,
    EApgdLoss,
    EAttackMethod,
    ENorm,
    IAttack,
    l2,
)
from bdrylib.attack.pgd import PgdAttack
from bdrylib.config import format_value, parse_lines, split_blocks
from bdrylib.errors import (
    ConfigError,
    NoBoundaryError,
    PreconditionError,
    SameLabelError,
)
from bdrylib.logger import logger

if TYPE_CHECKING:
    from bdrylib.net import Network, Tensor

# bisection stops when the segment parameter interval is this narrow
REFINE_TOL = 1e-5

Clip = tuple[float, float] | None

_ATTACKS: dict[EAttackMethod, IAttack] = {
    EAttackMethod.PGD: PgdAttack(),
    EAttackMethod.CW: CwAttack(),
    EAttackMethod.AUTOPGD: AutoPgdAttack(),
}


def run_attack(
    net: "Network", x: "Tensor", cfg: DAttackConfig, label: int | None = None
) -> DBoundaryResult:
    """Run the attack selected by a configuration.

    :param net: network
    :param x: input
    :param cfg: attack configuration
    :param label: class to move away from, default the prediction at x
    """
    return _ATTACKS[cfg.method].run(net, x, cfg, label)


def bisect_segment(
    net: "Network", x: "Tensor", x_adv: "Tensor", label: int
) -> tuple[float, float]:
    """Bisect the label change on the segment x + t (x_adv - x).

    :return: (lo, hi) with label kept at lo and changed at hi
    """
    if net.predict(x_adv) == label:
        raise SameLabelError("both segment ends have the same label")

    lo, hi = 0.0, 1.0
    direction = x_adv - x
    while hi - lo > REFINE_TOL:
        mid = 0.5 * (lo + hi)
        if net.predict(x + mid * direction) == label:
            lo = mid
        else:
            hi = mid
    return lo, hi


def refine_to_boundary(
    net: "Network", x: "Tensor", x_adv: "Tensor", label: int | None = None
) -> "Tensor":
    """Bisect the segment [x, x_adv] onto the decision boundary.

    The returned point is the adversarial end of the final interval, its
    distance to x never exceeds the one of x_adv.

    :param net: network
    :param x: input
    :param x_adv: adversarial point
    :param label: class at x, default the prediction at x
    """
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if label is None:
        label = net.predict(x)

    _, hi = bisect_segment(net, x, x_adv, label)
    if hi == 1.0:
        return x_adv
    return x + hi * (x_adv - x)  # type: ignore


def boundary_normal(net: "Network", result: DBoundaryResult) -> "Tensor":
    """Get the gradient of the original class score at the boundary point.

    :param net: network
    :param result: successful boundary search result
    """
    if not result.success:
        raise NoBoundaryError(f"{result.method} found no boundary")
    if result.normal is not None:
        return result.normal
    return net.input_gradient(result.adversarial, result.label)


def _finalize(
    net: "Network", x: "Tensor", res: DBoundaryResult
) -> DBoundaryResult:
    """Refine a successful result and attach its normal."""
    adv = res.adversarial
    if res.distance > 0.0:
        adv = refine_to_boundary(net, x, adv, res.label)
    normal = net.input_gradient(adv, res.label)
    return DBoundaryResult(
        adv,
        l2(adv, x),
        True,
        res.method,
        res.label,
        normal=normal,
        refined=res.distance > 0.0,
        meta=dict(res.meta),
    )


def boundary_search_ensemble(
    net: "Network",
    x: "Tensor",
    configs: list[DAttackConfig],
    label: int | None = None,
) -> DBoundaryResult:
    """Run every attack and keep the closest refined adversarial example.

    Without any success the last iterate of the first attack is returned.

    :param net: network
    :param x: input
    :param configs: attack configurations, the first one is the fallback
    :param label: class to move away from, default the prediction at x
    """
    if not configs:
        raise PreconditionError("boundary search needs at least one attack")

    x = np.asarray(x, dtype=np.float64)
    if label is None:
        label = net.predict(x)

    first: DBoundaryResult | None = None
    best: DBoundaryResult | None = None
    distances: dict[str, float] = {}
    for i, cfg in enumerate(configs):
        res = run_attack(net, x, cfg, label)
        if first is None:
            first = res
        if not res.success:
            logger.debug("attack %d (%s) failed", i, res.method)
            continue
        res = _finalize(net, x, res)
        distances[f"{i}:{res.method}"] = res.distance
        if best is None or res.distance < best.distance:
            best = res

    assert first is not None
    if best is None:
        return first

    meta = dict(best.meta)
    meta["members"] = distances
    return DBoundaryResult(
        best.adversarial,
        best.distance,
        True,
        best.method,
        best.label,
        normal=best.normal,
        refined=best.refined,
        meta=meta,
    )


###############################################################################
# Attack configuration files
###############################################################################

_ATTACK_KEYS = {
    "method",
    "norm",
    "epsilons",
    "max_steps",
    "step_size",
    "loss",
    "seed",
    "random_start",
    "clip",
    "cw_const",
}


def _as_tuple(value: Any) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return (float(value),)


def attack_config_from_dict(block: dict[str, Any]) -> DAttackConfig:
    """Build an attack configuration from parsed key/value pairs.

    :param block: parsed values of one attack block
    """
    unknown = set(block) - _ATTACK_KEYS
    if unknown:
        raise ConfigError(f"unknown attack keys: {sorted(unknown)}")

    try:
        params: dict[str, Any] = {"method": EAttackMethod(block["method"])}
        if "norm" in block:
            params["norm"] = ENorm(block["norm"])
        if block.get("loss") is not None:
            params["loss"] = EApgdLoss(block["loss"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid attack block: {exc}") from exc

    if "epsilons" in block:
        params["epsilons"] = _as_tuple(block["epsilons"])
    step = block.get("step_size")
    if step is not None and step != "adaptive":
        params["step_size"] = float(step)
    if "clip" in block:
        clip = block["clip"]
        params["clip"] = None if clip is None else _as_tuple(clip)
    for key in ("max_steps", "seed"):
        if key in block:
            params[key] = int(block[key])
    if "random_start" in block:
        params["random_start"] = bool(block["random_start"])
    if "cw_const" in block:
        params["cw_const"] = float(block["cw_const"])
    return DAttackConfig(**params)


def parse_attack_configs(
    text: str, source: str = "<text>"
) -> list[DAttackConfig]:
    """Parse attack blocks, every method line starts a new block.

    :param text: file contents
    :param source: name used in error messages
    """
    return [
        attack_config_from_dict(block)
        for block in split_blocks(parse_lines(text, source))
    ]


def format_attack_configs(configs: list[DAttackConfig]) -> str:
    """Format attack configurations so that parsing reads them back.

    :param configs: attack configurations
    """
    lines: list[str] = []
    for cfg in configs:
        step = "adaptive" if cfg.step_size is None else cfg.step_size
        lines += [
            f"method = {cfg.method.value}",
            f"norm = {cfg.norm.value}",
            f"epsilons = {format_value(list(cfg.epsilons))}",
            f"max_steps = {cfg.max_steps}",
            f"step_size = {format_value(step)}",
            f"loss = {cfg.loss.value if cfg.loss else 'none'}",
            f"seed = {cfg.seed}",
            f"random_start = {format_value(cfg.random_start)}",
            f"clip = {format_value(cfg.clip)}",
            f"cw_const = {format_value(cfg.cw_const)}",
            "",
        ]
    return "\n".join(lines)


def _preset(
    pgd_eps: tuple[float, ...],
    pgd_step: float | None,
    cw: tuple[float, float],
    apgd: tuple[float, float],
    clip: Clip,
    seed: int,
) -> list[DAttackConfig]:
    return [
        DAttackConfig(
            EAttackMethod.PGD,
            epsilons=pgd_eps,
            step_size=pgd_step,
            seed=seed,
            clip=clip,
        ),
        DAttackConfig(
            EAttackMethod.CW,
            epsilons=(cw[0],),
            step_size=cw[1],
            seed=seed,
            clip=clip,
        ),
        DAttackConfig(
            EAttackMethod.AUTOPGD,
            epsilons=(apgd[0],),
            step_size=apgd[1],
            seed=seed,
            clip=clip,
        ),
    ]


PRESETS = (
    "cifar-std",
    "cifar-robust",
    "imagenet-std",
    "imagenet-robust",
    "toy",
)


def attack_presets(
    name: str, clip: Clip = (0.0, 1.0), seed: int = 0
) -> list[DAttackConfig]:
    """Get a named PGD, CW and AutoPGD pipeline.

    :param name: one of PRESETS
    :param clip: input domain box
    :param seed: attack seed
    """
    if name == "cifar-std":
        return _preset(
            (0.2, 0.4, 0.6, 0.8, 1.0),
            5e-3,
            (1.0, 1e-3),
            (1.0, 6e-3),
            clip,
            seed,
        )
    if name == "cifar-robust":
        return _preset(
            (0.25, 0.5, 1.0, 1.5, 2.0),
            5e-3,
            (2.0, 1e-3),
            (2.0, 1.6e-2),
            clip,
            seed,
        )
    if name == "imagenet-std":
        return _preset(
            (36 / 255, 64 / 255, 0.3, 0.5, 0.7, 0.9, 1.1),
            None,
            (1.0, 1e-2),
            (1.1, 2.3e-2),
            clip,
            seed,
        )
    if name == "imagenet-robust":
        return _preset(
            (1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
            None,
            (6.0, 5e-2),
            (6.0, 1.2e-1),
            clip,
            seed,
        )
    if name == "toy":
        return _preset(
            (0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2),
            None,
            (3.2, 1e-2),
            (3.2, 1.6e-1),
            clip,
            seed,
        )
    raise ConfigError(f"unknown attack preset '{name}', use one of {PRESETS}")


def load_attack_configs(
    spec: str, clip: Clip = (0.0, 1.0), seed: int = 0
) -> list[DAttackConfig]:
    """Get attack configurations from a preset name or a file.

    :param spec: preset name or attack configuration file path
    :param clip: input domain box used by presets
    :param seed: attack seed used by presets
    """
    if spec in PRESETS:
        return attack_presets(spec, clip, seed)
    path = Path(spec)
    return parse_attack_configs(path.read_text(), str(path))
