"""Module containing the AutoPGD attack."""

import math
from typing import TYPE_CHECKING

import numpy as np

from bdrylib.attack.iattack import (
    DAttackConfig,
    DBoundaryResult,
    EApgdLoss,
    EAttackMethod,
    IAttack,
    ce_loss_grad,
    clip_box,
    dlr_loss_grad,
    l2,
    project,
    step_dir,
)
from bdrylib.attack.pgd import random_start
from bdrylib.logger import logger

if TYPE_CHECKING:
    from collections.abc import Callable

    from bdrylib.net import Network, Tensor

    LossGrad = Callable[[Network, Tensor, int], tuple[float, Tensor]]

APGD_MOMENTUM = 0.75
APGD_RHO = 0.75


def checkpoints(max_steps: int) -> list[int]:
    """Get the iterations where the step size may be halved.

    :param max_steps: iteration budget
    """
    p = [0.0, 0.22]
    while True:
        nxt = p[-1] + max(p[-1] - p[-2] - 0.03, 0.06)
        if nxt > 1.0:
            break
        p.append(nxt)
    return sorted({math.ceil(pj * max_steps) for pj in p[1:]})


###############################################################################
# Class: AutoPgdAttack
###############################################################################


class AutoPgdAttack(IAttack):
    """AutoPGD with momentum and checkpoint step halving, no restarts.

    Every radius of the sweep is tried smallest first. For one radius the
    configured loss is used, or ce and dlr both when none is set, and the
    closer success wins.
    """

    @property
    def method(self) -> EAttackMethod:
        """Get the attack method."""
        return EAttackMethod.AUTOPGD

    def _one_run(
        self,
        net: "Network",
        x: "Tensor",
        label: int,
        cfg: DAttackConfig,
        eps: float,
        lossgrad: "LossGrad",
    ) -> tuple["Tensor", "Tensor | None"]:
        """Run one AutoPGD descent.

        :return: last iterate and closest adversarial iterate, if any
        """
        eta = cfg.step_size if cfg.step_size is not None else 2.0 * eps
        ckpts = set(checkpoints(cfg.max_steps))

        def proj(z: "Tensor") -> "Tensor":
            return clip_box(x + project(z - x, eps, cfg.norm), cfg.clip)

        closest: "Tensor | None" = None
        closest_dist = np.inf

        def record(z: "Tensor") -> None:
            nonlocal closest, closest_dist
            if net.predict(z) != label and l2(z, x) < closest_dist:
                closest, closest_dist = z.copy(), l2(z, x)

        x_prev = x.copy()
        if cfg.random_start:
            x_prev = proj(random_start(x, eps, cfg.norm, cfg.seed))
        loss, grad = lossgrad(net, x_prev, label)
        best, best_loss, best_grad = x_prev, loss, grad

        xk = proj(x_prev + eta * step_dir(grad, cfg.norm))
        record(xk)
        loss_prev = loss
        loss, grad = lossgrad(net, xk, label)
        increases = int(loss > loss_prev)
        if loss > best_loss:
            best, best_loss, best_grad = xk, loss, grad

        last_ckpt = 0
        best_loss_ckpt = best_loss
        reduced = False
        for k in range(1, cfg.max_steps):
            z = proj(xk + eta * step_dir(grad, cfg.norm))
            moved = APGD_MOMENTUM * (z - xk) + (1 - APGD_MOMENTUM) * (
                xk - x_prev
            )
            x_prev, xk = xk, proj(xk + moved)
            record(xk)

            loss_prev = loss
            loss, grad = lossgrad(net, xk, label)
            increases += int(loss > loss_prev)
            if loss > best_loss:
                best, best_loss, best_grad = xk, loss, grad

            if k in ckpts:
                oscillating = increases < APGD_RHO * (k - last_ckpt)
                stalled = not reduced and best_loss_ckpt >= best_loss
                reduced = oscillating or stalled
                if reduced:
                    eta /= 2.0
                    xk, x_prev, grad = best, best, best_grad
                increases = 0
                last_ckpt = k
                best_loss_ckpt = best_loss

        return xk, closest

    def _run(
        self, net: "Network", x: "Tensor", label: int, cfg: DAttackConfig
    ) -> DBoundaryResult:
        if cfg.max_steps == 0:
            return DBoundaryResult(x.copy(), 0.0, False, "autopgd", label)

        losses = [cfg.loss] if cfg.loss else [EApgdLoss.CE, EApgdLoss.DLR]
        last = x
        for eps in cfg.epsilons:
            found: list[tuple[float, "Tensor", str]] = []
            for loss in losses:
                func = ce_loss_grad if loss is EApgdLoss.CE else dlr_loss_grad
                last, adv = self._one_run(net, x, label, cfg, eps, func)
                if adv is not None:
                    found.append((l2(adv, x), adv, loss.value))
            if found:
                dist, adv, tag = min(found, key=lambda f: f[0])
                logger.debug("autopgd-%s success at eps=%g", tag, eps)
                return DBoundaryResult(
                    adv,
                    dist,
                    True,
                    "autopgd",
                    label,
                    meta={"eps": eps, "loss": tag},
                )

        return DBoundaryResult(last, l2(last, x), False, "autopgd", label)


def autopgd_attack(
    net: "Network", x: "Tensor", cfg: DAttackConfig, label: int | None = None
) -> DBoundaryResult:
    """Run the AutoPGD attack.

    :param net: network
    :param x: input
    :param cfg: attack configuration
    :param label: class to move away from, default the prediction at x
    """
    return AutoPgdAttack().run(net, x, cfg, label)
