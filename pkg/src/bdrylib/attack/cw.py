"""Module containing the Carlini-Wagner L2 attack."""

from typing import TYPE_CHECKING

import numpy as np

from bdrylib.attack.iattack import (
    DAttackConfig,
    DBoundaryResult,
    EAttackMethod,
    IAttack,
    clip_box,
    l2,
)
from bdrylib.logger import logger

if TYPE_CHECKING:
    from bdrylib.net import Network, Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
# step size when the config says adaptive
CW_DEFAULT_STEP = 1e-2


###############################################################################
# Class: CwAttack
###############################################################################


class CwAttack(IAttack):
    """CW-L2 with a fixed constant and zero confidence.

    Minimizes |d|^2 + c * max(f_label(x+d) - max_j f_j(x+d), 0) with Adam,
    iterates are clipped to the domain box. The closest successful iterate
    is returned.
    """

    @property
    def method(self) -> EAttackMethod:
        """Get the attack method."""
        return EAttackMethod.CW

    def _objective_grad(
        self,
        net: "Network",
        xk: "Tensor",
        delta: "Tensor",
        label: int,
        c: float,
    ) -> "Tensor":
        scores = net.forward(xk)
        others = np.delete(np.arange(scores.size), label)
        j = int(others[np.argmax(scores[others])])
        grad = 2.0 * delta
        if scores[label] - scores[j] > 0.0:
            g_out = np.zeros_like(scores)
            g_out[label] = c
            g_out[j] = -c
            grad = grad + net.vjp(xk[None], g_out[None])[0]
        return grad

    def _run(
        self, net: "Network", x: "Tensor", label: int, cfg: DAttackConfig
    ) -> DBoundaryResult:
        lr = cfg.step_size if cfg.step_size is not None else CW_DEFAULT_STEP
        delta = np.zeros_like(x)
        mt = np.zeros_like(x)
        vt = np.zeros_like(x)
        best: "Tensor | None" = None
        best_dist = np.inf
        xk = x

        for epoch in range(1, cfg.max_steps + 1):
            grad = self._objective_grad(net, xk, delta, label, cfg.cw_const)
            mt = ADAM_BETA1 * mt + (1 - ADAM_BETA1) * grad
            vt = ADAM_BETA2 * vt + (1 - ADAM_BETA2) * (grad * grad)
            corr = np.sqrt(1 - ADAM_BETA2**epoch) / (1 - ADAM_BETA1**epoch)
            delta = delta - lr * corr * mt / (np.sqrt(vt) + 1e-8)

            xk = clip_box(x + delta, cfg.clip)
            delta = xk - x
            if net.predict(xk) != label:
                dist = l2(xk, x)
                if dist < best_dist:
                    best, best_dist = xk.copy(), dist

        if best is None:
            return DBoundaryResult(xk, l2(xk, x), False, "cw", label)

        logger.debug("cw success at distance %g", best_dist)
        return DBoundaryResult(best, best_dist, True, "cw", label)


def cw_attack(
    net: "Network", x: "Tensor", cfg: DAttackConfig, label: int | None = None
) -> DBoundaryResult:
    """Run the CW-L2 attack.

    :param net: network
    :param x: input
    :param cfg: attack configuration
    :param label: class to move away from, default the prediction at x
    """
    return CwAttack().run(net, x, cfg, label)
