"""Module containing the projected gradient descent attack."""

from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt
from scipy.special import softmax  # type: ignore

from bdrylib import sampler
from bdrylib.attack.iattack import (
    DAttackConfig,
    DBoundaryResult,
    EAttackMethod,
    ENorm,
    IAttack,
    ce_loss_grad,
    clip_box,
    l2,
    project,
    step_dir,
)
from bdrylib.logger import logger

if TYPE_CHECKING:
    from bdrylib.net import Network, Tensor


def random_start(x: "Tensor", eps: float, norm: ENorm, seed: int) -> "Tensor":
    """Draw a uniform random point of the eps ball around x.

    :param x: ball center
    :param eps: ball radius
    :param norm: ball norm
    :param seed: sampler seed
    """
    if norm is ENorm.LINF:
        u = sampler.uniform(seed, x.shape)
        return x + (2.0 * u - 1.0) * eps

    direction = sampler.gaussian(seed, x.shape)
    direction /= np.linalg.norm(direction.reshape(-1)) + 1e-12
    radius = eps * sampler.uniform(seed + 1, (1,))[0] ** (1.0 / x.size)
    return x + radius * direction  # type: ignore


###############################################################################
# Class: PgdAttack
###############################################################################


class PgdAttack(IAttack):
    """PGD with an epsilon sweep, smallest radius first."""

    @property
    def method(self) -> EAttackMethod:
        """Get the attack method."""
        return EAttackMethod.PGD

    def _one_eps(
        self,
        net: "Network",
        x: "Tensor",
        label: int,
        cfg: DAttackConfig,
        eps: float,
    ) -> tuple["Tensor", bool]:
        alpha = cfg.step_for(eps)
        xk = x.copy()
        if cfg.random_start:
            xk = random_start(x, eps, cfg.norm, cfg.seed)
            xk = clip_box(x + project(xk - x, eps, cfg.norm), cfg.clip)

        for _ in range(cfg.max_steps):
            _, grad = ce_loss_grad(net, xk, label)
            if not np.any(grad):
                break
            xk = xk + alpha * step_dir(grad, cfg.norm)
            xk = clip_box(x + project(xk - x, eps, cfg.norm), cfg.clip)
            if net.predict(xk) != label:
                return xk, True

        return xk, False

    def _run(
        self, net: "Network", x: "Tensor", label: int, cfg: DAttackConfig
    ) -> DBoundaryResult:
        xk = x
        for eps in cfg.epsilons:
            xk, success = self._one_eps(net, x, label, cfg, eps)
            if success:
                logger.debug("pgd success at eps=%g", eps)
                return DBoundaryResult(
                    xk, l2(xk, x), True, "pgd", label, meta={"eps": eps}
                )

        return DBoundaryResult(
            xk,
            l2(xk, x),
            False,
            "pgd",
            label,
            meta={"eps": cfg.epsilons[-1]},
        )


def pgd_attack(
    net: "Network", x: "Tensor", cfg: DAttackConfig, label: int | None = None
) -> DBoundaryResult:
    """Run a PGD epsilon sweep.

    :param net: network
    :param x: input
    :param cfg: attack configuration
    :param label: class to move away from, default the prediction at x
    """
    return PgdAttack().run(net, x, cfg, label)


def pgd_perturb(
    net: "Network",
    xs: "Tensor",
    labels: npt.NDArray[np.int64],
    eps: float,
    norm: ENorm = ENorm.L2,
    steps: int = 10,
    clip: tuple[float, float] | None = None,
) -> "Tensor":
    """Get fixed-iteration PGD perturbations of a batch.

    Used as the inner maximization of adversarial training, every sample
    runs all steps.

    :param net: network
    :param xs: inputs with shape (N, *input_shape)
    :param labels: true labels
    :param eps: perturbation radius
    :param norm: perturbation norm
    :param steps: number of iterations
    :param clip: optional input domain box
    """
    alpha = 2.5 * eps / steps
    n = xs.shape[0]
    xk = xs.copy()
    for _ in range(steps):
        g_out = softmax(net.forward_batch(xk), axis=1)
        g_out[np.arange(n), labels] -= 1.0
        grad = net.vjp(xk, g_out)
        for i in range(n):
            delta = xk[i] + alpha * step_dir(grad[i], norm) - xs[i]
            xk[i] = clip_box(xs[i] + project(delta, eps, norm), clip)
    return xk
