"""Module containing the boundary search attack interface."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.special import logsumexp, softmax  # type: ignore

from bdrylib.errors import ConfigError

if TYPE_CHECKING:
    from bdrylib.net import Network, Tensor

###############################################################################
# Enum: EAttackMethod
###############################################################################


class EAttackMethod(Enum):
    """Boundary search methods."""

    PGD = "pgd"
    CW = "cw"
    AUTOPGD = "autopgd"


###############################################################################
# Enum: ENorm
###############################################################################


class ENorm(Enum):
    """Perturbation norms."""

    L2 = "l2"
    LINF = "linf"


###############################################################################
# Enum: EApgdLoss
###############################################################################


class EApgdLoss(Enum):
    """AutoPGD losses."""

    CE = "ce"
    DLR = "dlr"


###############################################################################
# Class: DAttackConfig
###############################################################################


@dataclass(frozen=True)
class DAttackConfig:
    """Configuration of one attack.

    step_size None means adaptive (2 * eps / max_steps), loss None runs
    AutoPGD with both losses, clip None disables domain clipping.
    """

    method: EAttackMethod
    norm: ENorm = ENorm.L2
    epsilons: tuple[float, ...] = (1.0,)
    max_steps: int = 100
    step_size: float | None = None
    loss: EApgdLoss | None = None
    seed: int = 0
    random_start: bool = False
    clip: tuple[float, float] | None = (0.0, 1.0)
    cw_const: float = 1.0

    def __post_init__(self) -> None:
        """Validate the configuration."""
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if not eps or any(e <= 0.0 for e in eps):
            raise ConfigError("epsilons must be positive and non-empty")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons must be strictly increasing")
        if self.max_steps < 0:
            raise ConfigError("max_steps must not be negative")
        if self.step_size is not None and self.step_size <= 0.0:
            raise ConfigError("step_size must be positive or adaptive")
        if self.clip is not None and not self.clip[0] < self.clip[1]:
            raise ConfigError("clip must be an increasing pair")
        if self.cw_const <= 0.0:
            raise ConfigError("cw_const must be positive")

    def step_for(self, eps: float) -> float:
        """Get the step size for a radius.

        :param eps: perturbation radius
        """
        if self.step_size is not None:
            return self.step_size
        return 2.0 * eps / max(self.max_steps, 1)

    def with_clip(self, clip: tuple[float, float] | None) -> "DAttackConfig":
        """Get a copy with a different clipping box."""
        return replace(self, clip=clip)


###############################################################################
# Class: DBoundaryResult
###############################################################################


@dataclass(frozen=True, eq=False)
class DBoundaryResult:
    """Outcome of a boundary search."""

    adversarial: "Tensor"
    distance: float
    success: bool
    method: str
    label: int
    normal: "Tensor | None" = None
    refined: bool = False
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Check the result invariants."""
        assert np.isfinite(self.distance)
        if self.normal is not None:
            assert np.all(np.isfinite(self.normal))


###############################################################################
# Class: IAttack
###############################################################################


class IAttack(ABC):
    """The boundary search attack interface."""

    @property
    @abstractmethod
    def method(self) -> EAttackMethod:
        """Get the attack method."""

    @abstractmethod
    def _run(
        self, net: "Network", x: "Tensor", label: int, cfg: DAttackConfig
    ) -> DBoundaryResult:
        """Run the attack on a correctly labeled input."""

    def run(
        self,
        net: "Network",
        x: "Tensor",
        cfg: DAttackConfig,
        label: int | None = None,
    ) -> DBoundaryResult:
        """Search an adversarial example moving away from a class.

        :param net: network
        :param x: input
        :param cfg: attack configuration
        :param label: class to move away from, default the prediction at x
        """
        assert cfg.method is self.method
        x = np.asarray(x, dtype=np.float64)
        pred = net.predict(x)
        if label is None:
            label = pred
        if pred != label:
            # already on the other side
            tag = self.method.value
            return DBoundaryResult(x.copy(), 0.0, True, tag, label)
        return self._run(net, x, label, cfg)


def l2(a: "Tensor", b: "Tensor") -> float:
    """Get the l2 distance between two points."""
    return float(np.linalg.norm((a - b).reshape(-1)))


def project(delta: "Tensor", eps: float, norm: ENorm) -> "Tensor":
    """Project a perturbation onto the eps ball."""
    if norm is ENorm.LINF:
        return np.clip(delta, -eps, eps)
    size = np.linalg.norm(delta.reshape(-1))
    if size > eps:
        return delta * (eps / size)  # type: ignore
    return delta


def clip_box(x: "Tensor", clip: tuple[float, float] | None) -> "Tensor":
    """Clip a point to the input domain box."""
    if clip is None:
        return x
    return np.clip(x, clip[0], clip[1])


def step_dir(grad: "Tensor", norm: ENorm) -> "Tensor":
    """Get the steepest ascent direction of unit norm."""
    if norm is ENorm.LINF:
        return np.sign(grad)
    size = np.linalg.norm(grad.reshape(-1))
    if size == 0.0:
        return np.zeros_like(grad)
    return grad / size  # type: ignore


def ce_loss_grad(
    net: "Network", x: "Tensor", label: int
) -> tuple[float, "Tensor"]:
    """Get the cross-entropy loss of a class and its input gradient."""
    scores = net.forward(x)
    loss = float(logsumexp(scores) - scores[label])
    g_out = softmax(scores)
    g_out[label] -= 1.0
    return loss, net.vjp(x[None], g_out[None])[0]


def dlr_loss_grad(
    net: "Network", x: "Tensor", label: int
) -> tuple[float, "Tensor"]:
    """Get the difference of logits ratio loss and its input gradient.

    With fewer than three classes the denominator is 1.
    """
    z = net.forward(x)
    order = np.argsort(-z, kind="stable")
    other = int(next(i for i in order if i != label))
    g_out = np.zeros_like(z)
    g_out[label] = -1.0
    g_out[other] = 1.0
    num = z[other] - z[label]
    if z.size < 3:
        return float(num), net.vjp(x[None], g_out[None])[0]

    den = z[order[0]] - z[order[2]] + 1e-12
    g_den = np.zeros_like(z)
    g_den[order[0]] = 1.0
    g_den[order[2]] = -1.0
    g_total = g_out / den - g_den * num / den**2
    return float(num / den), net.vjp(x[None], g_total[None])[0]
