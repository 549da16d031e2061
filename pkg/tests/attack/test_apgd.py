import numpy as np
import pytest  # type: ignore

from bdrylib.attack.apgd import AutoPgdAttack, autopgd_attack, checkpoints
from bdrylib.attack.iattack import (
    DAttackConfig,
    EApgdLoss,
    EAttackMethod,
    ENorm,
)

X = np.array([0.6, 0.2])
DIST = 0.4 / np.sqrt(2.0)


def test_apgd_checkpoints():
    ckpts = checkpoints(100)
    assert len(ckpts) == 8
    assert ckpts == sorted(ckpts)
    assert ckpts[0] in (22, 23)
    assert all(0 < c <= 100 for c in ckpts)

    assert checkpoints(0) == [0]


@pytest.mark.parametrize("loss", [None, EApgdLoss.CE, EApgdLoss.DLR])
def test_apgd_attack(diag_net, loss):
    cfg = DAttackConfig(
        EAttackMethod.AUTOPGD, epsilons=(0.5,), loss=loss, clip=None
    )
    res = autopgd_attack(diag_net, X, cfg)
    assert res.success is True
    assert res.method == "autopgd"
    assert res.meta["eps"] == 0.5
    assert res.meta["loss"] in ("ce", "dlr")
    if loss is not None:
        assert res.meta["loss"] == loss.value
    assert DIST <= res.distance <= 0.5 + 1e-9
    assert diag_net.predict(res.adversarial) == 1


def test_apgd_attack_sweep(diag_net):
    cfg = DAttackConfig(
        EAttackMethod.AUTOPGD,
        norm=ENorm.LINF,
        epsilons=(0.1, 0.3),
        max_steps=20,
        clip=(0.0, 1.0),
    )
    res = AutoPgdAttack().run(diag_net, X, cfg)
    assert res.success is True
    assert res.meta["eps"] == 0.3
    assert np.all(np.abs(res.adversarial - X) <= 0.3 + 1e-12)


def test_apgd_attack_fail(diag_net):
    cfg = DAttackConfig(EAttackMethod.AUTOPGD, epsilons=(0.1,), clip=None)
    res = autopgd_attack(diag_net, X, cfg)
    assert res.success is False
    assert res.distance <= 0.1 + 1e-9

    cfg = DAttackConfig(EAttackMethod.AUTOPGD, max_steps=0)
    res = autopgd_attack(diag_net, X, cfg)
    assert res.success is False
    assert res.distance == 0.0
