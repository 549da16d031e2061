import numpy as np
import pytest  # type: ignore

from bdrylib.attack.iattack import DAttackConfig, EAttackMethod
from bdrylib.attribution import DAttributionMap, EAttrMethod
from bdrylib.errors import PreconditionError
from bdrylib.experiments.dataset import ToyDataset, synth_dataset
from bdrylib.experiments.localization import (
    METRIC_COLUMNS,
    localization_rows,
    run_localization,
    score_map,
)
from bdrylib.experiments.report import (
    STATUS_MISCLASSIFIED,
    STATUS_NO_BOUNDARY,
    STATUS_OK,
    STATUS_UNDEFINED,
)
from bdrylib.experiments.sensitivity import build_polarity_detector
from bdrylib.metrics import DBoundingBox

CONFIGS = [DAttackConfig(EAttackMethod.PGD, epsilons=(0.5, 1.0, 2.0))]
BOX = DBoundingBox(0, 0, 2, 2)


@pytest.fixture
def patches():
    return synth_dataset("patches8x8", 4, 0)


@pytest.fixture
def detector():
    return build_polarity_detector()


def test_localization_score_map():
    vals = np.zeros((1, 4, 4))
    vals[0, :2, :2] = 1.0
    amap = DAttributionMap(vals, EAttrMethod.SM, 0)
    status, values = score_map(amap, BOX)
    assert status == STATUS_OK
    assert values["loc"] == 1.0
    assert values["eg"] == 1.0
    assert values["pp"] == 1.0
    assert values["con"] == pytest.approx(1.0)

    zero = DAttributionMap(np.zeros((4, 4)), EAttrMethod.SM, 0)
    status, values = score_map(zero, BOX)
    assert status == STATUS_UNDEFINED
    assert values == {"loc": 0.0, "eg": None, "pp": None, "con": None}


def test_localization_rows(patches, detector):
    methods = [EAttrMethod.SM, EAttrMethod.GTI, EAttrMethod.IG]
    rows = localization_rows(detector, patches, 0, methods, CONFIGS)
    assert [r[0] for r in rows] == ["sm", "gti", "ig"]
    for _, status, values in rows:
        # the detector only looks at the bright patch
        assert status == STATUS_OK
        assert values["loc"] == 1.0
        assert values["eg"] == 1.0
        assert values["pp"] == 1.0


def test_localization_rows_boundary(patches, detector):
    methods = [EAttrMethod.SM, EAttrMethod.BSM, EAttrMethod.BIG]
    rows = localization_rows(detector, patches, 1, methods, CONFIGS)
    assert [r[1] for r in rows] == [STATUS_OK] * 3
    assert rows[2][2]["eg"] == pytest.approx(1.0)

    weak = [DAttackConfig(EAttackMethod.PGD, epsilons=(1e-3,))]
    rows = localization_rows(detector, patches, 1, methods, weak)
    assert [r[1] for r in rows] == [
        STATUS_OK,
        STATUS_NO_BOUNDARY,
        STATUS_NO_BOUNDARY,
    ]


def test_localization_misclassified(patches, detector):
    flipped = patches.subset([0])
    wrong = ToyDataset(
        flipped.name,
        flipped.inputs,
        1 - flipped.labels,
        flipped.domain,
        boxes=flipped.boxes,
    )
    rows = localization_rows(detector, wrong, 0, [EAttrMethod.SM], CONFIGS)
    assert rows == [("sm", STATUS_MISCLASSIFIED, {})]


def test_localization_run(patches, detector):
    methods = [EAttrMethod.SM, EAttrMethod.SG, EAttrMethod.BIG]
    report = run_localization(
        detector, patches, methods, CONFIGS, seed=1, threads=2
    )
    assert report.name == "localization"
    assert report.columns == METRIC_COLUMNS
    assert report.methods() == ["sm", "sg", "big"]
    assert len(report.rows) == 12
    assert report.summary["sm"]["eg"] == 1.0
    assert report.counts("sm") == (4, 0)

    with pytest.raises(PreconditionError):
        run_localization(
            detector, synth_dataset("blobs2d", 2, 0), methods, CONFIGS
        )


def test_localization_smoothgrad_noise(patches, detector):
    methods = [EAttrMethod.SG]
    narrow = run_localization(
        detector, patches, methods, CONFIGS, sg_sigma=0.01, sg_samples=8
    )
    wide = run_localization(
        detector, patches, methods, CONFIGS, sg_sigma=1.0, sg_samples=8
    )
    # small noise keeps every active unit inside the bright patch
    assert narrow.summary["sg"]["eg"] == 1.0
    assert wide.summary["sg"]["eg"] < 1.0
    assert narrow.rows != wide.rows

    rows = localization_rows(
        detector, patches, 0, methods, CONFIGS, sg_sigma=1.0, sg_samples=8
    )
    assert rows[0][2]["eg"] == wide.rows[0]["eg"]
