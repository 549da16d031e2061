import math

import numpy as np
import pytest  # type: ignore

from bdrylib import sampler
from bdrylib.attribution import DAttributionMap, EAttrMethod
from bdrylib.errors import (
    InputShapeError,
    PreconditionError,
    UndefinedMetricError,
)
from bdrylib.metrics import (
    CON_MIN_DIST,
    DBoundingBox,
    DPixelAttribution,
    attribution_l2_distance,
    concentration,
    energy_game,
    localization,
    pearson_correlation,
    positive_percentage,
    read_boxes,
    spearman_correlation,
    write_boxes,
)

BOX = DBoundingBox(1, 1, 3, 3)


@pytest.fixture
def pix():
    return DPixelAttribution.from_values(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 1.0, 0.0],
            [0.0, 1.0, -1.0, 0.0],
            [0.5, 0.0, 0.0, 0.0],
        ]
    )


def test_metrics_box():
    assert BOX.area == 4
    assert DBoundingBox(2, 2, 1, 1).area == 0

    mask = BOX.mask(4, 4)
    assert mask.sum() == 4
    assert mask[1, 2] and not mask[0, 1]

    with pytest.raises(PreconditionError):
        BOX.check(2, 4)

    with pytest.raises(PreconditionError):
        DBoundingBox(1, 1, 1, 3).check(4, 4)

    with pytest.raises(PreconditionError):
        DBoundingBox(-1, 0, 1, 1).check(4, 4)


def test_metrics_pixel_map():
    pix = DPixelAttribution.from_values(np.ones((3, 2, 4)))
    assert pix.height == 2
    assert pix.width == 4
    assert np.array_equal(pix.values, np.full((2, 4), 3.0))

    with pytest.raises(InputShapeError):
        DPixelAttribution.from_values(np.ones(4))

    with pytest.raises(AssertionError):
        DPixelAttribution(np.array([[np.inf]]))


def test_metrics_values(pix):
    assert localization(pix, BOX) == pytest.approx(3 / 5)
    assert energy_game(pix, BOX) == pytest.approx(4 / 4.5)
    assert positive_percentage(pix, BOX) == pytest.approx(0.8)
    expect = 0.8 - 0.2 / math.sqrt(2.0)
    assert concentration(pix, BOX) == pytest.approx(expect)


def test_metrics_bounds(pix):
    other = DBoundingBox(0, 0, 4, 4)
    for box in (BOX, other):
        assert 0.0 <= localization(pix, box) <= 1.0
        assert 0.0 <= energy_game(pix, box) <= 1.0
        assert 0.0 <= positive_percentage(pix, box) <= 1.0

    # all positive mass inside the whole image
    assert energy_game(pix, other) == 1.0


def test_metrics_undefined():
    zero = DPixelAttribution(np.zeros((4, 4)))
    assert localization(zero, BOX) == 0.0

    with pytest.raises(UndefinedMetricError):
        energy_game(zero, BOX)

    with pytest.raises(UndefinedMetricError):
        positive_percentage(zero, BOX)

    with pytest.raises(UndefinedMetricError):
        concentration(zero, BOX)

    # box mass cancels out
    vals = np.zeros((4, 4))
    vals[1, 1] = 1.0
    vals[2, 2] = -1.0
    with pytest.raises(UndefinedMetricError):
        concentration(DPixelAttribution(vals), BOX)


def test_metrics_l2_distance():
    a = DAttributionMap(np.array([1.0, 2.0]), EAttrMethod.SM, 0)
    b = DAttributionMap(np.array([4.0, 6.0]), EAttrMethod.BSM, 0)
    assert attribution_l2_distance(a, b) == 5.0
    assert attribution_l2_distance(a, a) == 0.0

    c = DAttributionMap(np.zeros(3), EAttrMethod.IG, 0)
    with pytest.raises(InputShapeError):
        attribution_l2_distance(a, c)


def test_metrics_correlation():
    assert pearson_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson_correlation([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert spearman_correlation([1, 2, 3, 4], [1, 4, 9, 16]) == (
        pytest.approx(1.0)
    )
    assert spearman_correlation([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5)

    with pytest.raises(UndefinedMetricError):
        pearson_correlation([1, 1, 1], [1, 2, 3])

    with pytest.raises(UndefinedMetricError):
        spearman_correlation([1, 2, 3], [5, 5, 5])

    with pytest.raises(InputShapeError):
        pearson_correlation([1, 2], [1, 2, 3])

    with pytest.raises(PreconditionError):
        pearson_correlation([1], [2])


def test_metrics_boxes_file(tmp_path):
    boxes = {"0000": BOX, "0001": DBoundingBox(0, 4, 2, 8)}
    path = tmp_path / "boxes.csv"
    write_boxes(boxes, path)
    assert path.read_text().splitlines()[0] == "id,x_min,y_min,x_max,y_max"
    assert read_boxes(path) == boxes

    bad = tmp_path / "bad.csv"
    bad.write_text("id,x,y\n0,1,2\n")
    with pytest.raises(PreconditionError):
        read_boxes(bad)


###############################################################################
# Set-based reference implementations
###############################################################################


def random_case(seed):
    values = sampler.gaussian(seed, (8, 8))
    values[sampler.uniform(seed, (8, 8)) < 0.3] = 0.0
    u = sampler.uniform(seed + 5000, (4,))
    x0, y0 = int(u[0] * 8), int(u[1] * 8)
    x1 = x0 + 1 + int(u[2] * (8 - x0))
    y1 = y0 + 1 + int(u[3] * (8 - y0))
    return DPixelAttribution(values), DBoundingBox(x0, y0, x1, y1)


def box_pixels(box):
    return {
        (y, x)
        for y in range(box.y_min, box.y_max)
        for x in range(box.x_min, box.x_max)
    }


def ref_localization(pix, box):
    z = {(y, x) for y in range(8) for x in range(8) if pix.values[y, x] > 0}
    u = box_pixels(box)
    return len(z & u) / (len(u) + len(z - u))


def ref_energy_game(pix, box):
    v = pix.values
    pos = [v[y, x] for y in range(8) for x in range(8) if v[y, x] > 0]
    inside = [v[p] for p in box_pixels(box) if v[p] > 0]
    if not pos:
        return None
    return math.fsum(inside) / math.fsum(pos)


def ref_positive_percentage(pix, box):
    v = pix.values
    pos = math.fsum(v[p] for p in box_pixels(box) if v[p] > 0)
    neg = math.fsum(v[p] for p in box_pixels(box) if v[p] < 0)
    if pos - neg == 0.0:
        return None
    return pos / (pos - neg)


def ref_concentration(pix, box):
    cells = sorted(box_pixels(box))
    v = [float(pix.values[p]) for p in cells]
    norm = math.fsum(abs(a) for a in v)
    if norm == 0.0:
        return None
    g = [a / norm for a in v]
    mass = math.fsum(g)
    if mass == 0.0:
        return None
    cx = math.fsum(a * x for a, (_, x) in zip(g, cells)) / mass
    cy = math.fsum(a * y for a, (y, _) in zip(g, cells)) / mass
    total = []
    for a, (y, x) in zip(g, cells):
        dist = math.sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy))
        total.append(a / max(dist, CON_MIN_DIST))
    return math.fsum(total)


def metric_or_none(func, pix, box):
    try:
        return func(pix, box)
    except UndefinedMetricError:
        return None


METRICS = [
    (localization, ref_localization),
    (energy_game, ref_energy_game),
    (positive_percentage, ref_positive_percentage),
    (concentration, ref_concentration),
]


@pytest.mark.parametrize("func,ref", METRICS)
def test_metrics_reference(func, ref):
    for seed in range(100):
        pix, box = random_case(seed)
        got = metric_or_none(func, pix, box)
        want = ref(pix, box)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_metrics_range_and_scale():
    scales = 10.0 ** (6.0 * sampler.uniform(77, (1000,)) - 3.0)
    for seed in range(1000):
        pix, box = random_case(seed)
        scaled = DPixelAttribution(scales[seed] * pix.values)

        loc = localization(pix, box)
        assert 0.0 <= loc <= 1.0
        assert localization(scaled, box) == loc

        for func in (energy_game, positive_percentage):
            value = metric_or_none(func, pix, box)
            if value is None:
                continue
            assert 0.0 <= value <= 1.0
            assert func(scaled, box) == pytest.approx(value, rel=1e-9)

        con = metric_or_none(concentration, pix, box)
        if con is not None:
            assert abs(con) <= 1.0 + 1e-12
            assert concentration(scaled, box) == pytest.approx(
                con, rel=1e-9, abs=1e-12
            )
