import math
from statistics import NormalDist

import numpy as np
import pytest  # type: ignore
from scipy import stats  # type: ignore

from bdrylib import sampler
from bdrylib.errors import DomainError, PreconditionError
from bdrylib.experiments.dataset import ToyDataset, synth_dataset
from bdrylib.experiments.report import STATUS_NO_BOUNDARY, STATUS_OK
from bdrylib.experiments.sensitivity import build_polarity_detector
from bdrylib.experiments.smoothing import (
    SMOOTHING_COLUMNS,
    certified_radius,
    check_one_layer,
    compute_lambda_bound,
    run_smoothing,
    smoothed_pgd,
    smoothing_row,
)
from bdrylib.net import DenseLayer, Network, ReluLayer
from bdrylib.oracle import DBox


@pytest.fixture
def patches():
    return synth_dataset("patches8x8", 2, 0)


@pytest.fixture
def detector():
    return build_polarity_detector()


def test_smoothing_radius():
    p_a = float(stats.norm.cdf(1.0))
    assert certified_radius(1.0, p_a, 0.5) == pytest.approx(0.5)
    assert certified_radius(2.0, p_a, 0.5) == pytest.approx(1.0)

    with pytest.raises(DomainError):
        certified_radius(0.0, p_a, 0.5)

    with pytest.raises(DomainError):
        certified_radius(1.0, 0.4, 0.5)


def test_smoothing_lambda_bound():
    p_a = float(stats.norm.cdf(1.0))
    bound = compute_lambda_bound(1.0, 1.0, 1.0, 1.0, p_a, 0.5)
    expect = math.sqrt(2.0 * math.pi) / 2.0 * math.log(2.0)
    assert bound == pytest.approx(expect)

    # larger noise, smaller bound
    wide = compute_lambda_bound(1.0, 1.0, 1.0, 2.0, p_a, 0.5)
    assert wide < bound

    with pytest.raises(DomainError):
        compute_lambda_bound(1.0, 1.0, 1.0, 1.0, 0.5, 0.2)

    with pytest.raises(DomainError):
        compute_lambda_bound(1.0, 1.0, 0.0, 1.0, p_a, 0.5)

    with pytest.raises(DomainError):
        compute_lambda_bound(1.0, 0.0, 1.0, 1.0, p_a, 0.5)


def test_smoothing_one_layer(detector, relu_net, conv_net, diag_net):
    check_one_layer(detector)
    check_one_layer(relu_net)

    for net in (conv_net, diag_net):
        with pytest.raises(PreconditionError):
            check_one_layer(net)


def test_smoothing_pgd(patches, detector):
    x = patches.inputs[0]
    noise = sampler.gaussian(2020, (8,) + x.shape)
    x_adv, success = smoothed_pgd(detector, x, 0, noise, 0.0, clip=(0.0, 1.0))
    assert success is True
    assert detector.predict(x_adv) != 0
    assert np.linalg.norm((x_adv - x).reshape(-1)) <= 3.0 + 1e-9

    # the patch needs a larger move than the radius
    _, success = smoothed_pgd(detector, x, 0, noise, 0.0, eps=0.1)
    assert success is False


def test_smoothing_row_zero_sigma(patches, detector):
    x = patches.inputs[0]
    noise = sampler.gaussian(2020, (8,) + x.shape)
    status, values = smoothing_row(detector, patches, 0, 0.0, noise)
    assert status == STATUS_OK
    assert values["sigma"] == 0.0

    # without noise the smoothed maps are plain saliency maps
    clip = patches.domain.clip
    x_adv, _ = smoothed_pgd(detector, x, 0, noise, 0.0, clip=clip)
    diff = detector.input_gradient(x, 0) - detector.input_gradient(x_adv, 0)
    assert values["diff"] == pytest.approx(np.linalg.norm(diff.reshape(-1)))
    assert values["log_diff"] == pytest.approx(math.log(values["diff"]))


def test_smoothing_run(patches, detector):
    report = run_smoothing(
        detector, patches, [0.0, 0.25], n_noise=8, threads=2
    )
    assert report.name == "smoothing"
    assert report.columns == SMOOTHING_COLUMNS
    assert report.methods() == ["0.0", "0.25"]
    assert len(report.rows) == 4
    statuses = {r["status"] for r in report.rows}
    assert statuses <= {STATUS_OK, STATUS_NO_BOUNDARY}
    assert report.summary["0.0"]["sigma"] == 0.0
    assert "trend" in report.summary

    again = run_smoothing(detector, patches, [0.0, 0.25], n_noise=8)
    assert again.rows == report.rows


def test_smoothing_run_errors(patches, detector, conv_net):
    with pytest.raises(PreconditionError):
        run_smoothing(detector, patches, [0.1, 0.2])

    with pytest.raises(PreconditionError):
        run_smoothing(detector, patches, [0.0, -0.1])

    with pytest.raises(PreconditionError):
        run_smoothing(detector, patches, [0.0], n_noise=0)

    with pytest.raises(PreconditionError):
        run_smoothing(conv_net, patches, [0.0])


def kink_net():
    # f0 = 2 relu(-x0), f1 = 2 relu(x0)
    return Network(
        [
            DenseLayer([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0]),
            ReluLayer(),
            DenseLayer([[0.0, 2.0], [2.0, 0.0]], [0.0, 0.0]),
        ]
    )


def kink_dataset():
    # offsets stay off the PGD step grid so no iterate lands on the kink
    inputs = np.zeros((8, 2))
    inputs[:, 0] = -np.linspace(0.33, 1.03, 8)
    return ToyDataset(
        "kink", inputs, np.zeros(8, dtype=np.int64), DBox.cube(-2.0, 2.0, 2)
    )


def test_smoothing_trend():
    net = kink_net()
    data = kink_dataset()
    sigmas = [0.0, 0.25, 0.5, 0.75, 1.0]
    report = run_smoothing(net, data, sigmas, n_noise=200)
    assert all(r["status"] == STATUS_OK for r in report.rows)
    assert report.summary["trend"]["log_diff"] <= -0.8

    # without noise the difference is the plain saliency gap
    noise = sampler.gaussian(2020, (200, 2))
    rows = [r for r in report.rows if r["method"] == "0.0"]
    for x, row in zip(data.inputs, rows):
        x_adv, success = smoothed_pgd(net, x, 0, noise, 0.0, clip=(-2, 2))
        assert success is True
        gap = net.input_gradient(x, 0) - net.input_gradient(x_adv, 0)
        assert row["diff"] == pytest.approx(np.linalg.norm(gap), abs=1e-6)


@pytest.mark.parametrize("sigma", [0.1, 0.25, 0.5, 1.0, 3.0])
def test_smoothing_lambda_bound_sigma(sigma):
    args = (2.0, 1.5, 0.5)
    wide = compute_lambda_bound(*args, 2.0 * sigma, 0.9, 0.05)
    assert 2.0 * wide == compute_lambda_bound(*args, sigma, 0.9, 0.05)

    normal = NormalDist()
    spread = normal.inv_cdf(0.9) - normal.inv_cdf(0.05)
    scale = math.sqrt(2.0 * math.pi) * 2.0**2 / (2.0 * 0.5 * 1.5)
    expect = scale * math.log(2.0) * spread / sigma
    bound = compute_lambda_bound(*args, sigma, 0.9, 0.05)
    assert bound == pytest.approx(expect, rel=1e-8)
