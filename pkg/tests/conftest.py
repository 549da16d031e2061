import numpy as np
import pytest  # type: ignore

from bdrylib import sampler
from bdrylib.net import (
    Conv2dLayer,
    DenseLayer,
    FlattenLayer,
    Network,
    ReluLayer,
)


def linear_net(w, b):
    return Network([DenseLayer(w, b)])


@pytest.fixture
def diag_net():
    # f0 = x0, f1 = x1: the boundary is the diagonal x0 = x1
    return linear_net(np.eye(2), np.zeros(2))


@pytest.fixture
def halfplane_net():
    # f0 = 0, f1 = x0 - 1: the boundary is the line x0 = 1
    return linear_net([[0.0, 0.0], [1.0, 0.0]], [0.0, -1.0])


@pytest.fixture
def relu_net():
    # 2-8-2 network with seeded weights
    w1 = sampler.gaussian(1, (8, 2))
    b1 = 0.1 * sampler.gaussian(2, (8,))
    w2 = sampler.gaussian(3, (2, 8))
    b2 = np.zeros(2)
    return Network([DenseLayer(w1, b1), ReluLayer(), DenseLayer(w2, b2)])


@pytest.fixture
def abs_net():
    # f0 = 1, f1 = |x0| + |x1|: four linear regions
    w1 = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    w2 = [[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]]
    return Network(
        [
            DenseLayer(w1, np.zeros(4)),
            ReluLayer(),
            DenseLayer(w2, [1.0, 0.0]),
        ]
    )


@pytest.fixture
def conv_net():
    w = sampler.gaussian(4, (2, 1, 3, 3))
    dense = sampler.gaussian(5, (3, 2 * 3 * 3))
    return Network(
        [
            Conv2dLayer(w, np.zeros(2), stride=2, pad=1),
            ReluLayer(),
            FlattenLayer(),
            DenseLayer(dense, np.zeros(3)),
        ],
        (1, 5, 5),
    )
