import numpy as np
import pytest

from soctriage.exceptions import DimMismatch
from soctriage.nn import MLP, SGD, Adam


def test_forward_matches_hand_arithmetic():
    net = MLP([[[1.0, -1.0], [2.0, 0.5]], [[1.0, 1.0], [0.0, -1.0]]],
              [[0.0, 1.0], [0.5, 0.0]], ["relu", "identity"])
    # h = relu([1-2, 2*1+0.5*2+1]) = [0, 4]; z = [0+4+0.5, -4]
    assert net.forward([1.0, 2.0]).tolist() == [4.5, -4.0]


def test_batched_equals_rowwise(rng):
    net = MLP.initialize([5, 7, 3], ["relu", "identity"], rng)
    X = rng.normal(size=(4, 5))
    assert np.allclose(net.forward(X), np.vstack([net.forward(x) for x in X]))


def test_dim_checks(rng):
    net = MLP.initialize([3, 4, 2], ["relu", "identity"], rng)
    with pytest.raises(DimMismatch):
        net.forward(np.zeros(4))
    with pytest.raises(DimMismatch):
        MLP([np.ones((4, 3)), np.ones((2, 5))], [np.zeros(4), np.zeros(2)], ["relu", "identity"])


def test_serialization_round_trip(rng):
    net = MLP.initialize([3, 4, 2], ["relu", "identity"], rng)
    back = MLP.from_dict(net.to_dict())
    x = rng.normal(size=3)
    assert np.array_equal(net.forward(x), back.forward(x))


def test_optimizers_descend_quadratic():
    for opt in (SGD(0.1), Adam(0.1)):
        p = np.array([3.0, -2.0])
        for _ in range(300):
            opt.step([p], [2 * p])
        assert np.linalg.norm(p) < 1e-2
