"""SGD trainer on synthetic tasks."""
import numpy as np
import pytest

from rlpm.errors import InputError
from rlpm.graph import forward
from rlpm.toydata import make_blob_dataset
from rlpm.toynets import build_conv_classifier, build_mlp
from rlpm.train import accuracy, train_toy


def xor_dataset():
    pts = [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)]
    return [(np.array(x), y) for x, y in pts]


def test_rejects_bad_arguments(rng):
    net = build_mlp(2, [4], 2, rng=rng)
    with pytest.raises(InputError):
        train_toy(net, [], 1, 0.1)
    with pytest.raises(InputError):
        train_toy(net, xor_dataset(), 1, 0.0)
    with pytest.raises(InputError):
        train_toy(net, [(np.zeros(2), 5)], 1, 0.1)
    with pytest.raises(InputError):
        accuracy(net, [])


def test_input_graph_untouched(rng):
    net = build_mlp(2, [8], 2, rng=rng)
    before = [None if s.weights is None else s.weights.copy() for s in net.layers]
    train_toy(net, xor_dataset(), 5, 0.5)
    for spec, saved in zip(net.layers, before):
        if saved is not None:
            assert np.array_equal(spec.weights, saved)
            assert not spec.weights.flags.writeable


def test_loss_direction_single_step(rng):
    # one SGD step on one example must raise that example's target probability
    net = build_mlp(3, [6], 2, rng=rng)
    x = np.array([0.3, -0.2, 0.9])
    p0 = forward(net, x)[1]
    stepped = train_toy(net, [(x, 1)], 1, 0.05, shuffle=False)
    assert forward(stepped, x)[1] > p0


def test_learns_xor(rng):
    net = build_mlp(2, [16], 2, rng=rng)
    trained = train_toy(net, xor_dataset(), 400, 0.3, seed=1)
    assert accuracy(trained, xor_dataset()) == 1.0


def test_deterministic_given_seed(rng):
    data = xor_dataset()
    net = build_mlp(2, [8], 2, rng=np.random.default_rng(11))
    a = train_toy(net, data, 20, 0.2, seed=5)
    b = train_toy(net, data, 20, 0.2, seed=5)
    for sa, sb in zip(a.layers, b.layers):
        if sa.weights is not None:
            assert np.array_equal(sa.weights, sb.weights)


def test_blob_classifier_reaches_high_accuracy():
    data = make_blob_dataset(80, seed=3)
    net = build_conv_classifier((16, 16, 1), 2, rng=np.random.default_rng(2))
    trained = train_toy(net, data, 8, 0.05, seed=2)
    assert accuracy(trained, data) >= 0.9
