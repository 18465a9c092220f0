import math

import numpy as np
import pytest

from core.networks import (
    DenseNetwork, AdamState, GradientSet, RELU, TANH, IDENTITY,
    init_fanin, clip_gradients, adam_step, soft_update
)
from utils.exceptions import ContractViolation


def actor_net(rng):
    return DenseNetwork.build([13, 64, 64, 3], [RELU, RELU, TANH], rng)


def critic_net(rng):
    return DenseNetwork.build([16, 64, 64, 1], [RELU, RELU, IDENTITY], rng)


def _loss(network, x, weights):
    return float(np.sum(network.predict(x) * weights))


@pytest.mark.parametrize("factory", [actor_net, critic_net])
def test_backward_matches_finite_differences(factory):
    rng = np.random.default_rng(7)
    network = factory(rng)
    x = rng.normal(size=(4, network.input_size))
    weights = rng.normal(size=(4, network.output_size))
    out, cache = network.forward(x)
    grads = network.backward(cache, weights)
    analytic = grads.arrays()
    h = 1e-5

    for _ in range(100):
        p = rng.integers(len(analytic))
        param = network.parameters()[p]
        idx = tuple(rng.integers(s) for s in param.shape)
        original = param[idx]
        param[idx] = original + h
        plus = _loss(network, x, weights)
        param[idx] = original - h
        minus = _loss(network, x, weights)
        param[idx] = original
        numeric = (plus - minus) / (2 * h)
        value = analytic[p][idx]
        scale = max(abs(value), abs(numeric), 1e-6)
        assert abs(value - numeric) / scale < 1e-4

    for _ in range(20):
        row, col = rng.integers(x.shape[0]), rng.integers(x.shape[1])
        shifted = x.copy()
        shifted[row, col] += h
        plus = _loss(network, shifted, weights)
        shifted[row, col] -= 2 * h
        minus = _loss(network, shifted, weights)
        numeric = (plus - minus) / (2 * h)
        value = grads.inputs[row, col]
        assert abs(value - numeric) / max(abs(value), abs(numeric), 1e-6) < 1e-4


def test_fanin_initialization_bounds(rng):
    weights = init_fanin(400, 300, rng)
    bound = 2.0 / math.sqrt(400)
    assert weights.shape == (400, 300)
    assert np.max(np.abs(weights)) <= bound
    assert np.max(np.abs(weights)) > 0.9 * bound
    network = actor_net(rng)
    assert all(np.all(layer.bias == 0) for layer in network.layers)


def test_single_vector_and_batch_agree(rng):
    network = actor_net(rng)
    x = rng.normal(size=(5, 13))
    batch = network.predict(x)
    single = network.predict(x[2])
    assert single.shape == (3,)
    np.testing.assert_allclose(single, batch[2])
    assert np.all(np.abs(batch) <= 1.0)


def test_dimension_mismatch_is_rejected(rng):
    network = actor_net(rng)
    with pytest.raises(ContractViolation):
        network.forward(np.zeros(12))
    with pytest.raises(ContractViolation):
        DenseNetwork.build([13, 64, 3], [RELU], rng)


def test_stale_cache_is_rejected(rng):
    network = actor_net(rng)
    _, cache = network.forward(np.zeros(13))
    grads = network.backward(cache, np.ones(3))
    adam_step(network, grads, AdamState.for_network(network))
    with pytest.raises(ContractViolation):
        network.backward(cache, np.ones(3))


def test_clip_gradients():
    grads = GradientSet([np.array([[3.0]])], [np.array([4.0])])
    clipped = clip_gradients(grads, 1.0)
    assert clipped.global_norm() == pytest.approx(1.0)
    np.testing.assert_allclose(clipped.weights[0], [[0.6]])
    small = GradientSet([np.array([[0.3]])], [np.array([0.4])])
    assert clip_gradients(small, 1.0) is small
    with pytest.raises(ContractViolation):
        clip_gradients(small, 0.0)


def test_adam_first_step_moves_by_learning_rate(rng):
    network = DenseNetwork.build([2, 2], [IDENTITY], rng)
    before = [p.copy() for p in network.parameters()]
    grads = GradientSet([np.array([[1.0, -2.0], [0.5, 3.0]])], [np.array([-1.0, 0.25])])
    opt = AdamState.for_network(network, learning_rate=0.01)
    adam_step(network, grads, opt)
    for old, new, g in zip(before, network.parameters(), grads.arrays()):
        np.testing.assert_allclose(new - old, -0.01 * np.sign(g), rtol=1e-6)
    assert opt.step == 1


def test_adam_minimizes_a_quadratic(rng):
    network = DenseNetwork.build([3, 1], [IDENTITY], rng)
    opt = AdamState.for_network(network, learning_rate=0.02)
    x = rng.normal(size=(64, 3))
    y = x @ np.array([[1.0], [-2.0], [0.5]]) + 0.3
    for _ in range(1500):
        out, cache = network.forward(x)
        grads = network.backward(cache, 2 * (out - y) / len(x))
        adam_step(network, grads, opt)
    np.testing.assert_allclose(network.layers[0].weights[:, 0], [1.0, -2.0, 0.5], atol=1e-2)
    assert network.layers[0].bias[0] == pytest.approx(0.3, abs=1e-2)


def test_soft_update(rng):
    online = actor_net(rng)
    target = online.copy()
    soft_update(target, online, 0.005)
    for t, o in zip(target.parameters(), online.parameters()):
        np.testing.assert_array_equal(t, o)

    other = actor_net(np.random.default_rng(99))
    expected = [t + 0.5 * (o - t) for t, o in zip(target.parameters(), other.parameters())]
    soft_update(target, other, 0.5)
    for t, e in zip(target.parameters(), expected):
        np.testing.assert_allclose(t, e)

    soft_update(target, other, 1.0)
    for t, o in zip(target.parameters(), other.parameters()):
        np.testing.assert_array_equal(t, o)


def test_soft_update_rejects_bad_inputs(rng):
    with pytest.raises(ContractViolation):
        soft_update(actor_net(rng), critic_net(rng), 0.5)
    net = actor_net(rng)
    with pytest.raises(ContractViolation):
        soft_update(net.copy(), net, 0.0)


def test_state_dict_round_trip(rng):
    network = critic_net(rng)
    restored = DenseNetwork.from_state_dict(network.state_dict("c."), [RELU, RELU, IDENTITY], "c.")
    x = rng.normal(size=(3, 16))
    np.testing.assert_array_equal(restored.predict(x), network.predict(x))
    opt = AdamState.for_network(network)
    opt.step = 4
    clone = AdamState.for_network(restored)
    clone.load_state_dict(opt.state_dict("o."), "o.")
    assert clone.step == 4


def test_fanin_samples_are_centered(rng):
    weights = init_fanin(400, 250, rng)
    bound = 2.0 / math.sqrt(400)
    assert weights.size == 100_000
    assert np.all(np.abs(weights) < bound)
    standard_error = bound / math.sqrt(3.0) / math.sqrt(weights.size)
    assert abs(float(np.mean(weights))) < 3 * standard_error


def _flat(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def test_clipping_preserves_direction(rng):
    for _ in range(20):
        grads = GradientSet([rng.normal(scale=5.0, size=(6, 4))], [rng.normal(scale=5.0, size=4)])
        clipped = clip_gradients(grads, 1.0)
        before, after = _flat(grads.arrays()), _flat(clipped.arrays())
        cosine = float(before @ after) / (np.linalg.norm(before) * np.linalg.norm(after))
        assert cosine == pytest.approx(1.0, abs=1e-12)
        assert clipped.global_norm() <= 1.0 + 1e-12


def test_soft_update_shrinks_gap_by_one_minus_tau(rng):
    tau = 5e-3
    target, online = actor_net(rng), actor_net(np.random.default_rng(8))
    gap_before = _flat(target.parameters()) - _flat(online.parameters())
    soft_update(target, online, tau)
    gap_after = _flat(target.parameters()) - _flat(online.parameters())
    np.testing.assert_allclose(gap_after, (1.0 - tau) * gap_before, rtol=1e-9, atol=1e-15)


def test_parameters_stay_finite_under_random_updates(rng):
    network = DenseNetwork.build([4, 8, 2], [RELU, TANH], rng)
    opt = AdamState.for_network(network)
    for _ in range(10_000):
        scale = 10.0 ** rng.uniform(-6, 6)
        arrays = [scale * rng.normal(size=p.shape) for p in network.parameters()]
        grads = GradientSet(arrays[0::2], arrays[1::2])
        adam_step(network, clip_gradients(grads, 1.0), opt)
    assert all(np.all(np.isfinite(p)) for p in network.parameters())
    assert np.all(np.isfinite(network.predict(rng.normal(size=(5, 4)))))
