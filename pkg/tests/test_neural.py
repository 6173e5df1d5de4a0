import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfn_racing.neural import (AdamState, ModelFormatError, OuNoise, PolicyNet, adam_step, dropout_mask,
                               forward, init_net, load_model, loss_and_grad, save_model, weighted_l1,
                               zero_net)


def toy_net():
    ones = [np.ones((1, 1)) for _ in range(4)]
    return PolicyNet(ones, [np.zeros(1) for _ in range(4)], "relu", dropout_rate=0.0)


def fd_gradients(net, x, y, w, mask, h=1e-6):
    out = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp, _ = loss_and_grad(net, x, y, w, train=True, mask=mask)
            p[idx] = old - h
            lm, _ = loss_and_grad(net, x, y, w, train=True, mask=mask)
            p[idx] = old
            g[idx] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def relative_error(a, b):
    """Norm-wise relative error over all parameters."""
    da = np.concatenate([x.ravel() for x in a])
    db = np.concatenate([x.ravel() for x in b])
    return np.linalg.norm(da - db) / max(np.linalg.norm(da), np.linalg.norm(db), 1e-12)


def test_zero_net_outputs_hover():
    out, _ = forward(zero_net(), np.ones(19))
    np.testing.assert_array_equal(out, 0.0)


def test_toy_net_by_hand():
    out, _ = forward(toy_net(), np.array([0.5]))
    assert out[0] == pytest.approx(math.tanh(0.5))
    assert out[0] == pytest.approx(0.46212, abs=1e-5)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        forward(zero_net(), np.ones(18))


def test_eval_forward_deterministic_and_train_needs_rng():
    net = init_net(np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=19)
    np.testing.assert_array_equal(forward(net, x)[0], forward(net, x)[0])
    with pytest.raises(ValueError):
        forward(net, x, train=True)


def test_inverted_dropout_preserves_expectation():
    net = init_net(np.random.default_rng(2), hidden_activation="relu")
    x = np.random.default_rng(3).normal(size=19) * 5
    h1 = np.maximum(x @ net.weights[0] + net.biases[0], 0)
    h2 = np.maximum(h1 @ net.weights[1] + net.biases[1], 0)
    unit = int(np.argmax(h2))
    masks = dropout_mask(net, 100_000, np.random.default_rng(4))
    assert set(np.unique(masks)) <= {0.0, 2.0}
    mc = (h2[unit] * masks[:, unit]).mean()
    assert mc == pytest.approx(h2[unit], rel=0.02)


def test_dropout_mask_is_used_and_cached():
    net = init_net(np.random.default_rng(5))
    x = np.random.default_rng(6).normal(size=(3, 19))
    mask = dropout_mask(net, 3, np.random.default_rng(7))
    a, cache = forward(net, x, train=True, mask=mask)
    b, _ = forward(net, x, train=True, mask=mask)
    np.testing.assert_array_equal(a, b)
    assert cache.mask is mask


def test_loss_hand_example():
    pred = np.array([0.5, 0.0, 0.0, 0.0])
    assert weighted_l1(pred, np.zeros(4), (2, 1, 1, 1)) == pytest.approx(1.0)


def test_perfect_prediction_has_zero_loss_and_gradient():
    net = init_net(np.random.default_rng(8))
    x = np.random.default_rng(9).normal(size=(4, 19))
    y, _ = forward(net, x)
    loss, grads = loss_and_grad(net, x, y, train=False)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradients_match_finite_differences(activation):
    rng = np.random.default_rng(10)
    for _ in range(3):
        net = init_net(rng, (19, 8, 6, 5, 4), hidden_activation=activation, input_scale=1.0)
        for b in net.biases:  # zero biases would park dead rows exactly on the relu kink
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(3, 19))
        y = rng.uniform(-1, 1, size=(3, 4))
        w = rng.uniform(0.5, 2.0, size=4)
        mask = dropout_mask(net, 3, rng)
        _, g = loss_and_grad(net, x, y, w, train=True, mask=mask)
        assert relative_error(g, fd_gradients(net, x, y, w, mask)) < 1e-4


def test_adam_first_step_is_lr():
    p = [np.array([0.0])]
    opt = AdamState.for_params(p)
    adam_step(p, [np.array([1.0])], opt)
    # m_hat = 1, v_hat = 1: step = lr / (1 + eps)
    assert p[0][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert abs(p[0][0]) == pytest.approx(1e-3, rel=1e-6)


@settings(max_examples=50)
@given(st.floats(0.01, 1e6))
def test_adam_first_step_scale_invariant(c):
    ref = [np.array([0.0])]
    adam_step(ref, [np.array([1.0])], AdamState.for_params(ref))
    p = [np.array([0.0])]
    adam_step(p, [np.array([c])], AdamState.for_params(p))
    assert abs(p[0][0] - ref[0][0]) < 1e-9


def test_adam_zero_gradient_keeps_params():
    p = [np.ones(3)]
    opt = AdamState.for_params(p)
    adam_step(p, [np.zeros(3)], opt)
    np.testing.assert_array_equal(p[0], 1.0)
    assert opt.step == 1


def test_ou_deterministic_decay():
    ou = OuNoise(np.random.default_rng(0), size=1, sigma=0.0, dt=0.1, x0=[1.0])
    for k in range(1, 6):
        assert ou.sample()[0] == pytest.approx((1 - 0.15 * 0.1) ** k, rel=1e-12)


def test_ou_stationary_variance():
    # dt = 0.1 keeps the correlation time short; discretisation bias is theta*dt/2 < 1%
    ou = OuNoise(np.random.default_rng(1), size=1, dt=0.1)
    for _ in range(2000):
        ou.sample()
    xs = np.array([ou.sample()[0] for _ in range(1_000_000)])
    assert xs.var() == pytest.approx(ou.sigma ** 2 / (2 * ou.theta), rel=0.05)


def test_ou_equal_seeds_equal_streams():
    a = OuNoise(np.random.default_rng(3))
    b = OuNoise(np.random.default_rng(3))
    for _ in range(20):
        np.testing.assert_array_equal(a.sample(), b.sample())


def test_model_round_trip_bitwise():
    rng = np.random.default_rng(11)
    for act in ("relu", "tanh"):
        net = init_net(rng, hidden_activation=act)
        blob = save_model(net)
        back = load_model(blob)
        assert save_model(back) == blob
        for a, b in zip(net.params, back.params):
            np.testing.assert_array_equal(a, b)
        assert back.hidden_activation == act


def test_truncated_model_rejected():
    blob = save_model(init_net(np.random.default_rng(12)))
    with pytest.raises(ModelFormatError):
        load_model(blob[: len(blob) // 2])


def test_corrupt_layer_length_names_layer():
    d = json.loads(save_model(init_net(np.random.default_rng(13))))
    d["layers"][2]["w"] = d["layers"][2]["w"][:-1]
    with pytest.raises(ModelFormatError, match=r"layers\[2\]"):
        load_model(json.dumps(d))


@pytest.mark.parametrize("field", ["format_version", "layers", "hidden_activation"])
def test_missing_field_named(field):
    d = json.loads(save_model(init_net(np.random.default_rng(14))))
    del d[field]
    with pytest.raises(ModelFormatError, match=field):
        load_model(json.dumps(d))


def test_loss_decreases_on_frozen_dataset():
    trials, ok = 20, 0
    for seed in range(trials):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(512, 19)) * 5
        y = np.tanh(x[:, :4] / 5)
        net = init_net(rng, hidden_activation="tanh", dropout_rate=0.0)
        opt = AdamState.for_params(net.params)
        losses = []
        for _ in range(50):
            loss, g = loss_and_grad(net, x, y, train=False)
            losses.append(loss)
            adam_step(net.params, g, opt)
        ok += all(b < a for a, b in zip(losses, losses[1:]))
    assert ok >= 0.95 * trials
