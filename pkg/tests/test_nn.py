"""Dense network kernels: init, forward, backprop, SGD step, serialization."""

import numpy as np
import pytest

from sysrisk import nn


def make_net(sizes=(3, 8, 2), act="relu", head="identity", seed=0):
    return nn.Mlp(list(sizes), hidden_activation=act, output_head=head, seed=seed)


def numeric_grads(net, batch, upstream, h=1e-6):
    """Central differences of loss(params) = sum(upstream * forward(net, batch))."""

    def loss():
        return float(np.sum(upstream * nn.forward(net, batch)))

    w_grads, b_grads = [], []
    for w in net.weights:
        g = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            keep = w[idx]
            w[idx] = keep + h
            up = loss()
            w[idx] = keep - h
            down = loss()
            w[idx] = keep
            g[idx] = (up - down) / (2 * h)
        w_grads.append(g)
    for b in net.biases:
        g = np.empty_like(b)
        for idx in np.ndindex(b.shape):
            keep = b[idx]
            b[idx] = keep + h
            up = loss()
            b[idx] = keep - h
            down = loss()
            b[idx] = keep
            g[idx] = (up - down) / (2 * h)
        b_grads.append(g)
    return w_grads, b_grads


def max_rel_err(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestInit:
    def test_zero_weights_identity_head_outputs_zero(self):
        net = make_net()
        for w in net.weights:
            w[:] = 0.0
        out = nn.forward(net, np.random.default_rng(0).normal(size=(5, 3)))
        np.testing.assert_array_equal(out, 0.0)

    def test_biases_start_zero_and_weights_bounded(self):
        net = make_net(sizes=(4, 16, 16, 3), seed=3)
        for b in net.biases:
            np.testing.assert_array_equal(b, 0.0)
        for w in net.weights:
            bound = np.sqrt(6.0 / w.shape[0])
            assert np.all(np.abs(w) <= bound)

    def test_same_seed_same_parameters(self):
        a, b = make_net(seed=9), make_net(seed=9)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_rejects_bad_shapes_and_names(self):
        with pytest.raises(nn.NetworkError):
            make_net(sizes=(3,))
        with pytest.raises(nn.NetworkError):
            make_net(act="sigmoid")
        with pytest.raises(nn.NetworkError):
            make_net(head="softmax")
        with pytest.raises(nn.NetworkError):
            make_net(sizes=(3, 8, 2), head="softplus_unit_mean")


class TestForward:
    def test_shapes(self):
        net = make_net(sizes=(3, 5, 2))
        out = nn.forward(net, np.zeros((7, 3)))
        assert out.shape == (7, 2)

    def test_rejects_wrong_width(self):
        net = make_net()
        with pytest.raises(nn.NetworkError):
            nn.forward(net, np.zeros((4, 5)))

    def test_unit_mean_head_is_positive_with_mean_one(self):
        net = make_net(sizes=(3, 8, 1), head="softplus_unit_mean", seed=2)
        x = np.random.default_rng(4).normal(size=(33, 3))
        out = nn.forward(net, x)[:, 0]
        assert np.all(out > 0)
        assert float(out.mean()) == pytest.approx(1.0, abs=1e-12)

    def test_tanh_bounded_hidden(self):
        net = make_net(sizes=(2, 4, 1), act="tanh", seed=5)
        out = nn.forward(net, 100.0 * np.ones((3, 2)))
        assert np.all(np.isfinite(out))


class TestBackward:
    @pytest.mark.parametrize("act", ["relu", "tanh"])
    def test_identity_head_matches_finite_differences(self, act):
        rng = np.random.default_rng(10)
        for trial in range(3):
            net = make_net(sizes=(3, 6, 4, 2), act=act, seed=20 + trial)
            x = rng.normal(size=(9, 3))
            upstream = rng.normal(size=(9, 2))
            nn.forward(net, x)
            got = nn.backward(net, x, upstream, loss_value=0.0)
            want_w, want_b = numeric_grads(net, x, upstream)
            assert max_rel_err(got.weights, want_w) <= 1e-4
            assert max_rel_err(got.biases, want_b) <= 1e-4

    @pytest.mark.parametrize("act", ["relu", "tanh"])
    def test_unit_mean_head_matches_finite_differences(self, act):
        rng = np.random.default_rng(11)
        for trial in range(3):
            net = make_net(sizes=(2, 5, 1), act=act, head="softplus_unit_mean", seed=30 + trial)
            x = rng.normal(size=(8, 2))
            upstream = rng.normal(size=(8, 1))
            nn.forward(net, x)
            got = nn.backward(net, x, upstream, loss_value=0.0)
            want_w, want_b = numeric_grads(net, x, upstream)
            assert max_rel_err(got.weights, want_w) <= 1e-4
            assert max_rel_err(got.biases, want_b) <= 1e-4

    def test_constant_batch_kills_unit_mean_gradient(self):
        # a constant input batch gives constant head output 1, and scaling by
        # the batch mean removes every direction of parameter sensitivity
        net = make_net(sizes=(2, 5, 1), head="softplus_unit_mean", seed=6)
        x = np.ones((10, 2))
        upstream = np.random.default_rng(7).normal(size=(10, 1))
        nn.forward(net, x)
        grads = nn.backward(net, x, upstream, loss_value=0.0)
        for g in grads.weights + grads.biases:
            np.testing.assert_allclose(g, 0.0, atol=1e-14)

    def test_stale_cache_rejected(self):
        net = make_net()
        rng = np.random.default_rng(8)
        a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        nn.forward(net, a)
        with pytest.raises(nn.NetworkError):
            nn.backward(net, b, np.zeros((4, 2)))

    def test_upstream_shape_checked(self):
        net = make_net()
        x = np.zeros((4, 3))
        nn.forward(net, x)
        with pytest.raises(nn.NetworkError):
            nn.backward(net, x, np.zeros((4, 3)))


class TestSgdStep:
    def test_descent_and_ascent_move_exactly(self):
        net = make_net(seed=12)
        x = np.random.default_rng(13).normal(size=(6, 3))
        up = np.random.default_rng(14).normal(size=(6, 2))
        nn.forward(net, x)
        grads = nn.backward(net, x, up)
        w0 = [w.copy() for w in net.weights]
        nn.sgd_step(net, grads, 0.1, "descent")
        for w, w_start, g in zip(net.weights, w0, grads.weights):
            np.testing.assert_allclose(w, w_start - 0.1 * g, atol=0)
        nn.forward(net, x)
        grads2 = nn.backward(net, x, up)
        w1 = [w.copy() for w in net.weights]
        nn.sgd_step(net, grads2, 0.05, "ascent")
        for w, w_start, g in zip(net.weights, w1, grads2.weights):
            np.testing.assert_allclose(w, w_start + 0.05 * g, atol=0)

    def test_zero_gradient_leaves_parameters(self):
        net = make_net(seed=15)
        x = np.zeros((3, 3))
        nn.forward(net, x)
        grads = nn.backward(net, x, np.zeros((3, 2)))
        before = [w.copy() for w in net.weights] + [b.copy() for b in net.biases]
        # relu at exactly zero passes no signal, so all grads vanish with x=0
        nn.sgd_step(net, grads, 1.0, "descent")
        after = net.weights + net.biases
        for b0, a0 in zip(before, after):
            np.testing.assert_array_equal(b0, a0)

    def test_rejects_bad_direction_and_lr(self):
        net = make_net()
        x = np.zeros((2, 3))
        nn.forward(net, x)
        grads = nn.backward(net, x, np.zeros((2, 2)))
        with pytest.raises(nn.NetworkError):
            nn.sgd_step(net, grads, 0.1, "sideways")
        with pytest.raises(nn.NetworkError):
            nn.sgd_step(net, grads, -0.1, "descent")


class TestSerialization:
    @pytest.mark.parametrize("head", ["identity", "softplus_unit_mean"])
    def test_round_trip_preserves_outputs(self, head):
        sizes = (3, 7, 1) if head == "softplus_unit_mean" else (3, 7, 4)
        net = make_net(sizes=sizes, act="tanh", head=head, seed=16)
        x = np.random.default_rng(17).normal(size=(11, 3))
        want = nn.forward(net, x)
        clone = nn.from_json(nn.to_json(net))
        np.testing.assert_array_equal(nn.forward(clone, x), want)

    def test_rejects_mangled_checkpoint(self):
        net = make_net()
        text = nn.to_json(net)
        with pytest.raises(nn.NetworkError):
            nn.from_json(text.replace('"identity"', '"softmax"'))
