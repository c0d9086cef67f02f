import json

import numpy as np
import pytest

from aebound import network as net
from aebound.data import gen_clustered
from aebound.losses import empirical_margin_loss

from oracles import fd_gradient, naive_forward


def random_net(dims, activations, seed, bottleneck_index=None, scale=1.0):
    rng = np.random.default_rng(seed)
    weights = [scale * rng.normal(size=(dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
    if bottleneck_index is None:
        bottleneck_index = max(1, (len(dims) - 1) // 2)
    return net.NetworkParams(weights, list(activations), bottleneck_index)


class TestForward:
    def test_identity_relu(self):
        p = net.NetworkParams([np.eye(3)], ["relu"], 1)
        assert np.array_equal(net.forward(p, np.array([1.0, 0.0, 1.0])), [1.0, 0.0, 1.0])

    def test_hand_relu(self):
        w = np.array([[1.0, -1.0], [-1.0, 1.0]])
        p = net.NetworkParams([w], ["relu"], 1)
        assert np.array_equal(net.forward(p, np.array([2.0, 1.0])), [1.0, 0.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_naive_reimplementation(self, seed):
        p = random_net([5, 4, 3, 5], ["relu", "relu", "sigmoid"], seed)
        x = np.random.default_rng(100 + seed).normal(size=5)
        expected = naive_forward(p.weights, p.activations, x)
        assert np.allclose(net.forward(p, x), expected, atol=1e-12, rtol=0)

    def test_dimension_mismatch_message(self):
        p = random_net([5, 3, 5], ["relu", "sigmoid"], 0)
        with pytest.raises(ValueError, match="dim 4.*expected 5"):
            net.forward(p, np.zeros(4))

    def test_sigmoid_output_in_unit_interval(self):
        p = random_net([6, 3, 6], ["relu", "sigmoid"], 3, scale=5.0)
        out = net.forward(p, np.random.default_rng(7).normal(size=(20, 6)))
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestGradient:
    def test_zero_weight_linear_closed_form(self):
        # f(x) = Wx with W = 0: d/dW mean ||Wx - x||^2 = -(2/n) sum x x^T
        batch = np.random.default_rng(0).integers(0, 2, size=(4, 3)).astype(float)
        p = net.NetworkParams([np.zeros((3, 3))], ["identity"], 1)
        (g,) = net.gradient(p, batch, "mse")
        closed = -2.0 * batch.T @ batch / batch.shape[0]
        assert np.allclose(g, closed, atol=1e-12)

    @pytest.mark.parametrize("surrogate", ["mse", "bce"])
    @pytest.mark.parametrize("seed", range(4))
    def test_finite_difference_agreement(self, surrogate, seed):
        p = random_net([4, 3, 2, 4], ["relu", "relu", "sigmoid"], seed, scale=0.7)
        batch = np.random.default_rng(50 + seed).integers(0, 2, size=(3, 4)).astype(float)
        grads = net.gradient(p, batch, surrogate)
        fd = fd_gradient(lambda q: net.surrogate_loss(q, batch, surrogate), p)
        for g, f in zip(grads, fd):
            err = np.abs(g - f)
            ok = (err < 1e-7) | (err / np.maximum(np.abs(f), 1e-12) < 1e-4)
            assert ok.all()

    def test_duplicated_sample_equals_single(self):
        p = random_net([4, 2, 4], ["relu", "sigmoid"], 9)
        x = np.random.default_rng(1).integers(0, 2, size=4).astype(float)
        single = net.gradient(p, x[None, :], "bce")
        doubled = net.gradient(p, np.stack([x, x]), "bce")
        for a, b in zip(single, doubled):
            assert np.allclose(a, b, atol=1e-15)

    def test_bce_clamp_keeps_gradient_finite(self):
        # huge weights saturate the sigmoid; the clamp must keep loss and grad finite
        p = random_net([3, 2, 3], ["relu", "sigmoid"], 2, scale=200.0)
        batch = np.array([[1.0, 0.0, 1.0]])
        assert np.isfinite(net.surrogate_loss(p, batch, "bce"))
        for g in net.gradient(p, batch, "bce"):
            assert np.all(np.isfinite(g))


class TestEncodeDecode:
    def test_composition_exact(self):
        p = random_net([6, 4, 2, 4, 6], ["relu", "relu", "relu", "sigmoid"], 5,
                       bottleneck_index=2)
        x = np.random.default_rng(11).normal(size=(100, 6))
        assert np.array_equal(net.decode(p, net.encode(p, x)), net.forward(p, x))

    def test_code_length_and_output_range(self):
        p = random_net([6, 4, 2, 4, 6], ["relu", "relu", "relu", "sigmoid"], 6,
                       bottleneck_index=2)
        z = net.encode(p, np.zeros(6))
        assert z.shape == (2,)
        out = net.decode(p, np.random.default_rng(3).normal(size=2))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_bad_code_length_rejected(self):
        p = random_net([6, 4, 2, 4, 6], ["relu", "relu", "relu", "sigmoid"], 7,
                       bottleneck_index=2)
        with pytest.raises(ValueError, match="dim 3.*expected 2"):
            net.decode(p, np.zeros(3))

    def test_plain_stack_has_no_split(self):
        p = net.NetworkParams([np.eye(3)], ["relu"], 1)
        with pytest.raises(ValueError, match="no decoder"):
            net.decode(p, np.zeros(3))


class TestTrain:
    ARCH = net.autoencoder_arch([8, 4, 8])

    def make_data(self, seed=0):
        return gen_clustered(2, 8, 1, 20, seed=seed).dataset.floats()

    def test_zero_learning_rate_keeps_init(self):
        cfg = net.TrainConfig(learning_rate=0.0, epochs=1, batch_size=4, seed=3)
        params, _ = net.train(self.ARCH, self.make_data(), cfg)
        init = net.init_params(self.ARCH, 1, seed=3)
        for w, w0 in zip(params.weights, init.weights):
            assert np.array_equal(w, w0)

    def test_same_seed_bit_identical(self):
        cfg = net.TrainConfig(learning_rate=0.3, epochs=3, batch_size=4, seed=12)
        data = self.make_data()
        a, _ = net.train(self.ARCH, data, cfg)
        b, _ = net.train(self.ARCH, data, cfg)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.weights, b.weights))

    def test_final_loss_not_worse(self):
        cfg = net.TrainConfig(learning_rate=0.3, epochs=10, batch_size=8, seed=0)
        _, history = net.train(self.ARCH, self.make_data(), cfg)
        assert history[-1] <= history[0]

    def test_margin_loss_improves_on_clustered_data(self):
        gen = gen_clustered(4, 32, 1, 50, seed=8)
        arch = net.autoencoder_arch([32, 16, 4, 16, 32])
        cfg = net.TrainConfig(learning_rate=0.03, epochs=60, batch_size=16, seed=1)
        init = net.init_params(arch, 2, seed=cfg.seed)
        before = empirical_margin_loss(init, gen.dataset, 0.45)
        params, _ = net.train(arch, gen.dataset.floats(), cfg)
        after = empirical_margin_loss(params, gen.dataset, 0.45)
        # pinned from this seeded run: 1.0 at init, ~0.216 after training
        assert after < before
        assert after < 0.3

    def test_bce_rejects_non_binary(self):
        cfg = net.TrainConfig(learning_rate=0.1, epochs=1, batch_size=4)
        data = self.make_data() + 0.25
        with pytest.raises(ValueError, match="binary"):
            net.train(self.ARCH, data, cfg)

    def test_rejects_non_autoencoder_arch(self):
        cfg = net.TrainConfig(learning_rate=0.1, epochs=1, batch_size=4)
        with pytest.raises(ValueError, match="map dim"):
            net.train(net.autoencoder_arch([8, 4, 6]), self.make_data(), cfg)


class TestNormalizeWeights:
    def test_balanced_net_is_fixed_point(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(5, 5))
        from aebound.linalg import spectral_norm
        w /= spectral_norm(w, tol=1e-13)
        p = net.NetworkParams([w, w.T.copy() / spectral_norm(w.T, tol=1e-13)],
                              ["relu", "identity"], 1)
        q = net.normalize_weights(p)
        for a, b in zip(p.weights, q.weights):
            assert np.allclose(a, b, atol=1e-9)

    def test_two_layer_norms_rebalanced(self):
        from aebound.linalg import spectral_norm
        p = net.NetworkParams([4.0 * np.eye(3), 1.0 * np.eye(3)], ["relu", "identity"], 1)
        q = net.normalize_weights(p)
        assert abs(spectral_norm(q.weights[0]) - 2.0) < 1e-9
        assert abs(spectral_norm(q.weights[1]) - 2.0) < 1e-9
        x = np.random.default_rng(0).normal(size=(10, 3))
        assert np.allclose(net.forward(q, x), net.forward(p, x), atol=1e-6)

    def test_spectral_product_preserved(self):
        from aebound.linalg import spectral_norm
        p = random_net([6, 5, 4, 3, 6], ["relu", "relu", "relu", "sigmoid"], 21)
        q = net.normalize_weights(p)
        prod_before = np.prod([spectral_norm(w, tol=1e-12) for w in p.weights])
        prod_after = np.prod([spectral_norm(w, tol=1e-12) for w in q.weights])
        assert abs(prod_after - prod_before) / prod_before < 1e-8

    def test_outputs_preserved_with_sigmoid_head(self):
        p = random_net([6, 5, 4, 6], ["relu", "relu", "sigmoid"], 22)
        q = net.normalize_weights(p)
        x = np.random.default_rng(23).normal(size=(50, 6))
        assert np.allclose(net.forward(q, x), net.forward(p, x), atol=1e-6)

    def test_zero_norm_rejected(self):
        p = net.NetworkParams([np.zeros((3, 3)), np.eye(3)], ["relu", "identity"], 1)
        with pytest.raises(ValueError, match="degenerate"):
            net.normalize_weights(p)

    def test_hidden_sigmoid_rejected(self):
        p = random_net([4, 3, 4], ["sigmoid", "sigmoid"], 1)
        with pytest.raises(ValueError, match="homogeneous"):
            net.normalize_weights(p)

    @pytest.mark.parametrize("seed", range(5))
    def test_relu_homogeneity(self, seed):
        # rescale layers by positive factors with product 1: outputs must not move
        p = random_net([5, 4, 3, 5], ["relu", "relu", "identity"], 30 + seed)
        rng = np.random.default_rng(60 + seed)
        factors = rng.uniform(0.2, 3.0, size=2)
        factors = np.append(factors, 1.0 / np.prod(factors))
        q = net.NetworkParams([f * w for f, w in zip(factors, p.weights)],
                              list(p.activations), p.bottleneck_index)
        x = rng.normal(size=(20, 5))
        assert np.allclose(net.forward(q, x), net.forward(p, x), atol=1e-6)


class TestBiasedNetworks:
    def biased_net(self, seed=0):
        rng = np.random.default_rng(seed)
        dims = [5, 3, 2, 3, 5]
        weights = [0.7 * rng.normal(size=(dims[i + 1], dims[i])) for i in range(4)]
        biases = [0.3 * rng.normal(size=dims[i + 1]) for i in range(4)]
        return net.NetworkParams(weights, ["relu", "relu", "relu", "sigmoid"], 2, biases)

    def test_forward_uses_biases(self):
        p = net.NetworkParams([np.zeros((2, 2))], ["identity"], 1,
                              [np.array([1.5, -2.0])])
        assert np.array_equal(net.forward(p, np.zeros(2)), [1.5, -2.0])

    @pytest.mark.parametrize("surrogate", ["mse", "bce"])
    def test_finite_difference_including_biases(self, surrogate):
        p = self.biased_net()
        batch = np.random.default_rng(1).integers(0, 2, size=(3, 5)).astype(float)
        w_grads, b_grads = net.gradient_with_biases(p, batch, surrogate)
        fd_w = fd_gradient(lambda q: net.surrogate_loss(q, batch, surrogate), p)
        for g, f in zip(w_grads, fd_w):
            err = np.abs(g - f)
            assert ((err < 1e-7) | (err / np.maximum(np.abs(f), 1e-12) < 1e-4)).all()
        # finite differences over the bias entries, by direct perturbation
        for layer, b in enumerate(p.biases):
            for j in range(b.shape[0]):
                orig = b[j]
                b[j] = orig + 1e-5
                up = net.surrogate_loss(p, batch, surrogate)
                b[j] = orig - 1e-5
                down = net.surrogate_loss(p, batch, surrogate)
                b[j] = orig
                fd = (up - down) / 2e-5
                err = abs(b_grads[layer][j] - fd)
                assert err < 1e-7 or err / max(abs(fd), 1e-12) < 1e-4

    def test_bias_gradient_requires_biases(self):
        p = random_net([4, 2, 4], ["relu", "sigmoid"], 0)
        with pytest.raises(ValueError, match="no biases"):
            net.gradient_with_biases(p, np.zeros((1, 4)), "mse")

    def test_train_with_biases(self):
        data = gen_clustered(2, 8, 1, 20, seed=0).dataset.floats()
        cfg = net.TrainConfig(learning_rate=0.03, epochs=10, batch_size=8, seed=1)
        params, history = net.train(net.autoencoder_arch([8, 4, 8]), data, cfg,
                                    use_bias=True)
        assert params.biases is not None
        assert any(np.any(b != 0) for b in params.biases)  # biases actually moved
        assert history[-1] <= history[0]

    def test_checkpoint_round_trip_with_biases(self, tmp_path):
        p = self.biased_net(seed=5)
        path = tmp_path / "model.json"
        net.save_checkpoint(p, path)
        q = net.load_checkpoint(path)
        assert q.biases is not None
        for a, b in zip(p.biases, q.biases):
            assert a.tobytes() == b.tobytes()
        x = np.random.default_rng(2).normal(size=(10, 5))
        assert np.array_equal(net.forward(p, x), net.forward(q, x))

    def test_rebalancing_rejects_biases(self):
        with pytest.raises(ValueError, match="bias-free"):
            net.normalize_weights(self.biased_net())

    def test_encode_decode_split_carries_biases(self):
        p = self.biased_net(seed=7)
        x = np.random.default_rng(3).normal(size=(20, 5))
        assert np.array_equal(net.decode(p, net.encode(p, x)), net.forward(p, x))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = random_net([6, 4, 2, 4, 6], ["relu", "relu", "relu", "sigmoid"], 40,
                       bottleneck_index=2)
        path = tmp_path / "model.json"
        net.save_checkpoint(p, path, config_hash="abc123")
        q = net.load_checkpoint(path)
        assert q.bottleneck_index == p.bottleneck_index
        assert q.activations == p.activations
        for a, b in zip(p.weights, q.weights):
            assert a.tobytes() == b.tobytes()

    def test_file_is_json_with_expected_fields(self, tmp_path):
        p = random_net([4, 2, 4], ["relu", "sigmoid"], 41)
        path = tmp_path / "model.json"
        net.save_checkpoint(p, path)
        d = json.loads(path.read_text())
        assert set(d) == {"dims", "bottleneck_index", "activations", "weights"}
        assert d["dims"] == [4, 2, 4]

    def test_corrupt_weight_count_rejected(self, tmp_path):
        p = random_net([4, 2, 4], ["relu", "sigmoid"], 42)
        path = tmp_path / "model.json"
        net.save_checkpoint(p, path)
        d = json.loads(path.read_text())
        d["weights"][0] = d["weights"][0][:-1]
        path.write_text(json.dumps(d))
        with pytest.raises(ValueError, match="entries"):
            net.load_checkpoint(path)
