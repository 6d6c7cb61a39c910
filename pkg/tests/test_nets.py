"""Network primitives: orthogonal init, forward/backward against central
finite differences, Gaussian head identities, Adam behavior."""

import numpy as np
import pytest

from meiolab import nets


class TestInit:
    def test_orthogonal_columns(self):
        rng = np.random.default_rng(0)
        w = nets.orthogonal(rng, (8, 4), gain=1.0)
        assert np.allclose(w.T @ w, np.eye(4), atol=1e-10)

    def test_orthogonal_gain(self):
        rng = np.random.default_rng(0)
        w = nets.orthogonal(rng, (6, 6), gain=2.0)
        assert np.allclose(w.T @ w, 4.0 * np.eye(6), atol=1e-9)

    def test_mlp_shapes_and_zero_bias(self):
        rng = np.random.default_rng(1)
        p = nets.init_mlp(rng, [3, 4, 4, 2], out_gain=0.01)
        assert p["W0"].shape == (3, 4) and p["W2"].shape == (4, 2)
        assert np.all(p["b0"] == 0) and np.all(p["b2"] == 0)
        # small output gain keeps initial outputs near zero
        assert np.abs(p["W2"]).max() < 0.1


class TestForward:
    def test_zero_weights_zero_output(self):
        p = {k: np.zeros_like(v) for k, v in
             nets.init_mlp(np.random.default_rng(0), [2, 4, 1]).items()}
        out, _ = nets.mlp_forward(p, np.ones((5, 2)))
        assert np.all(out == 0)

    def test_identical_inputs_identical_outputs(self):
        p = nets.init_mlp(np.random.default_rng(2), [3, 4, 2])
        x = np.tile(np.array([[0.1, -0.5, 0.9]]), (4, 1))
        out, _ = nets.mlp_forward(p, x)
        assert np.all(out == out[0])

    def test_finite_on_random_inputs(self):
        rng = np.random.default_rng(3)
        p = nets.init_mlp(rng, [6, 8, 8, 3])
        out, _ = nets.mlp_forward(p, rng.uniform(-1, 1, (64, 6)))
        assert np.all(np.isfinite(out))


def fd_grad(f, arr, eps=1e-6):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        hi = f()
        arr[idx] = orig - eps
        lo = f()
        arr[idx] = orig
        g[idx] = (hi - lo) / (2 * eps)
        it.iternext()
    return g


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom


class TestBackward:
    def test_mlp_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        p = nets.init_mlp(rng, [3, 4, 4, 2])
        x = rng.uniform(-1, 1, (8, 3)) + 0.05   # nudge off relu kinks
        w = rng.normal(size=(8, 2))             # fixed linear loss weights

        def loss():
            out, _ = nets.mlp_forward(p, x)
            return float(np.sum(w * out))

        out, cache = nets.mlp_forward(p, x)
        grads, dx = nets.mlp_backward(p, cache, w)
        for k in p:
            assert rel_err(grads[k], fd_grad(loss, p[k])) < 1e-6, k
        # input gradient too
        def loss_x():
            out, _ = nets.mlp_forward(p, x)
            return float(np.sum(w * out))
        assert rel_err(dx, fd_grad(loss_x, x)) < 1e-6


class TestGaussianHead:
    def test_deterministic_returns_clamped_mean(self):
        mean = np.array([[0.5, -3.0]])
        a, pre, _, _ = nets.gaussian_head(mean, np.zeros(2), deterministic=True)
        assert np.allclose(a, [[0.5, -1.0]])
        assert np.allclose(pre, mean)

    def test_tiny_std_collapses_to_mean(self):
        rng = np.random.default_rng(5)
        mean = np.array([[0.3, -0.2]])
        a, _, _, _ = nets.gaussian_head(mean, np.full(2, -20.0), rng)
        assert np.allclose(a, mean, atol=1e-6)

    def test_logp_at_mean_unit_std(self):
        mean = np.zeros((1, 3))
        logp = nets.gaussian_logp(mean, np.zeros(3), mean)
        assert np.isclose(logp[0], 3 * (-0.5 * np.log(2 * np.pi)))

    def test_entropy_unit_std(self):
        _, _, _, ent = nets.gaussian_head(
            np.zeros((1, 2)), np.zeros(2), deterministic=True
        )
        assert np.isclose(ent, 2 * 0.5 * np.log(2 * np.pi * np.e))

    def test_logp_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        mean = rng.normal(size=(8, 2))
        log_std = rng.normal(size=2) * 0.3
        sample = rng.normal(size=(8, 2))
        dlogp = rng.normal(size=8)

        def loss():
            return float(dlogp @ nets.gaussian_logp(mean, log_std, sample))

        dmean, dls = nets.gaussian_logp_grads(mean, log_std, sample, dlogp)
        assert rel_err(dmean, fd_grad(loss, mean)) < 1e-6
        assert rel_err(dls, fd_grad(loss, log_std)) < 1e-6


class TestClipAndAdam:
    def test_global_norm(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert np.isclose(nets.global_norm(g), 5.0)

    def test_clip_rescales_only_above_max(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped = nets.clip_global_norm(g, 1.0)
        assert np.isclose(nets.global_norm(clipped), 1.0)
        same = nets.clip_global_norm(g, 10.0)
        assert same["a"] is g["a"]

    def test_adam_first_step_size(self):
        p = {"w": np.array([1.0])}
        opt = nets.Adam(p, lr=0.1)
        out = opt.step(p, {"w": np.array([2.0])})
        # bias-corrected first step moves by ~lr regardless of grad scale
        assert np.isclose(out["w"][0], 1.0 - 0.1, atol=1e-6)

    def test_adam_zero_lr_is_identity(self):
        rng = np.random.default_rng(7)
        p = {"w": rng.normal(size=(3, 3))}
        opt = nets.Adam(p, lr=0.0)
        out = opt.step(p, {"w": rng.normal(size=(3, 3))})
        assert np.array_equal(out["w"], p["w"])

    def test_tree_flatten_round_trip(self):
        rng = np.random.default_rng(8)
        p = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=4)}
        flat = nets.tree_flatten(p)
        back = nets.tree_unflatten(p, flat)
        for k in p:
            assert np.array_equal(p[k], back[k])
