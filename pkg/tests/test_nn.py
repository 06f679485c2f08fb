import numpy as np
import pytest

from ltmap.nn import (AdamWState, CosineSchedule, Mlp, adamw_step, clip_global_norm,
                      cosine_lr, make_mlp, mlp_backward, mlp_forward,
                      mlp_forward_cached, mlp_param_arrays, softplus, softplus_inv)
from ltmap.nn import _gelu, _gelu_grad


class TestActivations:
    def test_softplus_fixtures(self):
        assert softplus(0.0) == pytest.approx(np.log(2.0), rel=1e-15)
        # saturation: softplus(x) -> x for large x, -> 0 for very negative x
        assert softplus(50.0) == pytest.approx(50.0, rel=1e-15)
        assert softplus(-50.0) == pytest.approx(np.exp(-50.0), rel=1e-10)
        assert np.all(softplus(np.linspace(-30, 30, 101)) > 0)

    def test_softplus_inv_roundtrip(self):
        x = np.linspace(-5, 5, 41)
        np.testing.assert_allclose(softplus_inv(softplus(x)), x, atol=1e-10)
        assert softplus_inv(softplus(1.0)) == pytest.approx(1.0, rel=1e-12)

    def test_softplus_inv_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            softplus_inv(0.0)
        with pytest.raises(ValueError):
            softplus_inv(np.array([1.0, -0.5]))

    def test_gelu_fixtures(self):
        # x * Phi(x) with the exact normal CDF
        assert _gelu(0.0) == 0.0
        assert _gelu(1.0) == pytest.approx(0.8413447460685429, rel=1e-12)
        assert _gelu(10.0) == pytest.approx(10.0, rel=1e-12)
        assert _gelu(-10.0) == pytest.approx(0.0, abs=1e-12)

    def test_gelu_grad_matches_finite_differences(self):
        x = np.linspace(-4, 4, 81)
        eps = 1e-6
        fd = (_gelu(x + eps) - _gelu(x - eps)) / (2 * eps)
        np.testing.assert_allclose(_gelu_grad(x), fd, rtol=1e-7, atol=1e-9)


class TestMlpForward:
    def test_single_affine_layer(self):
        mlp = Mlp(weights=[np.array([[2.0]])], biases=[np.array([3.0])])
        x = np.array([[0.0], [1.0], [-2.0]])
        np.testing.assert_allclose(mlp_forward(mlp, x), 2.0 * x + 3.0)

    def test_softplus_head(self):
        mlp = Mlp(weights=[np.array([[1.0]])], biases=[np.array([0.0])],
                  output_activation="softplus")
        x = np.array([[0.0], [2.0]])
        np.testing.assert_allclose(mlp_forward(mlp, x), softplus(x))

    def test_hidden_layer_applies_gelu(self):
        mlp = Mlp(weights=[np.array([[1.0]]), np.array([[1.0]])],
                  biases=[np.array([0.0]), np.array([0.0])])
        x = np.array([[0.5], [-1.5]])
        np.testing.assert_allclose(mlp_forward(mlp, x), _gelu(x))

    def test_rejects_bad_input_shape(self):
        mlp = make_mlp(3, 1, hidden=(4,), rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_forward(mlp, np.zeros((5, 2)))
        with pytest.raises(ValueError):
            mlp_forward(mlp, np.zeros(3))

    def test_layer_validation(self):
        with pytest.raises(ValueError):
            Mlp(weights=[np.zeros((2, 3)), np.zeros((4, 1))],
                biases=[np.zeros(3), np.zeros(1)])
        with pytest.raises(ValueError):
            Mlp(weights=[np.zeros((2, 3))], biases=[np.zeros(2)])
        with pytest.raises(ValueError):
            Mlp(weights=[np.zeros((2, 1))], biases=[np.zeros(1)],
                output_activation="relu")


def fd_grads(mlp, x, dy, eps=1e-6):
    """Central-difference gradients of sum(dy * forward(x)) for all params and x."""
    def loss():
        return float(np.sum(dy * mlp_forward(mlp, x)))

    param_grads = []
    for arr in mlp_param_arrays(mlp):
        g = np.zeros_like(arr)
        flat, gf = arr.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            dn = loss()
            flat[i] = orig
            gf[i] = (up - dn) / (2 * eps)
        param_grads.append(g)
    gx = np.zeros_like(x)
    fx, gxf = x.ravel(), gx.ravel()
    for i in range(fx.size):
        orig = fx[i]
        fx[i] = orig + eps
        up = loss()
        fx[i] = orig - eps
        dn = loss()
        fx[i] = orig
        gxf[i] = (up - dn) / (2 * eps)
    return param_grads, gx


class TestMlpBackward:
    def test_small_nets_many_seeds(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            act = "softplus" if seed % 2 else "identity"
            mlp = make_mlp(2, 1, hidden=(3,), rng=rng, output_activation=act)
            x = rng.normal(size=(3, 2))
            dy = rng.normal(size=(3, 1))
            y, cache = mlp_forward_cached(mlp, x)
            dws, dbs, dx = mlp_backward(mlp, cache, dy)
            fd_params, fd_x = fd_grads(mlp, x, dy)
            for (dw, db), fw, fb in zip(zip(dws, dbs), fd_params[::2], fd_params[1::2]):
                np.testing.assert_allclose(dw, fw, rtol=1e-5, atol=1e-8)
                np.testing.assert_allclose(db, fb, rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(dx, fd_x, rtol=1e-5, atol=1e-8)

    def test_full_width_net(self):
        rng = np.random.default_rng(7)
        mlp = make_mlp(3, 1, hidden=(64, 64, 64), rng=rng)
        x = rng.normal(size=(4, 3))
        dy = rng.normal(size=(4, 1))
        _, cache = mlp_forward_cached(mlp, x)
        dws, dbs, dx = mlp_backward(mlp, cache, dy)
        fd_params, fd_x = fd_grads(mlp, x, dy)
        analytic = np.concatenate([a.ravel() for pair in zip(dws, dbs) for a in pair])
        numeric = np.concatenate([a.ravel() for a in fd_params])
        scale = np.max(np.abs(numeric))
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-6 * scale)
        np.testing.assert_allclose(dx, fd_x, rtol=1e-5, atol=1e-8)

    def test_zero_cotangent_gives_zero_grads(self):
        rng = np.random.default_rng(1)
        mlp = make_mlp(2, 2, hidden=(4,), rng=rng)
        x = rng.normal(size=(5, 2))
        _, cache = mlp_forward_cached(mlp, x)
        dws, dbs, dx = mlp_backward(mlp, cache, np.zeros((5, 2)))
        for g in dws + dbs + [dx]:
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_batch_gradient_is_sum_of_samples(self):
        rng = np.random.default_rng(2)
        mlp = make_mlp(2, 1, hidden=(3,), rng=rng)
        x = rng.normal(size=(4, 2))
        dy = rng.normal(size=(4, 1))
        _, cache = mlp_forward_cached(mlp, x)
        dws, dbs, dx = mlp_backward(mlp, cache, dy)
        acc_w = [np.zeros_like(w) for w in mlp.weights]
        acc_b = [np.zeros_like(b) for b in mlp.biases]
        for i in range(4):
            _, ci = mlp_forward_cached(mlp, x[i:i + 1])
            dwi, dbi, dxi = mlp_backward(mlp, ci, dy[i:i + 1])
            for a, g in zip(acc_w, dwi):
                a += g
            for a, g in zip(acc_b, dbi):
                a += g
            np.testing.assert_allclose(dxi[0], dx[i], rtol=1e-12)
        for a, g in zip(acc_w + acc_b, dws + dbs):
            np.testing.assert_allclose(a, g, rtol=1e-12, atol=1e-15)

    def test_cotangent_shape_checked(self):
        rng = np.random.default_rng(3)
        mlp = make_mlp(2, 1, hidden=(3,), rng=rng)
        _, cache = mlp_forward_cached(mlp, rng.normal(size=(4, 2)))
        with pytest.raises(ValueError):
            mlp_backward(mlp, cache, np.zeros((4, 2)))


class TestMakeMlp:
    def test_shapes_and_param_count(self):
        mlp = make_mlp(3, 1, hidden=(64, 64, 64), rng=np.random.default_rng(0))
        assert [w.shape for w in mlp.weights] == [(3, 64), (64, 64), (64, 64), (64, 1)]
        assert mlp.n_params == 3 * 64 + 64 + 2 * (64 * 64 + 64) + 64 + 1

    def test_no_hidden_layers(self):
        mlp = make_mlp(2, 1, hidden=(), rng=np.random.default_rng(0))
        assert len(mlp.weights) == 1

    def test_zero_input_dim_learned_constant(self):
        mlp = make_mlp(0, 1, hidden=(), rng=np.random.default_rng(0), final_bias=2.5)
        y = mlp_forward(mlp, np.zeros((7, 0)))
        np.testing.assert_allclose(y, np.full((7, 1), 2.5))

    def test_zero_final_scale_gives_constant_head(self):
        rng = np.random.default_rng(4)
        mlp = make_mlp(3, 1, hidden=(8,), rng=rng, final_weight_scale=0.0,
                       final_bias=-1.25)
        y = mlp_forward(mlp, rng.normal(size=(6, 3)))
        np.testing.assert_allclose(y, np.full((6, 1), -1.25))

    def test_he_initialization_scale(self):
        mlp = make_mlp(400, 400, hidden=(), rng=np.random.default_rng(5),
                       output_activation="identity")
        std = mlp.weights[0].std()
        assert std == pytest.approx(np.sqrt(2.0 / 400), rel=0.02)


class TestAdamW:
    def test_first_step_moves_against_gradient_sign(self):
        state = AdamWState(n_params=3, weight_decay=0.0)
        grads = np.array([1.0, -2.0, 0.5])
        out = adamw_step(state, np.zeros(3), grads, lr=0.1)
        np.testing.assert_allclose(out, -0.1 * np.sign(grads), rtol=1e-6)
        assert state.step == 1

    def test_zero_grad_pure_decay(self):
        state = AdamWState(n_params=2, weight_decay=0.01)
        params = np.array([4.0, -8.0])
        out = adamw_step(state, params, np.zeros(2), lr=0.5)
        np.testing.assert_array_equal(out, params * (1.0 - 0.5 * 0.01))

    def test_matches_reference_recursion(self):
        rng = np.random.default_rng(6)
        n = 5
        state = AdamWState(n_params=n, weight_decay=1e-2)
        params = rng.normal(size=n)
        ref = params.copy()
        m = np.zeros(n)
        v = np.zeros(n)
        for t in range(1, 6):
            g = rng.normal(size=n)
            params = adamw_step(state, params, g, lr=1e-3)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref = ref * (1 - 1e-3 * 1e-2)
            ref = ref - 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            np.testing.assert_allclose(params, ref, rtol=1e-13)

    def test_rejects_nonfinite_and_bad_shapes(self):
        state = AdamWState(n_params=2)
        with pytest.raises(ValueError):
            adamw_step(state, np.zeros(2), np.array([np.nan, 0.0]), lr=1e-3)
        with pytest.raises(ValueError):
            adamw_step(state, np.zeros(3), np.zeros(2), lr=1e-3)


class TestCosineSchedule:
    def test_endpoints_and_midpoint(self):
        s = CosineSchedule(lr0=1e-3, lr_min=1e-6, total=3000)
        assert cosine_lr(s, 0) == pytest.approx(1e-3, rel=1e-15)
        assert cosine_lr(s, 3000) == pytest.approx(1e-6, rel=1e-12)
        assert cosine_lr(s, 1500) == pytest.approx((1e-3 + 1e-6) / 2, rel=1e-12)

    def test_monotone_decreasing(self):
        s = CosineSchedule(lr0=1e-2, lr_min=0.0, total=100)
        lrs = [cosine_lr(s, e) for e in range(101)]
        assert all(a > b for a, b in zip(lrs, lrs[1:]))

    def test_validation(self):
        with pytest.raises(ValueError):
            CosineSchedule(lr0=1e-3, lr_min=1e-2, total=10)
        with pytest.raises(ValueError):
            CosineSchedule(total=0)
        s = CosineSchedule(total=10)
        with pytest.raises(ValueError):
            cosine_lr(s, 11)


class TestClipGlobalNorm:
    def test_below_threshold_unchanged(self):
        g = np.array([3.0, 4.0])
        np.testing.assert_array_equal(clip_global_norm(g, 10.0), g)

    def test_above_threshold_rescaled_to_max(self):
        g = np.array([30.0, 40.0])
        clipped = clip_global_norm(g, 10.0)
        assert np.linalg.norm(clipped) == pytest.approx(10.0, rel=1e-12)
        np.testing.assert_allclose(clipped, np.array([6.0, 8.0]), rtol=1e-12)

    def test_zero_vector(self):
        g = np.zeros(4)
        np.testing.assert_array_equal(clip_global_norm(g, 1.0), g)
