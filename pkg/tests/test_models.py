import numpy as np
import pytest

from plpartition.losses import attrank_loss
from plpartition.models import (
    FreeParamModel,
    IndexOutOfRangeError,
    LinearModel,
    MlpModel,
    accumulate_backward,
    backward,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from plpartition.optim import AdaGrad, Adam, Sgd, make_optimizer

IDX = np.array([0, 2], dtype=np.int64)
VAL = np.array([1.0, -0.5])


class TestForward:
    def test_free_param_ignores_features(self):
        model = FreeParamModel(3, init=np.array([1.0, 2.0, 3.0]))
        assert forward(model, IDX, VAL).tolist() == [1.0, 2.0, 3.0]

    def test_mlp_zero_weights_gives_bias(self):
        model = MlpModel(4, 3, hidden=8)
        model.w1[...] = 0.0
        model.w2[...] = 0.0
        model.b2[...] = np.array([0.5, -1.0, 0.0])
        out = forward(model, IDX, VAL)
        assert np.allclose(out, model.b2)

    def test_linear_one_hot_selects_row(self):
        model = LinearModel(2, 2)
        model.weight[...] = np.array([[1.0, 2.0], [3.0, 4.0]])
        model.bias[...] = 0.0
        out = forward(model, np.array([1]), np.array([1.0]))
        assert out.tolist() == [3.0, 4.0]

    def test_feature_index_out_of_range(self):
        model = LinearModel(2, 2)
        with pytest.raises(IndexOutOfRangeError):
            forward(model, np.array([5]), np.array([1.0]))


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        model = MlpModel(4, 3, hidden=8, rng=np.random.default_rng(0))
        grads = backward(model, IDX, VAL, np.zeros(3))
        assert all(np.all(g == 0.0) for g in grads)

    def test_free_param_grad_is_upstream(self):
        model = FreeParamModel(3)
        up = np.array([0.1, -0.2, 0.3])
        assert np.array_equal(backward(model, IDX, VAL, up)[0], up)

    def test_end_to_end_fd_through_mlp(self):
        # 10 features, 5 labels; loss(params) finite differences vs backprop
        rng = np.random.default_rng(5)
        model = MlpModel(10, 5, hidden=6, rng=rng)
        idx = np.array([0, 3, 7], dtype=np.int64)
        val = rng.uniform(0.5, 1.5, 3)
        relevant = [1, 4]

        def loss_value():
            return attrank_loss(relevant, model.forward(idx, val)).value

        lv = attrank_loss(relevant, model.forward(idx, val))
        grads = model.backward(idx, val, lv.grad)
        h = 1e-6
        for param, grad in zip(model.params(), grads):
            flat_p, flat_g = param.ravel(), grad.ravel()
            for k in range(0, flat_p.size, max(1, flat_p.size // 7)):
                keep = flat_p[k]
                flat_p[k] = keep + h
                up = loss_value()
                flat_p[k] = keep - h
                down = loss_value()
                flat_p[k] = keep
                assert flat_g[k] == pytest.approx((up - down) / (2 * h), abs=1e-4)

    def test_accumulate_matches_backward(self):
        rng = np.random.default_rng(6)
        for model in (FreeParamModel(5), LinearModel(4, 5, rng=rng),
                      MlpModel(4, 5, hidden=3, rng=rng)):
            up = rng.uniform(-1, 1, 5)
            idx = np.array([1, 3], dtype=np.int64)
            val = np.array([0.7, -0.2])
            buffers = [np.zeros_like(p) for p in model.params()]
            accumulate_backward(model, idx, val, up, buffers)
            for buf, ref in zip(buffers, model.backward(idx, val, up)):
                assert np.allclose(buf, ref)


class TestOptimizers:
    def test_sgd_step(self):
        p = np.array([1.0, 2.0])
        Sgd([p], lr=0.5).step([p], [np.array([1.0, -2.0])])
        assert p.tolist() == [0.5, 3.0]

    def test_adagrad_first_step_normalizes_by_abs_gradient(self):
        p = np.zeros(3)
        g = np.array([0.3, -2.0, 0.0])
        opt = AdaGrad([p], lr=0.1)
        opt.step([p], [g])
        expected = -0.1 * g / (np.abs(g) + 1e-10)
        assert np.allclose(p, expected)

    def test_adam_first_step_bounded_and_sign_consistent(self):
        p = np.zeros(3)
        g = np.array([1e-3, -5.0, 2.0])
        opt = Adam([p], lr=0.01)
        opt.step([p], [g])
        assert np.all(np.sign(p) == -np.sign(g))
        assert np.all(np.abs(p) <= 0.01 * (1 + 1e-6))

    def test_adam_moments_follow_defaults(self):
        p = np.zeros(1)
        opt = Adam([p], lr=0.1)
        opt.step([p], [np.array([2.0])])
        assert opt.m[0][0] == pytest.approx(0.2)       # (1-0.9) * g
        assert opt.v[0][0] == pytest.approx(0.004)     # (1-0.999) * g^2

    def test_make_optimizer_dispatch(self):
        p = [np.zeros(2)]
        assert isinstance(make_optimizer("sgd", p, 0.1), Sgd)
        assert isinstance(make_optimizer("adagrad", p, 0.1), AdaGrad)
        assert isinstance(make_optimizer("adam", p, 0.1), Adam)
        with pytest.raises(ValueError):
            make_optimizer("lbfgs", p, 0.1)


class TestCheckpoints:
    def test_round_trip_mlp(self, tmp_path):
        rng = np.random.default_rng(7)
        model = MlpModel(6, 4, hidden=5, rng=rng)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, model, config={"loss": "pl-partition"}, seed=9)
        loaded, meta = load_checkpoint(path)
        assert meta["kind"] == "mlp"
        assert meta["seed"] == 9
        assert meta["config"]["loss"] == "pl-partition"
        for a, b in zip(model.params(), loaded.params()):
            assert np.array_equal(a, b)

    def test_round_trip_free_param(self, tmp_path):
        model = FreeParamModel(4, init=np.array([0.1, 0.2, 0.3, 0.4]))
        path = tmp_path / "free.npz"
        save_checkpoint(path, model)
        loaded, meta = load_checkpoint(path)
        assert isinstance(loaded, FreeParamModel)
        assert np.array_equal(loaded.theta, model.theta)

    def test_clone_is_independent(self):
        model = FreeParamModel(3, init=np.array([1.0, 2.0, 3.0]))
        other = model.clone()
        other.theta[0] = 99.0
        assert model.theta[0] == 1.0
