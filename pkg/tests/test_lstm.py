import json

import numpy as np
import pytest

from gazelab.errors import ValidationError
from gazelab.lstm import (
    GATES,
    Hyperparams,
    LstmModel,
    ShapeError,
    TrainingError,
    forward,
    gradient_check,
    init_model,
    loss_and_gradients,
    max_relative_error,
    numeric_gradients,
    reconstruction_error,
    train,
)

RNG = np.random.Generator(np.random.PCG64(99))


def small_model(d=4, h=5, seed=7):
    return init_model(d, h, seed, np.zeros(d), np.ones(d))


def sinusoid_windows(n=20, t=16, d=4, noise=0.05, seed=5):
    rng = np.random.Generator(np.random.PCG64(seed))
    windows = []
    for i in range(n):
        phase = i / n
        steps = np.arange(t)
        w = np.stack(
            [np.sin(2 * np.pi * (0.06 * steps + phase + 0.13 * f)) for f in range(d)],
            axis=1,
        )
        windows.append(w + rng.normal(0, noise, (t, d)))
    x = np.array(windows)
    mu = x.reshape(-1, d).mean(axis=0)
    sd = x.reshape(-1, d).std(axis=0)
    return (x - mu) / sd


class TestForward:
    def test_zero_weights_give_zero_output(self):
        model = small_model()
        for key in model.params:
            model.params[key][:] = 0.0
        x = RNG.normal(size=(3, 6, 4))
        y, _ = forward(model.params, x, model.hidden_dim)
        assert np.all(y == 0.0)

    def test_output_shape(self):
        model = small_model()
        x = RNG.normal(size=(2, 9, 4))
        y, _ = forward(model.params, x, model.hidden_dim)
        assert y.shape == x.shape


class TestGradientCheck:
    def test_freshly_initialized_small_model(self):
        model = init_model(3, 4, 11, np.zeros(3), np.ones(3))
        window = np.random.Generator(np.random.PCG64(1)).normal(size=(6, 3))
        assert gradient_check(model, window, 1e-5) < 1e-4

    def test_randomized_small_models(self):
        for seed, h, t in ((1, 4, 6), (2, 6, 9), (3, 8, 12)):
            rng = np.random.Generator(np.random.PCG64(seed))
            model = init_model(4, h, seed, np.zeros(4), np.ones(4))
            window = rng.normal(size=(t, 4))
            err = gradient_check(model, window, 1e-5)
            assert err < 1e-4, f"h={h} t={t}: {err}"

    def test_epsilon_domain(self):
        model = small_model()
        window = RNG.normal(size=(6, 4))
        with pytest.raises(ValidationError):
            gradient_check(model, window, 1e-8)
        with pytest.raises(ValidationError):
            gradient_check(model, window, 1e-2)

    def test_zero_window_zero_weights_error_is_zero(self):
        model = small_model()
        for key in model.params:
            model.params[key][:] = 0.0
        window = np.zeros((6, 4))
        x = window[None]
        _, analytic = loss_and_gradients(model.params, x, model.hidden_dim)
        numeric = numeric_gradients(model.params, x, model.hidden_dim, 1e-5)
        assert np.all(analytic["out.w"] == 0.0)
        assert np.all(numeric["out.w"] == 0.0)
        assert max_relative_error({"out.w": analytic["out.w"]},
                                  {"out.w": numeric["out.w"]}) == 0.0

    def test_forget_gate_sign_bug_is_caught(self):
        model = init_model(3, 4, 17, np.zeros(3), np.ones(3))
        rng = np.random.Generator(np.random.PCG64(4))
        x = rng.normal(size=(1, 6, 3))
        _, analytic = loss_and_gradients(model.params, x, model.hidden_dim)
        numeric = numeric_gradients(model.params, x, model.hidden_dim, 1e-5)
        # inject the bug: flip the sign of every forget-gate gradient block
        for layer in ("enc", "dec"):
            for kind in ("w_x", "w_h", "b"):
                analytic[f"{layer}.{kind}.forget"] = -analytic[f"{layer}.{kind}.forget"]
        assert max_relative_error(analytic, numeric) > 1e-2


class TestTrain:
    def test_same_seed_bit_identical(self):
        x = sinusoid_windows(n=8, t=8)
        hyper = Hyperparams(hidden_dim=6, epochs=40, learning_rate=0.5, seed=3)
        a = train(x, hyper, np.zeros(4), np.ones(4))
        b = train(x, hyper, np.zeros(4), np.ones(4))
        for key in a.params:
            assert np.array_equal(a.params[key], b.params[key])
        assert a.loss_history == b.loss_history

    def test_loss_decreases(self):
        x = sinusoid_windows(n=16, t=12)
        hyper = Hyperparams(hidden_dim=8, epochs=120, learning_rate=1.0, seed=5)
        model = train(x, hyper, np.zeros(4), np.ones(4))
        assert model.loss_history[-1] < model.loss_history[0]

    def test_divergence_reports_epoch(self):
        x = sinusoid_windows(n=4, t=8)
        hyper = Hyperparams(hidden_dim=4, epochs=400, learning_rate=1e12, seed=1,
                            clip_norm=1e300)
        with pytest.raises(TrainingError) as err:
            train(x, hyper, np.zeros(4), np.ones(4))
        assert err.value.epoch is not None

    def test_hyperparam_validation(self):
        with pytest.raises(ValidationError):
            Hyperparams(hidden_dim=0)
        with pytest.raises(ValidationError):
            Hyperparams(learning_rate=0.0)

    def test_forget_bias_initialized_to_one(self):
        model = small_model()
        assert np.all(model.params["enc.b.forget"] == 1.0)
        assert np.all(model.params["dec.b.forget"] == 1.0)

    def test_init_within_scale(self):
        model = small_model()
        for key, value in model.params.items():
            if key.endswith(".forget"):
                continue
            assert np.all(np.abs(value) <= 0.08)


class TestReconstructionError:
    def test_identity_stub_gives_zero(self):
        class Identity:
            def reconstruct(self, x):
                return x

        window = RNG.normal(size=(8, 4))
        assert reconstruction_error(Identity(), window) == 0.0

    def test_constant_offset_gives_one(self):
        class OffByOne:
            def reconstruct(self, x):
                return x + 1.0

        window = RNG.normal(size=(8, 4))
        assert reconstruction_error(OffByOne(), window) == pytest.approx(1.0)

    def test_non_negative_on_real_model(self):
        model = small_model()
        for _ in range(10):
            window = RNG.normal(size=(6, 4))
            assert reconstruction_error(model, window) >= 0.0

    def test_shape_mismatch(self):
        model = small_model(d=4)
        with pytest.raises(ShapeError):
            reconstruction_error(model, RNG.normal(size=(6, 3)))


class TestPersistence:
    def test_round_trip_identical_errors(self):
        x = sinusoid_windows(n=6, t=8)
        model = train(x, Hyperparams(hidden_dim=5, epochs=30, learning_rate=0.5, seed=9),
                      np.zeros(4), np.ones(4))
        blob = json.dumps(model.to_dict(), sort_keys=True)
        again = LstmModel.from_dict(json.loads(blob))
        probe = x[0]
        assert reconstruction_error(again, probe) == reconstruction_error(model, probe)
        for key in model.params:
            assert np.array_equal(model.params[key], again.params[key])

    def test_gate_order_declared(self):
        model = small_model()
        assert model.to_dict()["gate_order"] == list(GATES)

    def test_bad_format_version(self):
        model = small_model()
        data = model.to_dict()
        data["format_version"] = 99
        with pytest.raises(ValidationError):
            LstmModel.from_dict(data)
