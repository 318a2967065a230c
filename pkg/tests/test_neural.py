import math

import numpy as np
import pytest

from metroflow.errors import ConfigError, InputError, NumericalError
from metroflow.neural import (AdamMoments, MinMaxScaler, RecurrentModel, TrainingConfig, adam_step, forward,
                              gradient_check, gru_cell_forward, lstm_cell_forward, make_dataset,
                              predict_series, sigmoid, sliding_windows, train)
from metroflow.neural.train import loss_and_grad


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def test_sigmoid_stable():
    x = np.array([-1000.0, -1.0, 0.0, 1.0, 1000.0])
    np.testing.assert_allclose(sigmoid(x), [0.0, sig(-1), 0.5, sig(1), 1.0], atol=1e-15)


def test_gru_cell_scalar_oracle():
    # hidden 1, input 1; weight columns are [h, x]
    p = {"W_z": np.array([[0.3, -0.2]]), "b_z": np.array([0.1]),
         "W_r": np.array([[-0.4, 0.5]]), "b_r": np.array([0.0]),
         "W_h": np.array([[0.7, 0.9]]), "b_h": np.array([-0.2])}
    h, x = 0.6, 1.5
    z = sig(0.3 * h - 0.2 * x + 0.1)
    r = sig(-0.4 * h + 0.5 * x)
    cand = math.tanh(0.7 * r * h + 0.9 * x - 0.2)
    want = (1 - z) * h + z * cand
    got = gru_cell_forward(np.array([x]), np.array([h]), p)
    assert got[0] == pytest.approx(want, abs=1e-14)


def test_lstm_cell_scalar_oracle():
    W = {"i": (0.2, 0.1), "f": (-0.3, 0.4), "o": (0.5, -0.6), "g": (0.8, 0.3)}
    p = {}
    for k, (wh, wx) in W.items():
        p["W_" + k] = np.array([[wh, wx]])
        p["b_" + k] = np.array([0.05])
    h, c, x = -0.4, 0.9, 2.0
    pre = {k: wh * h + wx * x + 0.05 for k, (wh, wx) in W.items()}
    i, f, o = sig(pre["i"]), sig(pre["f"]), sig(pre["o"])
    g = math.tanh(pre["g"])
    c_new = f * c + i * g
    h_new = o * math.tanh(c_new)
    gh, gc = lstm_cell_forward(np.array([x]), (np.array([h]), np.array([c])), p)
    assert gh[0] == pytest.approx(h_new, abs=1e-14)
    assert gc[0] == pytest.approx(c_new, abs=1e-14)


def test_cell_dimension_checks():
    m = RecurrentModel("gru", (3,), seed=0)
    p = m.layer_params(0)
    with pytest.raises(InputError):
        gru_cell_forward(np.zeros(2), np.zeros(3), p)
    with pytest.raises(InputError):
        gru_cell_forward(np.zeros(1), np.zeros(4), p)
    lp = RecurrentModel("lstm", (3,), seed=0).layer_params(0)
    with pytest.raises(InputError):
        lstm_cell_forward(np.zeros(1), (np.zeros(3), np.zeros(2)), lp)


@pytest.mark.parametrize("cell", ["gru", "lstm"])
@pytest.mark.parametrize("sizes", [(3,), (2, 3)])
def test_gradient_check(cell, sizes):
    rng = np.random.default_rng(1)
    m = RecurrentModel(cell, sizes, dropout=0.0, seed=4)
    X = rng.uniform(0, 1, (5, 6))
    y = rng.uniform(0, 1, 5)
    assert gradient_check(m, X, y) <= 1e-4


@pytest.mark.parametrize("cell", ["gru", "lstm"])
def test_gradient_check_relu_head_and_mse(cell):
    rng = np.random.default_rng(2)
    m = RecurrentModel(cell, (3,), dropout=0.0, head_activation="relu", seed=1)
    m.params["head.b"][0] = 0.5  # keep the ReLU active
    X = rng.uniform(0, 1, (4, 5))
    y = rng.uniform(0, 1, 4)
    assert gradient_check(m, X, y, loss="mse") <= 1e-4


def test_dropout_backward_matches_masked_forward():
    # with a fixed mask the training-mode forward is a deterministic function
    rng = np.random.default_rng(0)
    m = RecurrentModel("gru", (3, 2), dropout=0.3, seed=2)
    X = rng.uniform(size=(4, 5))
    y = rng.uniform(size=4)
    pred, cache = m.forward_batch(X, training=True, rng=np.random.default_rng(9))
    _, dpred = loss_and_grad(pred, y, "mse")
    grads = m.backward(cache, dpred)
    k, i = "l0.W_z", (1, 2)
    eps = 1e-6
    vals = []
    for s in (eps, -eps):
        m.params[k][i] += s
        p, _ = m.forward_batch(X, training=True, rng=np.random.default_rng(9))
        vals.append(loss_and_grad(p, y, "mse")[0])
        m.params[k][i] -= s
    assert grads[k][i] == pytest.approx((vals[0] - vals[1]) / (2 * eps), rel=1e-5, abs=1e-10)


def test_adam_unit_step():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamMoments(), 1)
    assert abs(p["w"][0] - (-0.001 / (1 + 1e-8))) <= 1e-12


def test_adam_bias_correction_two_steps():
    p = {"w": np.array([0.0])}
    mom = AdamMoments()
    adam_step(p, {"w": np.array([1.0])}, mom, 1)
    adam_step(p, {"w": np.array([-1.0])}, mom, 2)
    m = (0.9 * 0.1 - 0.1) / (1 - 0.81)
    v = (0.999 * 0.001 + 0.001) / (1 - 0.999 ** 2)
    want = -0.001 / (1 + 1e-8) - 0.001 * m / (math.sqrt(v) + 1e-8)
    assert p["w"][0] == pytest.approx(want, abs=1e-15)
    with pytest.raises(ValueError):
        adam_step(p, {"w": np.array([1.0])}, mom, 0)


def test_scaler():
    s = MinMaxScaler.fit([2.0, 4.0, 6.0])
    np.testing.assert_allclose(s.transform([2, 4, 6]), [0, 0.5, 1])
    np.testing.assert_allclose(s.inverse(s.transform([3.3, 7.0])), [3.3, 7.0])
    const = MinMaxScaler.fit([5.0, 5.0])
    np.testing.assert_allclose(const.transform([5.0]), [0.0])
    np.testing.assert_allclose(const.inverse([0.7, -3]), [5.0, 5.0])
    with pytest.raises(InputError):
        MinMaxScaler.fit([])


def test_sliding_windows():
    w, t = sliding_windows(np.arange(6.0), 3)
    np.testing.assert_array_equal(w, [[0, 1, 2], [1, 2, 3], [2, 3, 4]])
    np.testing.assert_array_equal(t, [3, 4, 5])
    ds = make_dataset(np.arange(10.0) * 2, 4)
    assert len(ds) == 6 and ds.windows.max() <= 1.0


def test_model_validation():
    for kwargs in (dict(cell="rnn"), dict(layer_sizes=()), dict(dropout=1.0), dict(head_activation="tanh")):
        with pytest.raises(ConfigError):
            RecurrentModel(**kwargs)
    m = RecurrentModel("gru", (4,), seed=0)
    with pytest.raises(InputError):
        m.predict(np.zeros((2, 3, 2)))
    with pytest.raises(InputError):
        m.predict(np.array([[np.nan, 0.0]]))


def test_init_shapes_and_determinism():
    a = RecurrentModel("lstm", (4, 5), seed=3)
    b = RecurrentModel("lstm", (4, 5), seed=3)
    assert a.params["l0.W_i"].shape == (4, 5)
    assert a.params["l1.W_g"].shape == (5, 9)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["l0.W_i"], RecurrentModel("lstm", (4, 5), seed=4).params["l0.W_i"])
    assert all(not v.any() for k, v in a.params.items() if ".b_" in k)


def test_zero_model_predicts_zero():
    m = RecurrentModel("gru", (3,), seed=0).zero_()
    assert forward(m, np.ones(5)) == 0.0


def _toy_dataset(n=400, lookback=8):
    t = np.arange(n)
    v = 50 + 40 * np.sin(2 * np.pi * t / 24)
    return make_dataset(v, lookback), v


def test_training_reduces_loss_and_is_deterministic():
    ds, _ = _toy_dataset()
    cfg = TrainingConfig(epochs=15, batch_size=32, learning_rate=0.01, shuffle_seed=5)
    m1, tr1 = train(RecurrentModel("gru", (8,), dropout=0.1, seed=1), ds, cfg)
    m2, tr2 = train(RecurrentModel("gru", (8,), dropout=0.1, seed=1), ds, cfg)
    assert tr1[-1] < 0.5 * tr1[0]
    assert tr1 == tr2
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)


def test_lstm_training_and_predict_series():
    ds, v = _toy_dataset()
    m, trace = train(RecurrentModel("lstm", (8,), seed=0), ds,
                     TrainingConfig(epochs=10, batch_size=32, learning_rate=0.01))
    pred = predict_series(m, v, 8, ds.scaler)
    assert pred.shape == (len(v) - 8,)
    assert np.mean(np.abs(pred - v[8:])) < np.mean(np.abs(v - v.mean()))
    with pytest.raises(InputError):
        predict_series(m, v[:5], 8, ds.scaler)


def test_nan_parameters_raise_numerical_error():
    ds, _ = _toy_dataset(100)
    m = RecurrentModel("gru", (4,), seed=0)
    m.params["head.b"][0] = np.nan
    with pytest.raises(NumericalError, match="epoch 0, batch 0"):
        train(m, ds, TrainingConfig(epochs=1))


def test_training_config_validation():
    for kwargs in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=0), dict(loss="huber"),
                   dict(clip_norm=-1.0)):
        with pytest.raises(ConfigError):
            TrainingConfig(**kwargs)


def test_clip_norm_limits_update():
    ds, _ = _toy_dataset(100)
    m, trace = train(RecurrentModel("gru", (4,), seed=0), ds, TrainingConfig(epochs=2, clip_norm=1e-3))
    assert np.isfinite(trace).all()


def test_save_load_roundtrip(tmp_path):
    m = RecurrentModel("lstm", (3, 2), dropout=0.2, head_activation="relu", seed=7)
    m.save(tmp_path / "m.npz", {"lookback": 12})
    back, extra = RecurrentModel.load(tmp_path / "m.npz")
    assert extra == {"lookback": 12}
    assert back.config() == m.config()
    assert all(np.array_equal(back.params[k], m.params[k]) for k in m.params)
