import math

import numpy as np
import pytest

from alrt import kernels
from alrt import model as rnn
from alrt.errors import ConfigError, NumericError
from alrt.kernels import get_backend
from alrt.model import ModelParams, TrainConfig
from alrt.preprocess import ClassWeights, FeatureSequence
from oracles import finite_difference_grad, max_rel_error, random_instance, rnn_loss

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
UNIT = ClassWeights(1.0, 1.0)


def test_forward_zero_params_gives_half():
    probs, hs = rnn.forward(ModelParams.zeros(4), np.random.default_rng(0).normal(size=(7, 36)))
    assert probs.tolist() == [0.5] * 7
    assert hs.shape == (7, 4)


def test_forward_hand_computed():
    W_xh = np.zeros((1, 36))
    W_xh[0, 0] = 1.0
    params = ModelParams(W_xh, np.zeros((1, 1)), np.zeros(1), [2.0], 0.0)
    x = np.zeros((1, 36))
    x[0, 0] = 0.5
    expected = 1.0 / (1.0 + math.exp(-2.0 * math.tanh(0.5)))
    assert rnn.predict_proba(params, x)[0] == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.7159, abs=1e-4)


@pytest.mark.parametrize("backend", BACKENDS)
def test_forward_is_order_sensitive(backend):
    rng = np.random.default_rng(4)
    params, X, _, _ = random_instance(rng, 3, 6)
    k = get_backend(backend)
    p1, _ = rnn.forward(params, X, backend=k)
    Xs = X.copy()
    Xs[[2, 4]] = Xs[[4, 2]]
    p2, _ = rnn.forward(params, Xs, backend=k)
    assert np.array_equal(p1[:2], p2[:2])
    assert (p1[2:] != p2[2:]).all()


def test_forward_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        rnn.forward(ModelParams.zeros(2), np.zeros((3, 35)))
    with pytest.raises(ConfigError):
        rnn.forward(ModelParams.zeros(2), np.zeros((0, 36)))


def test_forward_non_finite_raises():
    params = ModelParams.zeros(2)
    params.W_hy[:] = np.inf
    with pytest.raises(NumericError):
        rnn.forward(params, np.ones((2, 36)))


def test_output_length_matches_input():
    params = rnn.init_params(5, 1)
    for T in (1, 2, 17):
        assert rnn.predict_proba(params, np.zeros((T, 36))).shape == (T,)


def test_loss_examples():
    assert rnn.loss([0.5, 0.5], [1, 0], UNIT) == pytest.approx(math.log(2), abs=1e-15)
    assert rnn.loss([0.9], [0], ClassWeights(2.0, 1.0)) == pytest.approx(-2 * math.log(0.1), abs=1e-12)
    assert rnn.loss([1.0, 0.0], [1, 0], UNIT) == pytest.approx(0.0, abs=1e-11)
    assert math.isfinite(rnn.loss([0.0, 1.0], [1, 0], UNIT))
    with pytest.raises(ConfigError):
        rnn.loss([0.5], [1, 0], UNIT)


def test_loss_matches_oracle():
    rng = np.random.default_rng(9)
    params, X, y, w = random_instance(rng, 3, 5)
    probs = rnn.predict_proba(params, X)
    expected = rnn_loss(params.W_xh.tolist(), params.W_hh.tolist(), params.b_h.tolist(),
                        params.W_hy.tolist(), params.b_y, X.tolist(), y.tolist(),
                        w.weight_negative, w.weight_positive)
    assert rnn.loss(probs, y, w) == pytest.approx(expected, rel=1e-12)


def test_bias_gradient_cancels_at_balanced_saddle():
    grad = rnn.backward(ModelParams.zeros(3), np.ones((2, 36)), [1, 0], ClassWeights(2.0, 2.0))
    assert grad.b_y == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(6))
def test_gradient_matches_finite_differences(backend, seed):
    rng = np.random.default_rng(seed)
    H, T = int(rng.integers(1, 5)), int(rng.integers(1, 7))
    params, X, y, w = random_instance(rng, H, T)
    grad = rnn.backward(params, X, y, w, backend=get_backend(backend))
    numeric = finite_difference_grad(params, X, y, w.weight_negative, w.weight_positive)
    assert max_rel_error(grad, numeric) < 1e-4


@pytest.mark.parametrize("backend", BACKENDS)
def test_gradient_linear_in_class_weights(backend):
    k = get_backend(backend)
    rng = np.random.default_rng(2)
    params, X, _, _ = random_instance(rng, 3, 6)
    y = np.ones(6, dtype=np.int8)
    g1 = rnn.backward(params, X, y, ClassWeights(1.0, 1.5), backend=k)
    g2 = rnn.backward(params, X, y, ClassWeights(1.0, 3.0), backend=k)
    assert np.allclose(g2.flat(), 2 * g1.flat(), rtol=1e-13, atol=0)
    # mixed labels: the positive-class part doubles, the negative part is untouched
    y = np.array([1, 0, 0, 1, 0, 1], dtype=np.int8)
    probs, hs = rnn.forward(params, X, backend=k)
    parts = [np.concatenate([np.ravel(a) for a in k.backward(params.W_xh, params.W_hh, params.W_hy, X, hs,
                                                             probs, y, wn, wp)])
             for wn, wp in ((1.0, 1.5), (1.0, 3.0), (0.0, 1.5))]
    assert np.allclose(parts[1], parts[0] + parts[2], rtol=1e-12, atol=1e-15)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_agree():
    py, cy = get_backend("python"), get_backend("cython")
    rng = np.random.default_rng(7)
    for _ in range(20):
        params, X, y, w = random_instance(rng, int(rng.integers(1, 33)), int(rng.integers(1, 60)), D=36)
        pa, ha = rnn.forward(params, X, backend=py)
        pb, hb = rnn.forward(params, X, backend=cy)
        assert np.allclose(pa, pb, rtol=1e-12, atol=1e-14)
        ga = rnn.backward(params, X, y, w, backend=py)
        gb = rnn.backward(params, X, y, w, backend=cy)
        assert np.allclose(ga.flat(), gb.flat(), rtol=1e-10, atol=1e-13)


def test_init_params():
    a, b = rnn.init_params(6, 3), rnn.init_params(6, 3)
    assert a.equals(b)
    assert not a.equals(rnn.init_params(6, 4))
    assert np.abs(a.W_xh).max() <= 1 / math.sqrt(36)
    assert np.abs(a.W_hh).max() <= 1 / math.sqrt(6)
    assert np.abs(a.W_hy).max() <= 1 / math.sqrt(6)
    assert not a.b_h.any() and a.b_y == 0.0
    with pytest.raises(ConfigError):
        rnn.init_params(0, 1)


def separable_dataset(n=20):
    rng = np.random.default_rng(0)
    data = []
    for i in range(n):
        y = i % 2
        x = np.zeros((1, 36))
        x[0, 0] = (1.0 if y else -1.0) + rng.normal(0, 0.1)
        data.append(FeatureSequence(f"s{i:02d}", x, np.array([y], dtype=np.int8)))
    return data


def test_training_loss_decreases_on_separable_data():
    params, trace = rnn.train(rnn.init_params(4, 0), separable_dataset(), TrainConfig(learning_rate=0.1, seed=1))
    assert len(trace) == 5
    assert all(b < a for a, b in zip(trace, trace[1:]))


def test_zero_learning_rate_leaves_params_unchanged():
    start = rnn.init_params(4, 0)
    params, _ = rnn.train(start, separable_dataset(), TrainConfig(learning_rate=0.0))
    assert params.equals(start)


def test_training_is_deterministic():
    cfg = TrainConfig(learning_rate=0.1, seed=5)
    a, ta = rnn.train(rnn.init_params(4, 0), separable_dataset(), cfg)
    b, tb = rnn.train(rnn.init_params(4, 0), separable_dataset(), cfg)
    assert a.equals(b) and ta == tb


def test_gradient_clipping_bounds_step():
    params = ModelParams.zeros(2)
    grad = ModelParams(np.full((2, 36), 10.0), np.zeros((2, 2)), np.zeros(2), np.zeros(2), 0.0)
    rnn.sgd_step(params, grad, lr=1.0, clip=5.0)
    assert np.linalg.norm(params.flat()) == pytest.approx(5.0)


def test_training_divergence_reports_position():
    data = separable_dataset(4)
    params = rnn.init_params(2, 0)
    params.b_y = np.nan
    with pytest.raises(NumericError, match="epoch 0"):
        rnn.train(params, data, TrainConfig())


def test_checkpoint_round_trip(tmp_path):
    params = rnn.init_params(7, 2)
    path = tmp_path / "ckpt.json"
    rnn.save_checkpoint(path, params, seed=2)
    loaded, meta = rnn.load_checkpoint(path)
    assert meta["seed"] == 2
    assert loaded.equals(params)
    X = np.random.default_rng(0).normal(size=(9, 36))
    assert rnn.predict_proba(loaded, X).tobytes() == rnn.predict_proba(params, X).tobytes()


def test_pure_python_fallback_selected_by_environment():
    import os
    import subprocess
    import sys

    env = {**os.environ, "ALRT_PURE_PYTHON": "1"}
    code = "from alrt import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_train_epoch_backends_agree():
    rng = np.random.default_rng(3)
    data = [FeatureSequence(f"s{i}", rng.normal(size=(5, 36)), rng.integers(0, 2, 5).astype(np.int8))
            for i in range(6)]
    cfg = TrainConfig(class_weights=ClassWeights(0.7, 2.0))
    a, b = rnn.init_params(4, 1), rnn.init_params(4, 1)
    rnn.train_epoch(a, data, cfg, 0, backend=get_backend("python"))
    rnn.train_epoch(b, data, cfg, 0)
    np.testing.assert_allclose(a.flat(), b.flat(), rtol=0, atol=1e-12)
