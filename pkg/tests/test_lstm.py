import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from broomsat.errors import DataError, FormatError
from broomsat.lstm import (Dataset, LstmConfig, TrainConfig, accuracy, backward, cross_validate,
                           fit, forward, init_params, layer_param_counts, load_checkpoint, loss,
                           param_count, param_shapes, predict, save_checkpoint, stratified_folds)

TINY = LstmConfig(input_size=3, lstm_units=(4, 3), dense_units=3, sequence_length=5, dropout_rate=0.0)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_param_count_paper_config():
    cfg = LstmConfig()
    assert param_count(cfg) == 39617
    assert layer_param_counts(cfg) == [26112, 12416, 1056, 33]
    assert sum(int(np.prod(s)) for s in param_shapes(cfg).values()) == 39617
    assert sum(v.size for v in init_params(cfg).values()) == 39617


def test_param_count_small_and_dense_doubling():
    assert param_count(LstmConfig(input_size=1, lstm_units=(1,), dense_units=None)) == 14
    assert param_count(LstmConfig(dense_units=64)) - param_count(LstmConfig()) == 32 * 32 + 32 + 32


def test_config_validation():
    with pytest.raises(ValueError):
        LstmConfig(lstm_units=(0,))
    with pytest.raises(ValueError):
        LstmConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        TrainConfig(test_fraction=0.0)


def test_single_step_hand_arithmetic():
    cfg = LstmConfig(input_size=1, lstm_units=(1,), dense_units=None, sequence_length=1)
    # rows: input, forget, cell, output; columns: x, h
    W = np.array([[0.3, -0.2], [0.5, 0.1], [-0.7, 0.4], [0.9, 0.6]])
    b = np.array([0.1, 1.0, -0.2, 0.05])
    params = {"lstm0.W": W, "lstm0.b": b, "out.W": np.array([[1.7]]), "out.b": np.array([-0.3])}
    assert set(params) == set(param_shapes(cfg))
    x = 0.8
    i = sigmoid(0.3 * x + 0.1)
    g = math.tanh(-0.7 * x - 0.2)
    o = sigmoid(0.9 * x + 0.05)
    h = o * math.tanh(i * g)
    want = sigmoid(1.7 * h - 0.3)
    probs, _ = forward(params, np.array([[[x]]]))
    assert abs(probs[0] - want) <= 1e-12


def test_zero_network_gives_half_and_tie_is_positive():
    params = {k: np.zeros_like(v) for k, v in init_params(TINY).items()}
    x = np.random.default_rng(0).normal(size=(6, 5, 3))
    probs, labels = predict(params, x)
    assert np.all(probs == 0.5) and np.all(labels == 1)
    assert loss(probs, [0, 1, 0, 1, 1, 0]) == pytest.approx(math.log(2), abs=1e-12)


def test_loss_matches_direct_sum(rng):
    for _ in range(20):
        p = rng.uniform(0, 1, 17)
        y = rng.integers(0, 2, 17)
        pc = np.clip(p, 1e-7, 1 - 1e-7)
        want = sum(-(yi * math.log(pi) + (1 - yi) * math.log(1 - pi)) for pi, yi in zip(pc, y)) / 17
        assert loss(p, y) == pytest.approx(want, rel=1e-12)
    assert loss([1.0, 0.0], [1, 0]) <= 1e-6


def test_eval_ignores_seed_and_dropout_masks_reproducible(rng):
    cfg = LstmConfig(input_size=3, lstm_units=(4, 3), dense_units=3, dropout_rate=0.5)
    params = init_params(cfg, 1)
    x = rng.normal(size=(5, 6, 3))
    a = forward(params, x, "eval", seed=1, dropout_rate=0.5)[0]
    b = forward(params, x, "eval", seed=2, dropout_rate=0.5)[0]
    assert np.array_equal(a, b)
    t1 = forward(params, x, "train", seed=9, dropout_rate=0.5)[0]
    t2 = forward(params, x, "train", seed=9, dropout_rate=0.5)[0]
    t3 = forward(params, x, "train", seed=10, dropout_rate=0.5)[0]
    assert np.array_equal(t1, t2) and not np.array_equal(t1, t3)


def test_forward_shape_errors():
    params = init_params(TINY)
    with pytest.raises(DataError):
        forward(params, np.zeros((2, 5, 4)))
    with pytest.raises(DataError):
        forward(params, np.zeros((5, 3)))
    with pytest.raises(ValueError):
        forward(params, np.zeros((1, 5, 3)), mode="test")


def _numeric_grad(params, x, y, name, idx, h=1e-5):
    orig = params[name][idx]
    params[name][idx] = orig + h
    lp = loss(forward(params, x, "train", dropout_rate=0.0)[0], y)
    params[name][idx] = orig - h
    lm = loss(forward(params, x, "train", dropout_rate=0.0)[0], y)
    params[name][idx] = orig
    return (lp - lm) / (2 * h)


def test_gradient_matches_finite_differences(rng):
    params = init_params(TINY, seed=3)
    for k in params:
        params[k] = params[k] + rng.normal(0, 0.3, params[k].shape)
    x = rng.normal(size=(4, 5, 3))
    y = np.array([1, 0, 1, 0])
    _, cache = forward(params, x, "train", dropout_rate=0.0)
    grads = backward(params, cache, y)
    worst = 0.0
    for name, g in grads.items():
        for idx in np.ndindex(g.shape):
            num = _numeric_grad(params, x, y, name, idx)
            denom = max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, abs(num - g[idx]) / denom if denom > 1e-7 else abs(num - g[idx]))
    assert worst < 1e-4


def test_gradient_with_dropout_matches_fixed_mask_differences(rng):
    cfg = LstmConfig(input_size=2, lstm_units=(3, 2), dense_units=None, dropout_rate=0.4)
    params = init_params(cfg, seed=5)
    x = rng.normal(size=(3, 4, 2))
    y = np.array([1, 0, 1])
    _, cache = forward(params, x, "train", seed=11, dropout_rate=0.4)
    grads = backward(params, cache, y)
    for name in params:
        for idx in list(np.ndindex(params[name].shape))[:6]:
            orig = params[name][idx]
            vals = []
            for s in (1e-5, -1e-5):
                params[name][idx] = orig + s
                vals.append(loss(forward(params, x, "train", seed=11, dropout_rate=0.4)[0], y))
            params[name][idx] = orig
            num = (vals[0] - vals[1]) / 2e-5
            assert abs(num - grads[name][idx]) <= 1e-6 + 1e-4 * abs(num)


def test_stationary_point_zero_gradient():
    params = {k: np.zeros_like(v) for k, v in init_params(TINY).items()}
    a = np.random.default_rng(1).normal(size=(3, 5, 3))
    x = np.concatenate([a, -a])
    y = np.array([1, 1, 1, 0, 0, 0])
    _, cache = forward(params, x, "train", dropout_rate=0.0)
    grads = backward(params, cache, y)
    assert all(np.abs(g).max() <= 1e-15 for g in grads.values())


def test_duplicated_sample_counts_twice(rng):
    params = init_params(TINY, seed=2)
    a, b = rng.normal(size=(1, 5, 3)), rng.normal(size=(1, 5, 3))

    def grad(x, y):
        return backward(params, forward(params, x, "train", dropout_rate=0.0)[1], np.array(y))

    ga, gb = grad(a, [1]), grad(b, [0])
    gab = grad(np.concatenate([a, a, b]), [1, 1, 0])
    for k in params:
        assert np.allclose(3 * gab[k], 2 * ga[k] + gb[k], rtol=1e-10, atol=1e-13)


def test_backward_requires_train_cache():
    params = init_params(TINY)
    _, cache = forward(params, np.zeros((2, 5, 3)), "eval")
    with pytest.raises(ValueError):
        backward(params, cache, np.array([0, 1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 3.0))
def test_probabilities_open_interval(seed, scale):
    params = {k: v * scale for k, v in init_params(TINY, seed).items()}
    x = np.random.default_rng(seed).normal(size=(8, 5, 3))
    p = forward(params, x)[0]
    assert np.all((p > 0) & (p < 1))


def test_predict_monotone_in_logit_and_matches_forward(rng):
    params = init_params(TINY, 4)
    x = rng.normal(size=(10, 5, 3))
    base, labels = predict(params, x, batch_size=3)
    assert np.array_equal(base, forward(params, x)[0])
    assert np.array_equal(labels, (base >= 0.5).astype(int))
    params["out.b"] = params["out.b"] + 0.5
    assert np.all(predict(params, x)[0] > base)


def separable(n=200, steps=8, feats=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2, int), np.ones(n // 2, int)]
    x = rng.normal(size=(n, steps, feats))
    x[:, :, 0] += np.where(y == 1, 2.0, -2.0)[:, None]
    return Dataset(x, y, [f"f{i}" for i in range(feats)])


SMALL = LstmConfig(input_size=3, lstm_units=(8, 4), dense_units=4, sequence_length=8, dropout_rate=0.1)


def test_fit_separable_reaches_99_and_is_deterministic():
    data = separable()
    cfg = TrainConfig(epochs=30, batch_size=32, seed=1)
    model, hist = fit(data, SMALL, cfg)
    assert hist["accuracy"][-1] >= 0.99
    assert accuracy(model.predict_proba(data.inputs), data.labels) >= 0.99
    _, again = fit(data, SMALL, cfg)
    assert again == hist
    assert set(hist) == {"loss", "accuracy", "val_loss", "val_accuracy"}
    assert all(len(v) == 30 for v in hist.values())
    # mostly decreasing: upticks beyond 5% of the previous epoch are transient and rare
    l = np.array(hist["loss"])
    upticks = np.sum(l[1:] > l[:-1] * 1.05)
    assert upticks <= 0.05 * len(l) + 1
    assert l[-1] < 0.5 * l[0]


def test_fit_single_class_rejected():
    data = separable()
    with pytest.raises(DataError):
        fit(data.subset(np.arange(100)), SMALL, TrainConfig(epochs=1))


def test_cross_validation_partitions():
    data = separable(n=400)
    cv = cross_validate(data, SMALL, TrainConfig(epochs=1, batch_size=64, seed=3))
    test = set(cv.test_idx.tolist())
    seen = []
    for f in cv.folds:
        assert not test & set(f.tolist())
        seen.extend(f.tolist())
    assert len(seen) == len(set(seen))
    assert set(seen) | test == set(range(400))
    assert len(cv.test_idx) == 120
    for f in cv.folds:
        assert abs(data.labels[f].mean() - 0.5) <= 0.02
    assert len(cv.fold_metrics) == 5 and 0 <= cv.test_metrics["accuracy"] <= 1
    with pytest.raises(DataError):
        cross_validate(data.subset(np.arange(180, 220)), SMALL, TrainConfig(epochs=1))


def test_stratified_folds_unbalanced(rng):
    labels = np.r_[np.zeros(700, int), np.ones(300, int)]
    folds = stratified_folds(labels, 5, rng)
    for f in folds:
        assert abs(labels[f].mean() - 0.3) <= 0.02


def test_checkpoint_round_trip(tmp_path):
    cfg = LstmConfig()
    params = init_params(cfg, 7)
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, cfg, path, extra={"epochs": 3})
    back, cfg2, extra = load_checkpoint(path, expect=cfg)
    assert cfg2 == cfg and extra == {"epochs": 3}
    assert all(np.array_equal(back[k], params[k]) for k in params)
    assert path.read_bytes()[:8] == b"BSLSTM\r\n"


def test_checkpoint_corruption(tmp_path):
    cfg = TINY
    path = tmp_path / "m.ckpt"
    save_checkpoint(init_params(cfg), cfg, path)
    raw = path.read_bytes()
    (tmp_path / "t").write_bytes(raw[:-10])
    with pytest.raises(FormatError) as e:
        load_checkpoint(tmp_path / "t")
    assert e.value.code == "truncated"
    flipped = bytearray(raw)
    flipped[-20] ^= 0xFF
    (tmp_path / "c").write_bytes(bytes(flipped))
    with pytest.raises(FormatError) as e:
        load_checkpoint(tmp_path / "c")
    assert e.value.code == "checksum"
    (tmp_path / "v").write_bytes(raw[:8] + struct.pack("<I", 2) + raw[12:])
    with pytest.raises(FormatError) as e:
        load_checkpoint(tmp_path / "v")
    assert e.value.code == "version"
    with pytest.raises(FormatError) as e:
        load_checkpoint(path, expect=LstmConfig())
    assert e.value.code == "shape"
