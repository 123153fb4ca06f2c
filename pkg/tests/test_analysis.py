import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from broomsat.analysis import (ConfusionMatrix, confusion, kde, metrics, permutation_importance,
                               silverman_bandwidth)
from broomsat.errors import DataError


def test_confusion_perfect_and_all_positive():
    y = np.array([1, 1, 0, 0, 1, 0])
    cm = confusion(y, y)
    assert cm.fp == cm.fn == 0 and cm.tp == 3 and cm.tn == 3
    allpos = confusion(y, np.ones(6, int))
    assert (allpos.fp, allpos.tn) == (3, 0)
    assert allpos.normalized.tolist() == [[1.0, 0.0], [1.0, 0.0]]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_confusion_matches_pair_counting(pairs):
    y = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    cm = confusion(y, p)
    want = {(1, 1): 0, (0, 1): 0, (1, 0): 0, (0, 0): 0}
    for pair in pairs:
        want[pair] += 1
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (want[1, 1], want[0, 1], want[1, 0], want[0, 0])
    assert cm.total == len(pairs)
    norm = cm.normalized
    for r in range(2):
        if cm.counts[r].sum():
            assert norm[r].sum() == pytest.approx(1.0, abs=1e-12)
        else:
            assert np.isnan(norm[r]).all()
    m = metrics(cm)
    if m.f1 is not None:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
    for v in m.as_dict().values():
        assert v is None or 0 <= v <= 1


def test_confusion_errors():
    with pytest.raises(DataError):
        confusion([], [])
    with pytest.raises(DataError):
        confusion([0, 1], [1])
    with pytest.raises(DataError):
        confusion([0, 2], [1, 1])


def test_metrics_reported_example():
    m = metrics(ConfusionMatrix(tp=92, fp=15, fn=8, tn=85))
    assert m.recall == pytest.approx(0.92)
    assert m.precision == pytest.approx(92 / 107)
    assert m.f1 == pytest.approx(2 * 92 / (2 * 92 + 15 + 8))
    assert (round(m.precision, 2), round(m.recall, 2), round(m.f1, 2)) == (0.86, 0.92, 0.89)
    assert m.accuracy == pytest.approx(177 / 200)


def test_metrics_undefined_and_perfect():
    m = metrics(ConfusionMatrix(tp=0, fp=0, fn=4, tn=6))
    assert m.precision is None and "precision" in m.undefined and m.f1 is None
    assert m.recall == 0.0
    assert metrics(ConfusionMatrix(5, 0, 0, 5)).accuracy == 1.0


def _signal_data(n=1000, feats=5, informative=2, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(size=(n, 12, feats))
    x[:, :, informative] += np.where(y == 1, 1.5, -1.5)[:, None]
    return x, y


def test_importance_single_informative_feature():
    x, y = _signal_data()

    def model(inputs):
        # relies on feature 2 and leans weakly on the noise feature 4
        score = inputs[:, :, 2].mean(axis=1) + 0.01 * inputs[:, :, 4].mean(axis=1)
        return 1.0 / (1.0 + np.exp(-score))

    rep = permutation_importance(model, x, y, repeats=10, seed=3)
    assert rep.ranking[0] == 2 and rep.mean[2] > 0.3
    for f in (0, 1, 3, 4):
        assert abs(rep.mean[f]) < 0.02
    assert rep.top(1) == ["f2"]
    again = permutation_importance(model, x, y, repeats=10, seed=3)
    assert np.array_equal(rep.drops, again.drops)


def test_importance_constant_feature_is_zero():
    x, y = _signal_data(200)
    x[:, :, 0] = 7.0

    class M:
        def predict_proba(self, inputs):
            return 1.0 / (1.0 + np.exp(-(inputs[:, :, 2].mean(axis=1) + inputs[:, :, 0].mean(axis=1) - 7)))

    rep = permutation_importance(M(), x, y, repeats=4, seed=0)
    assert np.all(rep.drops[0] == 0.0)
    assert np.all(rep.std >= 0)
    with pytest.raises(ValueError):
        permutation_importance(M(), x, y, repeats=0)


def test_importance_preserves_trajectories():
    x, y = _signal_data(50)
    seen = []

    def model(inputs):
        seen.append(inputs.copy())
        return np.full(inputs.shape[0], 0.5)

    permutation_importance(model, x, y, repeats=1, seed=0)
    # each permuted trajectory is some original sample's full trajectory
    permuted = seen[1][:, :, 0]
    originals = {tuple(r) for r in x[:, :, 0]}
    assert all(tuple(r) in originals for r in permuted)
    assert np.array_equal(seen[1][:, :, 1:], x[:, :, 1:])


def test_kde_examples(rng):
    v = 5.0 + 1e-3 * rng.normal(size=50)
    c = kde(v, "clean", 512)
    assert abs(c.grid[np.argmax(c.density)] - v.mean()) < 5e-4
    assert np.all(c.density >= 0)
    assert np.trapezoid(c.density, c.grid) == pytest.approx(1.0, abs=1e-3)
    assert c.grid[0] == pytest.approx(v.min() - 3 * c.bandwidth)
    assert c.grid[-1] == pytest.approx(v.max() + 3 * c.bandwidth)
    sym = rng.normal(size=40)
    s = kde(np.r_[sym, -sym], grid_size=301)
    assert np.allclose(s.density, s.density[::-1], atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=80))
def test_kde_integrates_to_one(values):
    v = np.array(values)
    if v.std() < 1e-3:
        return
    c = kde(v, grid_size=4096)
    # kernel mass falling outside [min - 3h, max + 3h], computed per sample
    lo, hi = c.grid[0], c.grid[-1]
    lost = np.mean(norm.cdf((lo - v) / c.bandwidth) + norm.sf((hi - v) / c.bandwidth))
    assert np.trapezoid(c.density, c.grid) == pytest.approx(1.0 - lost, abs=1e-5)


def test_kde_integral_within_1e3_on_continuous_samples():
    rng = np.random.default_rng(9)
    for n in (20, 100, 1000):
        for _ in range(20):
            c = kde(rng.normal(size=n) * rng.uniform(0.1, 10))
            assert np.trapezoid(c.density, c.grid) == pytest.approx(1.0, abs=1e-3)


def test_kde_errors_and_bandwidth():
    with pytest.raises(DataError) as e:
        kde([3.0, 3.0, 3.0])
    assert e.value.code == "degenerate"
    with pytest.raises(DataError):
        kde([1.0])
    v = np.array([0.0, 2.0])
    assert silverman_bandwidth(v) == pytest.approx(1.06 * 1.0 * 2 ** -0.2)
