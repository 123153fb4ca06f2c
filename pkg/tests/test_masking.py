import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from broomsat.errors import DataError, NumericError
from broomsat.masking import (fit_pca, kmeans, read_mask_pgm, standardize, vegetation_mask,
                              write_mask_csv, write_mask_pgm)


def test_standardize_examples():
    z, means, scales = standardize([[0.0, 5.0], [2.0, 5.0]])
    assert z[:, 0].tolist() == [-1.0, 1.0]
    assert z[:, 1].tolist() == [0.0, 0.0] and scales[1] == 1.0 and means[1] == 5.0
    with pytest.raises(DataError):
        standardize(np.empty((0, 5)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (30, 5), elements=st.floats(-1e3, 1e3)))
def test_standardize_moments(x):
    z, _, scales = standardize(x)
    assert np.allclose(z.mean(axis=0), 0, atol=1e-9)
    varying = x.std(axis=0) > 1e-6
    assert np.allclose(z.std(axis=0)[varying], 1, atol=1e-6)


def test_pca_rank_one():
    t = np.linspace(-3, 3, 50)[:, None]
    x = t * np.array([[1.0, 2.0, -1.0, 0.5, 3.0]])
    pca = fit_pca(x, 0.95)
    assert pca.retained == 1
    assert pca.explained_ratio[0] == pytest.approx(1.0, abs=1e-12)


def test_pca_invariants_on_random_data():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=(200, 5)) @ rng.normal(size=(5, 5))
        pca = fit_pca(x, 0.9)
        c = pca.components
        assert np.allclose(c @ c.T, np.eye(5), atol=1e-8)
        ev = pca.explained_variance
        assert np.all(ev >= 0) and np.all(np.diff(ev) <= 1e-12)
        assert ev.sum() == pytest.approx(x.var(axis=0).sum(), abs=1e-8)
        ratio = np.cumsum(ev) / ev.sum()
        assert ratio[pca.retained - 1] >= 0.9 and (pca.retained == 1 or ratio[pca.retained - 2] < 0.9)
        assert np.allclose(pca.reconstruct(pca.project(x, 5)), x, atol=1e-8)


def test_pca_isotropic():
    x = np.random.default_rng(1).normal(size=(20000, 5))
    pca = fit_pca(x, 0.95)
    assert np.allclose(pca.explained_ratio, 0.2, atol=0.02)
    assert pca.retained == 5


def test_pca_errors():
    with pytest.raises(NumericError):
        fit_pca(np.ones((10, 5)))
    with pytest.raises(DataError):
        fit_pca(np.ones((3, 5)))


def test_kmeans_blobs_match_truth_and_nearest():
    rng = np.random.default_rng(2)
    a = rng.normal(0, 0.3, (100, 3))
    b = rng.normal(5, 0.3, (80, 3))
    pts = np.vstack([a, b])
    truth = np.r_[np.zeros(100, int), np.ones(80, int)]
    m = kmeans(pts, 2, seed=4)
    same = np.array_equal(m.assignments, truth) or np.array_equal(m.assignments, 1 - truth)
    assert same
    for i, p in enumerate(pts):
        d = [np.sum((p - c) ** 2) for c in m.centroids]
        assert m.assignments[i] == int(np.argmin(d))


def test_kmeans_objective_nonincreasing_100_instances():
    rng = np.random.default_rng(3)
    for i in range(100):
        pts = rng.normal(size=(int(rng.integers(5, 60)), 2)) * rng.uniform(0.1, 5)
        k = int(rng.integers(2, 5))
        m = kmeans(pts, k, seed=i)
        assert np.all(np.diff(m.history) <= 1e-9)
        assert m.inertia <= m.history[0] + 1e-9
        again = kmeans(pts, k, seed=i)
        assert np.array_equal(m.assignments, again.assignments)


def test_kmeans_degenerate_cases():
    pts = np.arange(10, dtype=float).reshape(5, 2)
    m = kmeans(pts, 5)
    assert m.inertia == 0 and sorted(m.assignments.tolist()) == [0, 1, 2, 3, 4]
    dup = kmeans(np.ones((6, 2)), 2)
    assert dup.repaired >= 1 and dup.inertia == 0
    with pytest.raises(DataError):
        kmeans(np.ones((1, 2)), 2)


def _planes(rng, shape=(10, 12)):
    half = np.zeros(shape, bool)
    half[:, : shape[1] // 2] = True
    # LAI, CAB, CCC, FAPAR, FCOVER
    hi = [3.0, 45.0, 135.0, 0.7, 0.8]
    lo = [0.05, 5.0, 0.2, 0.02, 0.02]
    out = []
    for h, l in zip(hi, lo):
        v = np.where(half, h, l) * (1 + 0.05 * rng.normal(size=shape))
        out.append((v, np.ones(shape, bool)))
    return out, half


def test_mask_recovers_high_ccc_half(rng):
    planes, half = _planes(rng)
    m = vegetation_mask(planes)
    assert np.array_equal(m.mask, half) and m.defined.all() and m.warning is None


def test_mask_invariant_to_cluster_labels(rng):
    planes, half = _planes(rng)
    results = [vegetation_mask(planes, seed=s).mask for s in range(8)]
    assert all(np.array_equal(r, half) for r in results)


def test_mask_undefined_where_traits_invalid(rng):
    planes, half = _planes(rng)
    v, ok = planes[2]
    ok = ok.copy()
    ok[0, 0] = False
    planes[2] = (v, ok)
    m = vegetation_mask(planes)
    assert not m.defined[0, 0] and not m.mask[0, 0]
    assert np.array_equal(m.mask[m.defined], half[m.defined])


def test_mask_uniform_scene_warns():
    planes = [(np.full((4, 4), 1.0), np.ones((4, 4), bool)) for _ in range(5)]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        m = vegetation_mask(planes)
    assert m.warning == "degenerate_clusters"
    assert any("degenerate_clusters" in str(x.message) for x in w)


def test_mask_errors(rng):
    planes = [(np.ones((3, 3)), np.zeros((3, 3), bool)) for _ in range(5)]
    with pytest.raises(DataError):
        vegetation_mask(planes)
    with pytest.raises(DataError):
        vegetation_mask(_planes(rng)[0][:4])


def test_mask_files_round_trip(tmp_path, rng):
    planes, half = _planes(rng, (5, 6))
    v, ok = planes[0]
    ok = ok.copy()
    ok[1, 2] = False
    planes[0] = (v, ok)
    m = vegetation_mask(planes)
    write_mask_pgm(m, tmp_path / "m.pgm")
    back = read_mask_pgm(tmp_path / "m.pgm")
    assert np.array_equal(back.mask, m.mask) and np.array_equal(back.defined, m.defined)
    write_mask_csv(m, tmp_path / "m.csv")
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 1 + 29
