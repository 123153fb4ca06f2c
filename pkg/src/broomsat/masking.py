"""Vegetation/background separation from the five trait planes.

standardize -> PCA (covariance eigendecomposition) -> K-means with k=2 in
the retained component space; the cluster with the higher mean raw CCC is
vegetation. Variances use the population (1/N) convention throughout.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .traits import TraitKind

DEFAULT_VARIANCE_TARGET = 0.95


def standardize(matrix):
    """Zero-mean, unit-variance columns; zero-variance columns are only centered.

    Returns ``(standardized, means, scales)``. A column counts as constant when
    its std is below 1e-12 of its magnitude.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("standardize needs a non-empty (pixels, dims) matrix", code="empty")
    means = x.mean(axis=0)
    std = x.std(axis=0)
    # rounding in the mean leaves constant columns with a tiny spurious std
    flat = std <= 1e-12 * np.maximum(np.abs(means), 1.0)
    scales = np.where(flat, 1.0, std)
    return (x - means) / scales, means, scales


@dataclass(frozen=True, eq=False)
class PcaModel:
    means: np.ndarray
    components: np.ndarray  # (dims, dims), one orthonormal component per row
    explained_variance: np.ndarray
    retained: int

    @property
    def explained_ratio(self):
        return self.explained_variance / self.explained_variance.sum()

    def project(self, x, n=None):
        n = self.retained if n is None else n
        return (np.asarray(x) - self.means) @ self.components[:n].T

    def reconstruct(self, scores):
        n = scores.shape[1]
        return scores @ self.components[:n] + self.means


def fit_pca(x, variance_target=DEFAULT_VARIANCE_TARGET) -> PcaModel:
    """Principal components sorted by explained variance.

    ``retained`` is the smallest count whose cumulative explained-variance
    ratio reaches ``variance_target``.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if n < d:
        raise DataError(f"PCA needs at least as many rows ({n}) as columns ({d})", code="shape")
    means = x.mean(axis=0)
    centered = x - means
    if not np.any(centered):
        raise NumericError("PCA input has no variance", code="degenerate")
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T
    # fix the sign so the largest-magnitude loading of each component is positive
    flip = np.sign(comps[np.arange(d), np.argmax(np.abs(comps), axis=1)])
    comps = comps * np.where(flip == 0, 1.0, flip)[:, None]
    ratio = np.cumsum(evals) / evals.sum()
    retained = int(np.searchsorted(ratio, variance_target - 1e-12) + 1)
    return PcaModel(means, comps, evals, min(retained, d))


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    # objective at initialization, then after each Lloyd iteration
    history: list[float] = field(default_factory=list)
    n_iter: int = 0
    repaired: int = 0  # number of empty-cluster re-seeds


def _nearest(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin keeps the lowest index on ties
    return np.argmin(d2, axis=1), d2


def _objective(points, centroids, assignments):
    return float(((points - centroids[assignments]) ** 2).sum())


def kmeans(points, k=2, seed=0, max_iter=100) -> ClusterModel:
    """Lloyd iterations from a seeded farthest-point initialization.

    The first centroid is a uniformly drawn point; each further centroid is
    the point farthest from those already chosen. An empty cluster is
    re-seeded at the point farthest from its current centroid.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n < k:
        raise DataError(f"kmeans needs at least k={k} points, got {n}", code="shape")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    dist = ((pts - pts[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, ((pts - pts[nxt]) ** 2).sum(axis=1))
    centroids = pts[chosen].copy()

    assign, _ = _nearest(pts, centroids)
    history, repaired, it = [_objective(pts, centroids, assign)], 0, 0
    for it in range(1, max_iter + 1):
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = pts[members].mean(axis=0)
        for j in range(k):
            if not (assign == j).any():
                far = int(np.argmax(((pts - centroids[assign]) ** 2).sum(axis=1)))
                centroids[j] = pts[far]
                repaired += 1
        new_assign, _ = _nearest(pts, centroids)
        history.append(_objective(pts, centroids, new_assign))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    for j in range(k):
        members = assign == j
        if members.any():
            centroids[j] = pts[members].mean(axis=0)
    return ClusterModel(centroids, assign, _objective(pts, centroids, assign), history, it, repaired)


@dataclass(frozen=True, eq=False)
class VegetationMask:
    mask: np.ndarray  # True = vegetation
    defined: np.ndarray  # False where traits were invalid
    warning: str | None = None
    retained_components: int = 0


def vegetation_mask(trait_planes, variance_target=DEFAULT_VARIANCE_TARGET, seed=0,
                    max_iter=100) -> VegetationMask:
    """Cluster peak-stage trait pixels into vegetation and background.

    ``trait_planes`` are the five TraitPlane objects (or ``(values, valid)``
    pairs) in TraitKind order.
    """
    planes = list(trait_planes)
    values = [p.values if hasattr(p, "values") else p[0] for p in planes]
    valids = [p.valid if hasattr(p, "valid") else p[1] for p in planes]
    if len(values) != len(TraitKind):
        raise DataError("vegetation_mask needs the five trait planes", code="shape")
    shape = np.shape(values[0])
    defined = np.logical_and.reduce([np.asarray(v) for v in valids])
    defined &= np.logical_and.reduce([np.isfinite(v) for v in values])
    if not defined.any():
        raise DataError("no valid trait pixels at the peak stage", code="empty")
    x = np.stack([np.asarray(v)[defined] for v in values], axis=1)
    ccc = x[:, list(TraitKind).index(TraitKind.CCC)]

    z, _, _ = standardize(x)
    warning, retained = None, 0
    if np.any(z) and z.shape[0] >= z.shape[1]:
        pca = fit_pca(z, variance_target)
        retained = pca.retained
        scores = pca.project(z)
    else:
        scores = z
    if z.shape[0] < 2:
        assign = np.zeros(z.shape[0], dtype=int)
        warning = "too_few_pixels"
    else:
        model = kmeans(scores, 2, seed=seed, max_iter=max_iter)
        assign = model.assignments
        if model.repaired:
            warning = "degenerate_clusters"
    means = [ccc[assign == j].mean() if (assign == j).any() else -np.inf for j in range(2)]
    veg_cluster = int(np.argmax(means))
    if warning:
        warnings.warn(f"vegetation mask: {warning}", RuntimeWarning, stacklevel=2)
    mask = np.zeros(shape, dtype=bool)
    mask[defined] = assign == veg_cluster
    return VegetationMask(mask, defined, warning, retained)


def write_mask_csv(mask: VegetationMask, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "is_vegetation"])
        for y, x in zip(*np.nonzero(mask.defined)):
            w.writerow([int(x), int(y), int(mask.mask[y, x])])


def write_mask_pgm(mask: VegetationMask, path):
    """Plain (ASCII) PGM: 255 vegetation, 0 background, 128 undefined."""
    h, w = mask.mask.shape
    img = np.where(mask.defined, np.where(mask.mask, 255, 0), 128)
    lines = ["P2", f"{w} {h}", "255"] + [" ".join(str(int(v)) for v in row) for row in img]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mask_pgm(path):
    tokens = open(path).read().split()
    if tokens[0] != "P2":
        raise DataError(f"{path}: not a plain PGM", code="format")
    w, h = int(tokens[1]), int(tokens[2])
    img = np.array(tokens[4:4 + w * h], dtype=int).reshape(h, w)
    return VegetationMask(img == 255, img != 128)
