"""Dense numeric kernels: basic matrix ops, activations, init, k-means, PCA.

Everything is float64 and deterministic given an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_2d(*arrays: np.ndarray) -> None:
    for a in arrays:
        if a.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_2d(a, b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def transpose(a: np.ndarray) -> np.ndarray:
    _check_2d(a)
    return a.T


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, pre_activation: np.ndarray) -> np.ndarray:
    """Gradient through relu; the kink at 0 uses subgradient 0."""
    if grad.shape != pre_activation.shape:
        raise ValueError(f"relu_backward shape mismatch: {grad.shape} vs {pre_activation.shape}")
    return grad * (pre_activation > 0.0)


def log_softmax_rows(z: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Row-wise log-softmax of z / tau, stabilized by row-max subtraction."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    _check_2d(z)
    s = z / tau
    s = s - s.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def softmax_rows(z: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Row-wise softmax of z / tau; rows sum to 1."""
    return np.exp(log_softmax_rows(z, tau))


def glorot_init(rows: int, cols: int, seed) -> np.ndarray:
    """Seeded uniform(-a, a) matrix with a = sqrt(6 / (rows + cols))."""
    if rows <= 0 or cols <= 0:
        raise ValueError(f"matrix dims must be positive, got {rows}x{cols}")
    a = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-a, a, size=(rows, cols))


@dataclass(frozen=True, eq=False)
class KMeansResult:
    assignments: np.ndarray  # (n,) cluster index per point
    centroids: np.ndarray    # (k, f)
    inertia: float


def _sq_dists(x: np.ndarray, x_sq: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = x_sq[:, None] + (centroids * centroids).sum(axis=1)[None, :] - 2.0 * (x @ centroids.T)
    return np.maximum(d2, 0.0)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[int(rng.integers(n))]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _lloyd(x: np.ndarray, k: int, max_iter: int, rng: np.random.Generator):
    """One k-means++ seeded Lloyd run. Returns (assign, centroids, inertia, history)."""
    n = x.shape[0]
    x_sq = (x * x).sum(axis=1)
    centroids = _kmeanspp(x, k, rng)
    history: list[float] = []
    prev_assign = None
    assign = np.zeros(n, dtype=np.int64)
    inertia = np.inf
    for it in range(max_iter + 1):
        d2 = _sq_dists(x, x_sq, centroids)
        assign = d2.argmin(axis=1)
        point_cost = d2[np.arange(n), assign]
        inertia = float(point_cost.sum())
        if history:
            # Lloyd iterations never increase the objective
            assert inertia <= history[-1] + 1e-9 * max(1.0, abs(history[-1]))
        history.append(inertia)
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        if it == max_iter:
            break
        counts = np.bincount(assign, minlength=k)
        new_centroids = np.zeros_like(centroids)
        np.add.at(new_centroids, assign, x)
        nonempty = counts > 0
        new_centroids[nonempty] /= counts[nonempty, None]
        # re-seed empty clusters at the points farthest from their centroid
        empties = np.flatnonzero(~nonempty)
        if empties.size:
            order = np.argsort(-point_cost, kind="stable")
            for c, idx in zip(empties, order[: empties.size]):
                new_centroids[c] = x[idx]
        centroids = new_centroids
        prev_assign = assign
    return assign, centroids, inertia, history


def kmeans(x: np.ndarray, k: int, restarts: int = 10, max_iter: int = 100, seed=0) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia.

    Restart seeds derive deterministically from the master seed, so results are
    reproducible regardless of how restarts would be scheduled.
    """
    _check_2d(x)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        rng = np.random.default_rng(child)
        assign, centroids, inertia, _ = _lloyd(x, k, max_iter, rng)
        if best is None or inertia < best[2]:
            best = (assign, centroids, inertia)
    return KMeansResult(assignments=best[0], centroids=best[1], inertia=best[2])


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray                # (f,)
    components: np.ndarray          # (k, f), orthonormal rows
    explained_variance: np.ndarray  # (k,), nonincreasing


def pca_fit(x: np.ndarray, k: int) -> PcaModel:
    """Top-k principal directions via eigendecomposition of the covariance.

    Component signs are fixed so the largest-magnitude coordinate of each
    direction is positive, keeping the fit deterministic.
    """
    _check_2d(x)
    n, f = x.shape
    if not 1 <= k <= min(n, f):
        raise ValueError(f"k must be in [1, {min(n, f)}], got {k}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / max(1, n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:k]
    components = evecs[:, order].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=np.maximum(evals[order], 0.0),
    )


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    return (x - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, t: np.ndarray) -> np.ndarray:
    return t @ model.components + model.mean
