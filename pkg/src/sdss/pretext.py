"""Construction of the four auxiliary self-supervision tasks.

Each constructor is a pure function of its inputs and seed. A task carries the
per-node targets, the width of the auxiliary prediction head, and (for the
attribute-completion task) a masked copy of the features used as the auxiliary
pipeline input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, degrees
from .linalg import kmeans, pca_fit, pca_transform
from .partition import balanced_partition

KINDS = ("degree", "clustering", "partitioning", "completion")


@dataclass(frozen=True, eq=False)
class PretextTask:
    kind: str
    task_type: str  # "regression" | "classification"
    targets: np.ndarray  # (n, p) float64 or (n,) int64
    output_dim: int
    input_override: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown pretext kind: {self.kind!r}")
        expected = "regression" if self.kind in ("degree", "completion") else "classification"
        if self.task_type != expected:
            raise ValueError(f"{self.kind} must be a {expected} task")
        if self.task_type == "classification":
            if self.targets.ndim != 1:
                raise ValueError("classification targets must be a 1-D index array")
            if self.targets.size and self.targets.max() >= self.output_dim:
                raise ValueError("classification target outside [0, output_dim)")
        else:
            if self.targets.ndim != 2 or self.targets.shape[1] != self.output_dim:
                raise ValueError(
                    f"regression targets must be n x {self.output_dim}, got {self.targets.shape}"
                )
        if self.input_override is not None and self.input_override.shape[0] != self.targets.shape[0]:
            raise ValueError("input_override row count does not match targets")
        self.targets.setflags(write=False)
        if self.input_override is not None:
            self.input_override.setflags(write=False)
        if self.mask is not None:
            self.mask.setflags(write=False)

    def effective_index(self, idx: np.ndarray) -> np.ndarray:
        """Index set the auxiliary loss is evaluated on.

        Completion restricts to masked nodes inside idx; other tasks use idx
        unchanged.
        """
        if self.mask is None:
            return idx
        return np.intersect1d(idx, self.mask)


def make_degree_task(g: Graph) -> PretextTask:
    """Regress the raw (unaugmented) node degree; inputs are left untouched."""
    return PretextTask(
        kind="degree",
        task_type="regression",
        targets=degrees(g)[:, None],
        output_dim=1,
    )


def make_clustering_task(x: np.ndarray, k: int, seed, restarts: int = 10) -> PretextTask:
    """Classify nodes by k-means run on the raw, un-smoothed input attributes."""
    result = kmeans(x, k, restarts=restarts, seed=seed)
    return PretextTask(
        kind="clustering",
        task_type="classification",
        targets=result.assignments.astype(np.int64),
        output_dim=k,
    )


def make_partition_task(g: Graph, k: int, epsilon: float, seed) -> PretextTask:
    """Classify nodes by a balanced low-cut k-way partition of the structure."""
    parts = balanced_partition(g, k, epsilon, seed)
    return PretextTask(
        kind="partitioning",
        task_type="classification",
        targets=parts.astype(np.int64),
        output_dim=k,
    )


def make_completion_task(x: np.ndarray, mask_ratio: float, pca_dim: int, seed) -> PretextTask:
    """Regress low-dimensional attribute codes from masked inputs.

    Targets are the PCA codes of every node's attributes; the auxiliary input
    is the feature matrix with a seeded random subset of rows zeroed out. The
    loss is later restricted to masked nodes inside the labeled set.
    """
    n, f = x.shape
    if not 0.0 < mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must be in (0, 1), got {mask_ratio}")
    count = int(round(mask_ratio * n))
    if count == 0:
        raise ValueError(f"mask_ratio {mask_ratio} rounds to an empty mask for n={n}")
    rng = np.random.default_rng(seed)
    mask = np.sort(rng.choice(n, size=count, replace=False)).astype(np.int64)
    model = pca_fit(x, pca_dim)
    masked = x.copy()
    masked[mask] = 0.0
    return PretextTask(
        kind="completion",
        task_type="regression",
        targets=pca_transform(model, x),
        output_dim=pca_dim,
        input_override=masked,
        mask=mask,
    )
