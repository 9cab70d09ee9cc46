"""Sparse undirected graphs and the symmetrically normalized adjacency operator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph stored as a CSR adjacency over {0,1} entries.

    Self-loops are stripped on construction and duplicate or reversed edge
    listings collapse to a single undirected edge, so the diagonal is zero and
    the structure is exactly symmetric.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self) -> None:
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted neighbor indices of node v."""
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edges(self) -> list[tuple[int, int]]:
        """Deduplicated undirected pairs (u, v) with u < v, in sorted order."""
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = src < self.indices
        return list(zip(src[keep].tolist(), self.indices[keep].tolist()))

    def adjacency(self) -> sp.csr_matrix:
        """Binary adjacency as a scipy CSR matrix (float64 values)."""
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def build_graph(n: int, edge_list) -> Graph:
    """Construct a Graph from a node count and an iterable of index pairs.

    Input pairs may repeat, appear in both orientations, or contain self-loops;
    the result is the deduplicated symmetric closure with self-loops dropped.
    Raises ValueError for n <= 0 or endpoints outside [0, n).
    """
    if n <= 0:
        raise ValueError("graph must have at least one node")
    pairs = set()
    for u, v in edge_list:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            continue  # self-loops belong to normalize(), not the raw structure
        pairs.add((u, v) if u < v else (v, u))
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        src = np.concatenate([arr[:, 0], arr[:, 1]])
        dst = np.concatenate([arr[:, 1], arr[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        indices = dst
    else:
        indptr = np.zeros(n + 1, dtype=np.int64)
        indices = np.zeros(0, dtype=np.int64)
    return Graph(n=n, indptr=indptr, indices=indices)


def degrees(g: Graph) -> np.ndarray:
    """Unaugmented node degrees as float64 (isolated nodes have degree 0)."""
    return np.diff(g.indptr).astype(np.float64)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Self-loop-augmented, symmetrically normalized adjacency in CSR form.

    Every stored value is strictly positive and the matrix is symmetric with
    row sums in (0, 1].
    """

    mat: sp.csr_matrix

    def __post_init__(self) -> None:
        self.mat.data.setflags(write=False)
        self.mat.indices.setflags(write=False)
        self.mat.indptr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.mat.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.mat.indices

    @property
    def values(self) -> np.ndarray:
        return self.mat.data


def normalize(g: Graph) -> NormalizedAdjacency:
    """Return the normalized operator used by every propagation step.

    Adds a self-loop to each node, then scales entry (i, j) by the inverse
    square roots of both augmented degrees. Always well defined because the
    augmented degree is at least 1.
    """
    d_aug = np.diff(g.indptr).astype(np.float64) + 1.0
    inv_sqrt = sp.diags(1.0 / np.sqrt(d_aug))
    a_hat = g.adjacency() + sp.identity(g.n, format="csr")
    mat = (inv_sqrt @ a_hat @ inv_sqrt).tocsr()
    mat.sort_indices()
    return NormalizedAdjacency(mat=mat)


def spmm(lnorm: NormalizedAdjacency, h: np.ndarray) -> np.ndarray:
    """Sparse-dense product lnorm @ h with a fixed row-major summation order."""
    if h.ndim != 2:
        raise ValueError(f"dense operand must be 2-D, got shape {h.shape}")
    if h.shape[0] != lnorm.n:
        raise ValueError(f"shape mismatch: operator is {lnorm.n}x{lnorm.n}, operand {h.shape}")
    return lnorm.mat @ np.ascontiguousarray(h, dtype=np.float64)
