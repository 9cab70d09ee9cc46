"""Dataset loading, split sampling, and synthetic planted-partition generation.

On-disk layout of a dataset directory (UTF-8, LF endings, 0-based indices):

    graph.txt      first line "n e", then e lines "u v"
    features.txt   first line "n f", then n lines of f decimals
    labels.txt     first line "n m", then n lines of one integer < m
    split.txt      optional; three lines "train: ...", "val: ...", "test: ..."

When split.txt is absent the loader samples a per-class split.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph


class DataError(ValueError):
    """Malformed dataset file or inconsistent dataset contents."""


@dataclass(frozen=True)
class SplitSpec:
    """How to obtain train/val/test index sets.

    mode "public-file" requires split.txt; "per-class-sample" draws
    train_per_class and val_per_class seeded samples from every class and
    sends the remainder to test.
    """

    mode: str = "per-class-sample"
    train_per_class: int = 20
    val_per_class: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("per-class-sample", "public-file"):
            raise ValueError(f"unknown split mode: {self.mode!r}")
        if self.train_per_class < 1 or self.val_per_class < 0:
            raise ValueError("train_per_class must be >= 1 and val_per_class >= 0")


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self) -> None:
        n = self.graph.n
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DataError(f"features must be {n}xF, got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise DataError("features contain non-finite entries")
        if self.labels.shape != (n,):
            raise DataError(f"labels must have shape ({n},), got {self.labels.shape}")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if self.train_idx.size == 0:
            raise DataError("train split is empty")
        seen: set[int] = set()
        for name, idx in (("train", self.train_idx), ("val", self.val_idx), ("test", self.test_idx)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"{name} split index out of range")
            dup = seen.intersection(idx.tolist())
            if dup:
                raise DataError(f"split sets overlap at node {min(dup)}")
            seen.update(idx.tolist())
        for arr in (self.features, self.labels, self.train_idx, self.val_idx, self.test_idx):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def onehot(self) -> np.ndarray:
        """One-hot label matrix, built on demand."""
        y = np.zeros((self.n, self.num_classes))
        y[np.arange(self.n), self.labels] = 1.0
        return y

    def with_split(self, train_idx, val_idx, test_idx) -> "Dataset":
        return replace(
            self,
            train_idx=np.asarray(train_idx, dtype=np.int64).copy(),
            val_idx=np.asarray(val_idx, dtype=np.int64).copy(),
            test_idx=np.asarray(test_idx, dtype=np.int64).copy(),
        )


def sample_split(labels: np.ndarray, num_classes: int, spec: SplitSpec):
    """Seeded class-balanced sampling; returns (train, val, test) index arrays."""
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    need = spec.train_per_class + spec.val_per_class
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        if members.size < need:
            raise ValueError(
                f"class {c} has {members.size} nodes, need {need} for the requested split"
            )
        perm = rng.permutation(members)
        train.append(perm[: spec.train_per_class])
        val.append(perm[spec.train_per_class : need])
        test.append(perm[need:])
    return (
        np.sort(np.concatenate(train)),
        np.sort(np.concatenate(val)) if spec.val_per_class else np.zeros(0, dtype=np.int64),
        np.sort(np.concatenate(test)) if any(t.size for t in test) else np.zeros(0, dtype=np.int64),
    )


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DataError(f"missing dataset file: {path}")
    return path.read_text(encoding="utf-8").splitlines()


def _parse_ints(path: Path, lineno: int, line: str, count: int | None = None) -> list[int]:
    try:
        values = [int(tok) for tok in line.split()]
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected integers, got {line!r}") from None
    if count is not None and len(values) != count:
        raise DataError(f"{path}:{lineno}: expected {count} values, got {len(values)}")
    return values


def _load_graph_file(path: Path) -> Graph:
    lines = _read_lines(path)
    if not lines:
        raise DataError(f"{path}:1: empty graph file")
    n, e = _parse_ints(path, 1, lines[0], 2)
    if len(lines) < 1 + e:
        raise DataError(f"{path}: header promises {e} edges, file has {len(lines) - 1}")
    edges = []
    for i in range(e):
        u, v = _parse_ints(path, i + 2, lines[i + 1], 2)
        edges.append((u, v))
    try:
        return build_graph(n, edges)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_features_file(path: Path) -> np.ndarray:
    lines = _read_lines(path)
    if not lines:
        raise DataError(f"{path}:1: empty features file")
    n, f = _parse_ints(path, 1, lines[0], 2)
    if len(lines) < 1 + n:
        raise DataError(f"{path}: header promises {n} rows, file has {len(lines) - 1}")
    out = np.empty((n, f))
    for i in range(n):
        row = lines[i + 1].split()
        if len(row) != f:
            raise DataError(f"{path}:{i + 2}: expected {f} values, got {len(row)}")
        try:
            out[i] = [float(tok) for tok in row]
        except ValueError:
            raise DataError(f"{path}:{i + 2}: expected decimals, got {lines[i + 1]!r}") from None
    return out


def _load_labels_file(path: Path) -> tuple[np.ndarray, int]:
    lines = _read_lines(path)
    if not lines:
        raise DataError(f"{path}:1: empty labels file")
    n, m = _parse_ints(path, 1, lines[0], 2)
    if len(lines) < 1 + n:
        raise DataError(f"{path}: header promises {n} rows, file has {len(lines) - 1}")
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        (value,) = _parse_ints(path, i + 2, lines[i + 1], 1)
        if not 0 <= value < m:
            raise DataError(f"{path}:{i + 2}: label {value} outside [0, {m})")
        labels[i] = value
    return labels, m


def _load_split_file(path: Path, n: int):
    lines = _read_lines(path)
    expected = ("train:", "val:", "test:")
    if len(lines) < 3:
        raise DataError(f"{path}: expected three lines (train/val/test), got {len(lines)}")
    out = []
    for i, prefix in enumerate(expected):
        tokens = lines[i].split()
        if not tokens or tokens[0] != prefix:
            raise DataError(f"{path}:{i + 1}: expected line starting with {prefix!r}")
        try:
            idx = np.array([int(t) for t in tokens[1:]], dtype=np.int64)
        except ValueError:
            raise DataError(f"{path}:{i + 1}: expected integer indices") from None
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise DataError(f"{path}:{i + 1}: split index out of range for n={n}")
        out.append(idx)
    return tuple(out)


def row_normalize_features(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit L1 mass; all-zero rows are left untouched."""
    sums = np.abs(x).sum(axis=1, keepdims=True)
    sums[sums == 0.0] = 1.0
    return x / sums


def load_dataset(directory, split: SplitSpec | None = None, row_normalize: bool = False) -> Dataset:
    """Load and validate a dataset directory.

    `split` controls split resolution: None uses split.txt when present and
    falls back to default per-class sampling; mode "public-file" requires
    split.txt; mode "per-class-sample" always resamples.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    graph = _load_graph_file(directory / "graph.txt")
    features = _load_features_file(directory / "features.txt")
    labels, num_classes = _load_labels_file(directory / "labels.txt")
    if features.shape[0] != graph.n:
        raise DataError(
            f"features row count {features.shape[0]} does not match graph n={graph.n}"
        )
    if labels.shape[0] != graph.n:
        raise DataError(f"labels count {labels.shape[0]} does not match graph n={graph.n}")
    if row_normalize:
        features = row_normalize_features(features)

    split_path = directory / "split.txt"
    use_file = split_path.is_file() if split is None else split.mode == "public-file"
    if use_file:
        if not split_path.is_file():
            raise DataError(f"missing dataset file: {split_path}")
        train, val, test = _load_split_file(split_path, graph.n)
    else:
        train, val, test = sample_split(labels, num_classes, split or SplitSpec())
    return Dataset(
        graph=graph,
        features=features,
        labels=labels,
        num_classes=num_classes,
        train_idx=train,
        val_idx=val,
        test_idx=test,
    )


def save_dataset(dataset: Dataset, directory) -> None:
    """Write the four text files of the on-disk format (split always included)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edges = dataset.graph.edges()
    with open(directory / "graph.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{dataset.n} {len(edges)}\n")
        for u, v in edges:
            fh.write(f"{u} {v}\n")
    with open(directory / "features.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{dataset.n} {dataset.num_features}\n")
        for row in dataset.features:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")
    with open(directory / "labels.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{dataset.n} {dataset.num_classes}\n")
        for y in dataset.labels:
            fh.write(f"{int(y)}\n")
    with open(directory / "split.txt", "w", encoding="utf-8") as fh:
        for name, idx in (
            ("train", dataset.train_idx),
            ("val", dataset.val_idx),
            ("test", dataset.test_idx),
        ):
            fh.write(f"{name}: " + " ".join(str(int(i)) for i in idx) + "\n")


def generate_planted_partition(
    blocks: int,
    per_block: int,
    p_in: float,
    p_out: float,
    f: int,
    shift: float,
    seed,
    train_per_class: int | None = None,
    val_per_class: int | None = None,
) -> Dataset:
    """Random block-structured graph with Gaussian features and block labels.

    Edges appear independently with probability p_in inside a block and p_out
    across blocks. Features are standard normal noise plus a per-block mean of
    magnitude `shift` along a seeded random unit direction. Labels are block
    ids; a class-balanced split is sampled (20 train / 30 val per class when
    the blocks are large enough, scaled down otherwise).
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if blocks < 2:
        raise ValueError(f"need at least 2 blocks, got {blocks}")
    if per_block < 1 or f < 1:
        raise ValueError("per_block and f must be positive")
    n = blocks * per_block
    labels = np.repeat(np.arange(blocks, dtype=np.int64), per_block)
    rng = np.random.default_rng(seed)

    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    graph = build_graph(n, zip(iu[keep].tolist(), ju[keep].tolist()))

    directions = rng.standard_normal((blocks, f))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    means = shift * directions / norms
    features = rng.standard_normal((n, f)) + means[labels]

    if train_per_class is None:
        train_per_class = min(per_block, max(1, min(20, per_block // 3)))
    if val_per_class is None:
        val_per_class = min(30, (per_block - train_per_class) // 2)
    spec = SplitSpec(train_per_class=train_per_class, val_per_class=val_per_class, seed=seed)
    train, val, test = sample_split(labels, blocks, spec)
    return Dataset(
        graph=graph,
        features=features,
        labels=labels,
        num_classes=blocks,
        train_idx=train,
        val_idx=val,
        test_idx=test,
    )
