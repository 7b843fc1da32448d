"""Dataset ingestion, unit-ball normalization, and row-wise partitioning.

The global matrix X (n samples of dimension d) is scaled so that every
sample lies within or on the surface of the unit ball, then split row-wise
into per-agent blocks.  Normalization exists solely to give single-row
dataset changes unit sensitivity; it is a global rescale, not a per-row
projection, so relative geometry is preserved.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RawDataset:
    """Rows as parsed from disk, before any preprocessing."""

    rows: np.ndarray  # (n, d)
    source_name: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError(f"rows must be a 2-D array, got shape {rows.shape}")
        if rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {rows.shape}")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Preprocessed data matrix.

    After :func:`normalize_unit_ball` every row has Euclidean norm at most
    1 + 1e-12.  The container itself only enforces shape and finiteness so
    that noisy variants (e.g. the LDP baseline's perturbed data) can reuse
    it; use :attr:`unit_ball_ok` to check the normalized-data invariant.
    """

    X: np.ndarray  # (n, d)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a non-empty 2-D array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def unit_ball_ok(self) -> bool:
        return bool(np.linalg.norm(self.X, axis=1).max() <= 1.0 + 1e-12)


@dataclass(frozen=True)
class PartitionedDataset:
    """Row blocks X_i assigned to m agents, stacking back to the global X."""

    blocks: tuple  # m arrays of shape (n_i, d)
    offsets: tuple  # m index arrays: agent i's global row indices

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
        offsets = tuple(np.asarray(o, dtype=int) for o in self.offsets)
        if len(blocks) != len(offsets) or not blocks:
            raise ValueError("blocks and offsets must be non-empty and aligned")
        d = blocks[0].shape[1]
        for i, (b, o) in enumerate(zip(blocks, offsets)):
            if b.ndim != 2 or b.shape[1] != d:
                raise ValueError(f"block {i} has shape {b.shape}, expected (*, {d})")
            if b.shape[0] != o.shape[0] or b.shape[0] < 1:
                raise ValueError(f"block {i} and its offsets disagree")
        n = sum(b.shape[0] for b in blocks)
        all_idx = np.concatenate(offsets)
        if sorted(all_idx.tolist()) != list(range(n)):
            raise ValueError("offsets are not a partition of 0..n-1")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "offsets", offsets)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return sum(b.shape[0] for b in self.blocks)

    @property
    def d(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def sizes(self) -> tuple:
        return tuple(b.shape[0] for b in self.blocks)

    def stacked(self) -> np.ndarray:
        """Global X reassembled row-by-row from the blocks."""
        X = np.empty((self.n, self.d))
        for b, o in zip(self.blocks, self.offsets):
            X[o] = b
        return X

    def replace_row(self, agent: int, row: int, new_row: np.ndarray) -> "PartitionedDataset":
        """Copy with one local row of one agent replaced (adjacency variants)."""
        if not 0 <= agent < self.m:
            raise ValueError(f"agent {agent} out of range for m={self.m}")
        block = self.blocks[agent]
        if not 0 <= row < block.shape[0]:
            raise ValueError(f"row {row} out of range for agent {agent}")
        new_block = block.copy()
        new_block[row] = np.asarray(new_row, dtype=float)
        blocks = list(self.blocks)
        blocks[agent] = new_block
        return PartitionedDataset(tuple(blocks), self.offsets)


def load_csv(path: str, has_header: bool = False,
             columns: Sequence[int] | None = None) -> RawDataset:
    """Parse a numeric CSV file into a :class:`RawDataset`.

    Comma-separated, UTF-8, '.' decimal point, optional single header row,
    no quoting.  Parse failures name the offending 1-based row and column.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    start = 1 if has_header else 0
    body = [(i + 1, line) for i, line in enumerate(lines[start:], start=start)
            if line.strip() != ""]
    if not body:
        raise ValueError(f"{path}: no rows")
    rows = []
    width = None
    for lineno, line in body:
        cells = line.split(",")
        if columns is not None:
            try:
                cells = [cells[j] for j in columns]
            except IndexError:
                raise ValueError(f"{path}: row {lineno} has no column "
                                 f"{max(columns)} (0-based)") from None
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ValueError(f"{path}: row {lineno} has {len(cells)} cells, "
                             f"expected {width}")
        parsed = []
        for j, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                raise ValueError(f"{path}: row {lineno}, column {j + 1}: "
                                 f"cannot parse {cell.strip()!r} as a number") from None
            if not np.isfinite(value):
                raise ValueError(f"{path}: row {lineno}, column {j + 1}: "
                                 f"non-finite value {cell.strip()!r}")
            parsed.append(value)
        rows.append(parsed)
    return RawDataset(np.asarray(rows, dtype=float), os.path.basename(path))


def center_rows(raw: RawDataset) -> RawDataset:
    """Subtract the column means (optional preprocessing, off by default)."""
    return RawDataset(raw.rows - raw.rows.mean(axis=0), raw.source_name)


def normalize_unit_ball(raw: RawDataset) -> Dataset:
    """Scale all rows by the maximum row norm.

    The scale is s = max_i ||row_i|| (s = 1 when every row is zero), so the
    output's largest row sits exactly on the unit sphere and all others
    strictly inside.
    """
    rows = raw.rows
    if not np.all(np.isfinite(rows)):
        raise ValueError("dataset contains non-finite values")
    s = np.linalg.norm(rows, axis=1).max()
    if s == 0.0:
        s = 1.0
    return Dataset(rows / s)


def partition_rows(X: Dataset, m: int,
                   sizes: Sequence[int] | None = None) -> PartitionedDataset:
    """Split X row-wise into m consecutive agent blocks.

    Default sizes are balanced n // m with the remainder going to the
    lowest-index agents.  Explicit sizes must be positive and sum to n.
    """
    n = X.n
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if sizes is None:
        if n < m:
            raise ValueError(f"cannot split {n} rows among {m} agents without sizes")
        base, extra = divmod(n, m)
        sizes = [base + 1 if i < extra else base for i in range(m)]
    else:
        sizes = list(sizes)
        if len(sizes) != m:
            raise ValueError(f"got {len(sizes)} sizes for m={m}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"all block sizes must be >= 1, got {sizes}")
        if sum(sizes) != n:
            raise ValueError(f"sizes sum to {sum(sizes)}, expected n={n}")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    blocks = tuple(X.X[bounds[i]:bounds[i + 1]].copy() for i in range(m))
    offsets = tuple(np.arange(bounds[i], bounds[i + 1]) for i in range(m))
    return PartitionedDataset(blocks, offsets)
