"""Sparse count matrices and their table-count augmentation.

A ``CountMatrix`` is a J x K matrix of nonnegative integers in which every
column carries at least one positive entry (features never observed do not
get columns).  Entries are stored as parallel coordinate arrays sorted by
(column, row); instances are frozen after construction so they can be shared
freely across threads and reused as dict keys via ``canonical_key``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CountMatrix",
    "AugmentedMatrix",
    "canonical_form",
    "save_matrix",
    "load_matrix",
]


class CountMatrix:
    """Immutable sparse matrix of nonnegative counts with nonzero columns."""

    __slots__ = ("J", "K", "rows", "cols", "vals", "col_sums", "labels", "_col_starts")

    def __init__(self, J, rows, cols, vals, K=None, labels=None):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.int64)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise ValueError("rows, cols and vals must be equal-length 1-d arrays")
        if np.any(vals <= 0):
            raise ValueError("stored entries must be strictly positive counts")
        if K is None:
            K = int(cols.max()) + 1 if cols.size else 0
        if J < 0 or K < 0:
            raise ValueError("J and K must be nonnegative")
        if rows.size and (rows.min() < 0 or rows.max() >= J):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= K):
            raise ValueError("column index out of range")
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if np.any((cols[1:] == cols[:-1]) & (rows[1:] == rows[:-1])):
            raise ValueError("duplicate (row, column) entry")
        col_sums = np.bincount(cols, weights=vals, minlength=K).astype(np.int64)
        if np.any(col_sums == 0):
            raise ValueError("every column must have at least one positive entry")
        if labels is not None:
            labels = tuple(labels)
            if len(labels) != K:
                raise ValueError(f"expected {K} labels, got {len(labels)}")
        object.__setattr__(self, "J", int(J))
        object.__setattr__(self, "K", int(K))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)
        object.__setattr__(self, "col_sums", col_sums)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(
            self, "_col_starts", np.searchsorted(cols, np.arange(K + 1))
        )
        for arr in (rows, cols, vals, col_sums, self._col_starts):
            arr.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("CountMatrix is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_dense(cls, arr, labels=None) -> "CountMatrix":
        arr = np.asarray(arr, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError("dense input must be 2-d")
        rows, cols = np.nonzero(arr)
        return cls(arr.shape[0], rows, cols, arr[rows, cols], K=arr.shape[1], labels=labels)

    @classmethod
    def from_columns(cls, J, columns, labels=None) -> "CountMatrix":
        """Build from a list of columns, each a list of (row, count) pairs."""
        rows, cols, vals = [], [], []
        for k, col in enumerate(columns):
            for j, v in col:
                rows.append(j)
                cols.append(k)
                vals.append(v)
        return cls(J, rows, cols, vals, K=len(columns), labels=labels)

    @classmethod
    def empty(cls, J: int) -> "CountMatrix":
        return cls(J, [], [], [], K=0, labels=())

    # -- views --------------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.J, self.K), dtype=np.int64)
        out[self.rows, self.cols] = self.vals
        return out

    def column_entries(self, k: int):
        """(row indices, counts) of column k's nonzero entries."""
        s, e = self._col_starts[k], self._col_starts[k + 1]
        return self.rows[s:e], self.vals[s:e]

    @property
    def total(self) -> int:
        return int(self.vals.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.vals, minlength=self.J).astype(
            np.int64
        )

    def column_tuple(self, k: int) -> tuple:
        s, e = self._col_starts[k], self._col_starts[k + 1]
        col = np.zeros(self.J, dtype=np.int64)
        col[self.rows[s:e]] = self.vals[s:e]
        return tuple(col.tolist())

    def permute_columns(self, order) -> "CountMatrix":
        order = np.asarray(order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(self.K)):
            raise ValueError("order must be a permutation of the columns")
        inv = np.empty(self.K, dtype=np.int64)
        inv[order] = np.arange(self.K)
        labels = (
            tuple(self.labels[k] for k in order) if self.labels is not None else None
        )
        return CountMatrix(
            self.J, self.rows, inv[self.cols], self.vals, K=self.K, labels=labels
        )

    def canonical_key(self) -> tuple:
        """Order-free fingerprint: the sorted tuple of column vectors."""
        return tuple(sorted(self.column_tuple(k) for k in range(self.K)))

    def __eq__(self, other):
        if not isinstance(other, CountMatrix):
            return NotImplemented
        return (
            self.J == other.J
            and self.K == other.K
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
            and self.labels == other.labels
        )

    def __hash__(self):
        return hash((self.J, self.K, self.vals.tobytes(), self.cols.tobytes()))

    def __repr__(self):
        return f"CountMatrix(J={self.J}, K={self.K}, total={self.total})"


def canonical_form(matrix: CountMatrix) -> CountMatrix:
    """Columns sorted lexicographically by their full count vectors.

    Idempotent, and invariant under any column permutation of the input, so
    two matrices drawn with different column orderings compare equal after
    canonicalization.
    """
    keyed = sorted(range(matrix.K), key=matrix.column_tuple)
    return matrix.permute_columns(keyed)


@dataclass(frozen=True)
class AugmentedMatrix:
    """A count matrix paired with per-entry latent table counts.

    Table counts live on exactly the nonzero entries of the base matrix
    (l = 0 wherever n = 0) and satisfy 1 <= l <= n elsewhere.
    """

    base: CountMatrix
    tables: np.ndarray = field(repr=False)

    def __post_init__(self):
        tables = np.asarray(self.tables, dtype=np.int64)
        if tables.shape != self.base.vals.shape:
            raise ValueError("tables must align with the base nonzero entries")
        if np.any(tables < 1) or np.any(tables > self.base.vals):
            raise ValueError("table counts must satisfy 1 <= l <= n")
        tables.setflags(write=False)
        object.__setattr__(self, "tables", tables)

    @property
    def l_col_sums(self) -> np.ndarray:
        return np.bincount(
            self.base.cols, weights=self.tables, minlength=self.base.K
        ).astype(np.int64)

    @property
    def l_row_sums(self) -> np.ndarray:
        return np.bincount(
            self.base.rows, weights=self.tables, minlength=self.base.J
        ).astype(np.int64)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.base.J, self.base.K), dtype=np.int64)
        out[self.base.rows, self.base.cols] = self.tables
        return out

    def permute_columns(self, order) -> "AugmentedMatrix":
        # reuse the base permutation, then realign tables to the re-sorted
        # entry order by round-tripping through dense coordinates
        new_base = self.base.permute_columns(order)
        dense = self.to_dense()[:, order]
        return AugmentedMatrix(new_base, dense[new_base.rows, new_base.cols])


# ---------------------------------------------------------------------------
# triplet-text serialization
# ---------------------------------------------------------------------------

def save_matrix(matrix: CountMatrix, path: str, labels_path: str | None = None) -> None:
    """Write ``J K`` header plus 0-indexed ``j k n`` triplet lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.J} {matrix.K}\n")
        for j, k, v in zip(matrix.rows, matrix.cols, matrix.vals):
            fh.write(f"{j} {k} {v}\n")
    if labels_path is not None:
        labels = matrix.labels or tuple(f"c{k}" for k in range(matrix.K))
        with open(labels_path, "w", encoding="utf-8") as fh:
            fh.writelines(lab + "\n" for lab in labels)


def load_matrix(path: str, labels_path: str | None = None) -> CountMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header line")
        J, K = int(header[0]), int(header[1])
        rows, cols, vals = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'j k n'")
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(int(parts[2]))
    labels = None
    if labels_path is not None and os.path.exists(labels_path):
        with open(labels_path, "r", encoding="utf-8") as fh:
            labels = tuple(line.rstrip("\n") for line in fh if line.strip())
    return CountMatrix(J, rows, cols, vals, K=K, labels=labels)
