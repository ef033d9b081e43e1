"""Binary graph container, edge-list ingestion and degree bookkeeping."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import EdgeListParseError, SelfLoopError

MODES = ("undirected", "directed", "bipartite")

_HEADER = re.compile(r"^#\s*n_rows\s*=\s*(\d+)\s+n_cols\s*=\s*(\d+)\s*$")
_SPLIT = re.compile(r"[\t,]|\s+")


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Immutable binary adjacency structure.

    Edges are stored as two sorted, duplicate-free index arrays. Undirected
    graphs hold both orientations of every edge, so ``rows``/``cols`` always
    describe the full adjacency matrix.

    Parameters
    ----------
    n_rows, n_cols : int
        Number of source and destination nodes. Equal unless ``mode`` is
        ``"bipartite"``.
    rows, cols : ndarray of int
        Edge endpoints.
    mode : {"undirected", "directed", "bipartite"}
    row_labels, col_labels : tuple of str, optional
        Original node labels when the graph was read from a labelled file.
        Undirected and directed graphs share one label space, stored in
        ``row_labels``.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    mode: str = "undirected"
    row_labels: Optional[tuple] = None
    col_labels: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("graph must have at least one node on each side")
        if self.mode != "bipartite" and self.n_rows != self.n_cols:
            raise ValueError(f"{self.mode} graphs must be square")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ValueError("column index out of range")
        key = rows * self.n_cols + cols
        if key.size and np.any(np.diff(key) <= 0):
            raise ValueError("edges must be sorted and unique; use SparseGraph.from_edges")
        if self.mode == "undirected":
            loops = rows == cols
            if loops.any():
                raise SelfLoopError(int(rows[loops][0]))
            mirror = np.sort(cols * self.n_cols + rows)
            if not np.array_equal(mirror, key):
                raise ValueError("undirected graph must contain both (i, j) and (j, i)")
        rows.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def from_edges(cls, n_rows, n_cols, edges, mode="undirected", **labels) -> "SparseGraph":
        """Build a graph from an iterable of (row, col) pairs.

        Duplicates are collapsed and undirected edges are symmetrised.
        """
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64).reshape(-1, 2)
        rows, cols = arr[:, 0], arr[:, 1]
        if mode == "undirected":
            loops = rows == cols
            if loops.any():
                raise SelfLoopError(int(rows[loops][0]))
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        return cls._from_arrays(n_rows, n_cols, rows, cols, mode, **labels)

    @classmethod
    def from_dense(cls, a, mode="undirected") -> "SparseGraph":
        a = np.asarray(a)
        rows, cols = np.nonzero(a)
        return cls._from_arrays(a.shape[0], a.shape[1], rows, cols, mode)

    @classmethod
    def _from_arrays(cls, n_rows, n_cols, rows, cols, mode, **labels):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows
                          or cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("edge index out of range")
        key = np.unique(rows * n_cols + cols)
        return cls(n_rows, n_cols, key // n_cols, key % n_cols, mode, **labels)

    @property
    def n_edges(self) -> int:
        """Number of stored (ordered) pairs."""
        return int(self.rows.size)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def edge_set(self) -> set:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.rows.size, dtype=np.float64)
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.adjacency.toarray()


@dataclass(frozen=True)
class DegreeProfile:
    out_degrees: np.ndarray
    in_degrees: np.ndarray

    @property
    def isolated_rows(self) -> np.ndarray:
        """Mask of source nodes without outgoing edges."""
        return self.out_degrees == 0

    @property
    def isolated_cols(self) -> np.ndarray:
        return self.in_degrees == 0


def degree_profile(g: SparseGraph) -> DegreeProfile:
    out = np.bincount(g.rows, minlength=g.n_rows).astype(np.int64)
    inn = np.bincount(g.cols, minlength=g.n_cols).astype(np.int64)
    return DegreeProfile(out, inn)


def _tokens(line: str) -> list:
    return [t for t in _SPLIT.split(line.strip()) if t]


def load_edge_list(path, mode="undirected") -> SparseGraph:
    """Read a tab-, comma- or whitespace-separated edge list.

    Lines starting with ``#`` are comments, except an optional header of the
    form ``# n_rows=<int> n_cols=<int>`` which fixes the node counts. When
    every endpoint is a non-negative integer the integers are used as node
    ids; otherwise endpoints are treated as labels and numbered in
    first-seen order (separately per side for bipartite graphs).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    header = None
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                match = _HEADER.match(line)
                if match:
                    header = (int(match.group(1)), int(match.group(2)))
                continue
            toks = _tokens(line)
            if len(toks) != 2:
                raise EdgeListParseError(f"expected 2 fields, found {len(toks)}: {line!r}", lineno)
            pairs.append((lineno, toks[0], toks[1]))

    numeric = all(s.isdigit() and d.isdigit() for _, s, d in pairs)
    if numeric:
        src = np.array([int(s) for _, s, _ in pairs], dtype=np.int64)
        dst = np.array([int(d) for _, _, d in pairs], dtype=np.int64)
        labels = {}
        if mode == "undirected":
            for u, v in zip(src, dst):
                if u == v:
                    raise SelfLoopError(int(u))
    else:
        row_ids: dict = {}
        col_ids = {} if mode == "bipartite" else row_ids
        src = np.empty(len(pairs), dtype=np.int64)
        dst = np.empty(len(pairs), dtype=np.int64)
        for idx, (lineno, s, d) in enumerate(pairs):
            if mode == "undirected" and s == d:
                raise SelfLoopError(s)
            src[idx] = row_ids.setdefault(s, len(row_ids))
            dst[idx] = col_ids.setdefault(d, len(col_ids))
        labels = {"row_labels": tuple(row_ids)}
        if mode == "bipartite":
            labels["col_labels"] = tuple(col_ids)

    if header is not None:
        n_rows, n_cols = header
    elif numeric:
        top_r = int(src.max()) + 1 if src.size else 1
        top_c = int(dst.max()) + 1 if dst.size else 1
        if mode == "bipartite":
            n_rows, n_cols = top_r, top_c
        else:
            n_rows = n_cols = max(top_r, top_c)
    else:
        n_rows = max(len(labels["row_labels"]), 1)
        n_cols = max(len(labels.get("col_labels", labels["row_labels"])), 1)
        if mode != "bipartite":
            n_cols = n_rows
    if mode == "undirected" and n_rows != n_cols:
        raise EdgeListParseError(f"undirected header declares {n_rows}x{n_cols}")
    if src.size and (src.max() >= n_rows or dst.max() >= n_cols):
        raise EdgeListParseError("node index exceeds the size declared in the header")
    return SparseGraph.from_edges(n_rows, n_cols, np.column_stack([src, dst]), mode, **labels)


def write_edge_list(g: SparseGraph, path, delimiter="\t") -> None:
    """Write ``g`` in the format read by :func:`load_edge_list`.

    Undirected edges are written once (``i < j``). Labelled graphs are
    written with their labels.
    """
    rows, cols = g.rows, g.cols
    if g.mode == "undirected":
        keep = rows < cols
        rows, cols = rows[keep], cols[keep]
    row_names = g.row_labels
    col_names = g.col_labels if g.mode == "bipartite" else g.row_labels
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n_rows={g.n_rows} n_cols={g.n_cols}\n")
        for r, c in zip(rows.tolist(), cols.tolist()):
            a = row_names[r] if row_names is not None else r
            b = col_names[c] if col_names is not None else c
            fh.write(f"{a}{delimiter}{b}\n")
