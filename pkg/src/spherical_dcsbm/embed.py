"""Truncated spectral embeddings (ASE / DASE) and scree-plot elbows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .exceptions import DimensionError, NumericalError
from .graph import SparseGraph, degree_profile

DENSE_MAX_N = 500


@dataclass(frozen=True, eq=False)
class Embedding:
    """Estimated latent positions.

    Attributes
    ----------
    positions : ndarray, shape (n, m)
    spectrum : ndarray, shape (m,)
        Eigenvalue magnitudes (ASE) or singular values (DASE), non-increasing.
    side : {"single", "left", "right"}
    isolated : ndarray of bool, shape (n,), optional
        Nodes with no incident edges on this side; their rows are zero.
    """

    positions: np.ndarray
    spectrum: np.ndarray
    side: str = "single"
    isolated: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def m(self) -> int:
        return self.positions.shape[1]

    def truncate(self, m: int) -> "Embedding":
        return Embedding(self.positions[:, :m], self.spectrum[:m], self.side, self.isolated)


def _sign_flips(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of each column made positive; argmax keeps the
    # first index on ties. For a non-negative connected adjacency matrix this
    # makes the Perron vector entrywise non-negative.
    if vectors.shape[0] == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def _start_vector(n: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.5, 1.5, size=n)


def _top_eigen(g: SparseGraph, m: int, seed, solver: str):
    n = g.n_rows
    if g.n_edges == 0:
        return np.zeros(m), np.zeros((n, m))
    use_dense = solver == "dense" or (solver == "auto" and (n <= DENSE_MAX_N or m >= n - 1))
    if use_dense:
        vals, vecs = la.eigh(g.to_dense())
    else:
        try:
            vals, vecs = sla.eigsh(g.adjacency, k=m, which="LM", tol=0.0,
                                   v0=_start_vector(n, seed), maxiter=max(1000, 20 * n))
        except sla.ArpackNoConvergence as exc:
            raise NumericalError("eigsh did not converge", iteration=max(1000, 20 * n)) from exc
    # exact magnitude ties put the positive eigenvalue first
    order = np.lexsort((-vals, -np.abs(vals)))[:m]
    return vals[order], vecs[:, order]


def ase(g: SparseGraph, m: int, seed=0, solver="auto") -> Embedding:
    """Adjacency spectral embedding ``Gamma |Lambda|^{1/2}`` of an undirected graph.

    Parameters
    ----------
    g : SparseGraph
        Undirected graph.
    m : int
        Number of leading eigenpairs (by eigenvalue magnitude) to keep.
    seed : int
        Seed for the Krylov start vector; fixes the output bitwise.
    solver : {"auto", "dense", "sparse"}
        ``"auto"`` uses a dense decomposition for ``n <= 500`` and the
        implicitly restarted Lanczos method otherwise.

    Notes
    -----
    Negative eigenvalues are kept through their magnitude; the vectors of
    such columns are used as they are. Column signs are fixed so that the
    entry of largest magnitude in each column is positive.
    """
    if g.mode != "undirected":
        raise ValueError("ase requires an undirected graph; use dase for directed or bipartite")
    if not 1 <= m <= g.n_rows:
        raise DimensionError(f"m must be in [1, {g.n_rows}], got {m}")
    vals, vecs = _top_eigen(g, m, seed, solver)
    if g.n_edges:
        vecs = vecs * _sign_flips(vecs)
    mags = np.abs(vals)
    positions = vecs * np.sqrt(mags)
    return Embedding(positions, mags, "single", degree_profile(g).isolated_rows)


def dase(g: SparseGraph, m: int, seed=0, solver="auto"):
    """Directed adjacency spectral embedding ``(U S^{1/2}, V S^{1/2})``.

    Signs are fixed on the left singular vectors and the same flips applied
    to the right ones, so ``U S V^T`` is unchanged.
    """
    if g.mode not in ("directed", "bipartite"):
        raise ValueError("dase requires a directed or bipartite graph")
    k_max = min(g.n_rows, g.n_cols)
    if not 1 <= m <= k_max:
        raise DimensionError(f"m must be in [1, {k_max}], got {m}")
    prof = degree_profile(g)
    if g.n_edges == 0:
        s = np.zeros(m)
        u = np.zeros((g.n_rows, m))
        v = np.zeros((g.n_cols, m))
    else:
        use_dense = solver == "dense" or (
            solver == "auto" and (max(g.shape) <= DENSE_MAX_N or m >= k_max - 1))
        if use_dense:
            u, s, vt = la.svd(g.to_dense(), full_matrices=False)
            v = vt.T
        else:
            try:
                u, s, vt = sla.svds(g.adjacency, k=m, tol=0.0, solver="arpack",
                                    v0=_start_vector(k_max, seed),
                                    maxiter=max(1000, 20 * k_max))
            except sla.ArpackNoConvergence as exc:
                raise NumericalError("svds did not converge", iteration=max(1000, 20 * k_max)) from exc
            v = vt.T
        order = np.argsort(-s, kind="stable")[:m]
        s, u, v = s[order], u[:, order], v[:, order]
        flips = _sign_flips(u)
        u, v = u * flips, v * flips
    root = np.sqrt(s)
    left = Embedding(u * root, s, "left", prof.isolated_rows)
    right = Embedding(v * root, s, "right", prof.isolated_cols)
    return left, right


def row_normalise(e: Embedding) -> Embedding:
    """Divide every non-zero row of the embedding by its Euclidean norm."""
    norms = np.linalg.norm(e.positions, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return Embedding(e.positions / safe, e.spectrum, e.side, e.isolated)


class ElbowResult(NamedTuple):
    elbows: list
    shortfall: bool


def profile_log_likelihood(values: np.ndarray) -> np.ndarray:
    """Profile log-likelihood of every two-group split of a sorted sequence.

    Entry ``q - 1`` scores the split into ``values[:q]`` and ``values[q:]``,
    each group Gaussian with its own mean and a pooled common variance.
    """
    x = np.asarray(values, dtype=float)
    p = x.size
    out = np.empty(p - 1)
    scale = max(np.var(x), np.max(np.abs(x)) ** 2, 1.0)
    floor = 1e-12 * scale
    for q in range(1, p):
        head, tail = x[:q], x[q:]
        ss = np.sum((head - head.mean()) ** 2) + np.sum((tail - tail.mean()) ** 2)
        var = max(ss / max(p - 2, 1), floor)
        out[q - 1] = -0.5 * p * np.log(2 * np.pi * var) - 0.5 * ss / var
    return out


def scree_elbows(spectrum, n_elbows: int = 3) -> ElbowResult:
    """Locate successive scree-plot elbows by profile likelihood.

    The first elbow is the split maximising :func:`profile_log_likelihood`;
    each later elbow repeats the search on the values after the previous
    one. Elbows are returned as 1-based positions in the full spectrum.
    ``shortfall`` is set when fewer than ``n_elbows`` could be located.
    """
    x = np.asarray(spectrum, dtype=float)
    if n_elbows < 1:
        raise ValueError("n_elbows must be >= 1")
    if x.size < 2:
        raise ValueError("spectrum needs at least two values")
    if np.any(np.diff(x) > 1e-12 * max(1.0, abs(x[0]))):
        raise ValueError("spectrum must be non-increasing")
    elbows = []
    offset = 0
    tail = x
    while len(elbows) < n_elbows and tail.size >= 2:
        q = int(np.argmax(profile_log_likelihood(tail))) + 1
        offset += q
        elbows.append(offset)
        tail = tail[q:]
    return ElbowResult(elbows, len(elbows) < n_elbows)
