"""Degree-corrected (co-)blockmodel simulators with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy import special

from .graph import SparseGraph

# rows per chunk are chosen so one chunk holds about this many Bernoulli draws
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class RhoLaw:
    """Distribution of the degree-correction parameters.

    ``kind`` is ``"constant"`` (value ``a``; ``a=1`` gives a plain SBM),
    ``"uniform"`` on ``[a, b]`` or ``"beta"`` with shapes ``(a, b)``.
    """

    kind: str = "constant"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "beta"):
            raise ValueError(f"unknown rho law {self.kind!r}")
        if self.kind == "constant" and not 0 <= self.a <= 1:
            raise ValueError("constant degree correction must lie in [0, 1]")
        if self.kind == "uniform" and not 0 <= self.a <= self.b <= 1:
            raise ValueError("uniform degree correction support must lie in [0, 1]")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0):
            raise ValueError("beta shapes must be positive")

    @classmethod
    def constant(cls, value=1.0):
        return cls("constant", value, value)

    @classmethod
    def uniform(cls, a=0.0, b=1.0):
        return cls("uniform", a, b)

    @classmethod
    def beta(cls, a, b):
        return cls("beta", a, b)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, float(self.a))
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        return rng.beta(self.a, self.b, size)

    def moment(self, p: int) -> float:
        """Raw moment ``E[rho^p]``."""
        if self.kind == "constant":
            return float(self.a) ** p
        if self.kind == "uniform":
            a, b = self.a, self.b
            if a == b:
                return a ** p
            return (b ** (p + 1) - a ** (p + 1)) / ((p + 1) * (b - a))
        return float(np.exp(special.betaln(self.a + p, self.b) - special.betaln(self.a, self.b)))

    @property
    def sup(self) -> float:
        return float(self.a) if self.kind == "constant" else (float(self.b) if self.kind == "uniform" else 1.0)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True, eq=False)
class BlockModelSpec:
    """Parameters of a DCSBM (``K_prime is None``) or bipartite DCScBM.

    Community memberships are drawn from ``psi`` unless ``sizes`` is given,
    in which case the first ``sizes[0]`` nodes form community 0 and so on.
    """

    B: np.ndarray
    n: int
    psi: Optional[np.ndarray] = None
    sizes: Optional[tuple] = None
    rho_law: RhoLaw = field(default_factory=RhoLaw)
    n_prime: Optional[int] = None
    psi_prime: Optional[np.ndarray] = None
    sizes_prime: Optional[tuple] = None
    rho_law_prime: Optional[RhoLaw] = None
    mu: Optional[np.ndarray] = None
    mu_prime: Optional[np.ndarray] = None
    seed: Optional[int] = None
    require_psd: bool = False

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        object.__setattr__(self, "B", B)
        if np.any(B < 0) or np.any(B > 1):
            raise ValueError("B entries must lie in [0, 1]")
        if self.bipartite:
            if self.n_prime is None:
                raise ValueError("bipartite spec needs n_prime")
        elif B.shape[0] != B.shape[1]:
            raise ValueError("undirected spec needs a square B")
        elif not np.allclose(B, B.T):
            raise ValueError("undirected spec needs a symmetric B")
        if self.require_psd and not self.bipartite and np.linalg.eigvalsh(B).min() < -1e-12:
            raise ValueError("B is not positive semidefinite")
        _check_allocation(self.psi, self.sizes, self.n, B.shape[0])
        if self.bipartite:
            _check_allocation(self.psi_prime, self.sizes_prime, self.n_prime, B.shape[1])

    @property
    def bipartite(self) -> bool:
        return self.B.shape[0] != self.B.shape[1] or self.n_prime is not None

    @property
    def K(self) -> int:
        return self.B.shape[0]

    @property
    def K_prime(self) -> Optional[int]:
        return self.B.shape[1] if self.bipartite else None

    def to_dict(self) -> dict:
        out = {"B": self.B.tolist(), "n": self.n, "rho_law": self.rho_law.to_dict(),
               "seed": self.seed}
        for name in ("psi", "psi_prime", "mu", "mu_prime"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        for name in ("sizes", "sizes_prime", "n_prime"):
            val = getattr(self, name)
            if val is not None:
                out[name] = list(val) if isinstance(val, tuple) else val
        if self.rho_law_prime is not None:
            out["rho_law_prime"] = self.rho_law_prime.to_dict()
        return out

    @classmethod
    def from_dict(cls, cfg: dict) -> "BlockModelSpec":
        cfg = dict(cfg)
        for key in ("rho_law", "rho_law_prime"):
            if key in cfg and isinstance(cfg[key], dict):
                cfg[key] = RhoLaw(**cfg[key])
        for key in ("sizes", "sizes_prime"):
            if key in cfg and cfg[key] is not None:
                cfg[key] = tuple(int(s) for s in cfg[key])
        return cls(**cfg)


def _check_allocation(psi, sizes, n, K):
    if sizes is not None:
        if len(sizes) != K or sum(sizes) != n or min(sizes) < 0:
            raise ValueError(f"sizes must be {K} non-negative counts summing to {n}")
    elif psi is not None:
        psi = np.asarray(psi, dtype=float)
        if psi.size != K or np.any(psi < 0) or not np.isclose(psi.sum(), 1.0):
            raise ValueError("psi must be a probability vector over the communities")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    z: np.ndarray
    rho: np.ndarray
    z_prime: Optional[np.ndarray] = None
    rho_prime: Optional[np.ndarray] = None
    latent_mu: Optional[np.ndarray] = None
    latent_mu_prime: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        out = {"z": self.z.tolist(), "rho": self.rho.tolist()}
        for name in ("z_prime", "rho_prime", "latent_mu", "latent_mu_prime"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        return out


def equal_sizes(n: int, K: int) -> tuple:
    """Split ``n`` nodes into ``K`` blocks whose sizes differ by at most one."""
    base, extra = divmod(n, K)
    return tuple(base + (1 if k < extra else 0) for k in range(K))


def _labels(rng, n, psi, sizes, K):
    if sizes is not None:
        return np.repeat(np.arange(K), sizes)
    p = np.full(K, 1.0 / K) if psi is None else np.asarray(psi, dtype=float)
    return rng.choice(K, size=n, p=p)


def _bernoulli_edges(rng, row_p, col_p, B, z_row, z_col, upper: bool):
    """Draw ``A_ij ~ Bernoulli(row_p[i] * col_p[j] * B[z_i, z_j])`` in row chunks."""
    n_rows, n_cols = row_p.size, col_p.size
    chunk = max(1, _CHUNK_CELLS // max(n_cols, 1))
    rows_out, cols_out = [], []
    for start in range(0, n_rows, chunk):
        stop = min(start + chunk, n_rows)
        prob = row_p[start:stop, None] * col_p[None, :] * B[z_row[start:stop]][:, z_col]
        hits = rng.random(prob.shape) < prob
        if upper:
            hits &= np.arange(n_cols)[None, :] > np.arange(start, stop)[:, None]
        r, c = np.nonzero(hits)
        rows_out.append(r + start)
        cols_out.append(c)
    rows = np.concatenate(rows_out) if rows_out else np.empty(0, np.int64)
    cols = np.concatenate(cols_out) if cols_out else np.empty(0, np.int64)
    return rows, cols


def sample_dcsbm(spec: BlockModelSpec, seed=None):
    """Sample an undirected DCSBM graph.

    ``A_ij ~ Bernoulli(rho_i rho_j B[z_i, z_j])`` independently for ``i < j``,
    mirrored, with an empty diagonal.
    """
    if spec.bipartite:
        raise ValueError("use sample_dcscbm for bipartite specs")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    z = _labels(rng, spec.n, spec.psi, spec.sizes, spec.K)
    rho = spec.rho_law.sample(rng, spec.n)
    r, c = _bernoulli_edges(rng, rho, rho, spec.B, z, z, upper=True)
    g = SparseGraph.from_edges(spec.n, spec.n, np.column_stack([r, c]), "undirected")
    return g, GroundTruth(z, rho, latent_mu=spec.mu)


def sample_dcscbm(spec: BlockModelSpec, seed=None):
    """Sample a bipartite degree-corrected co-blockmodel.

    ``A_ij ~ Bernoulli(rho_i rho'_j B[z_i, z'_j])`` for every source ``i``
    and destination ``j``.
    """
    if not spec.bipartite:
        raise ValueError("use sample_dcsbm for undirected specs")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    K, Kp = spec.B.shape
    z = _labels(rng, spec.n, spec.psi, spec.sizes, K)
    zp = _labels(rng, spec.n_prime, spec.psi_prime, spec.sizes_prime, Kp)
    rho = spec.rho_law.sample(rng, spec.n)
    law_p = spec.rho_law_prime if spec.rho_law_prime is not None else spec.rho_law
    rhop = law_p.sample(rng, spec.n_prime)
    r, c = _bernoulli_edges(rng, rho, rhop, spec.B, z, zp, upper=False)
    g = SparseGraph.from_edges(spec.n, spec.n_prime, np.column_stack([r, c]), "bipartite")
    return g, GroundTruth(z, rho, zp, rhop, spec.mu, spec.mu_prime)


def resample_adjacency(B, z, rho, seed=None) -> SparseGraph:
    """Fresh undirected adjacency for fixed labels ``z`` and corrections ``rho``."""
    rng = np.random.default_rng(seed)
    B = np.asarray(B, dtype=float)
    z = np.asarray(z)
    rho = np.asarray(rho, dtype=float)
    r, c = _bernoulli_edges(rng, rho, rho, B, z, z, upper=True)
    return SparseGraph.from_edges(z.size, z.size, np.column_stack([r, c]), "undirected")


def sample(spec: BlockModelSpec, seed=None):
    return sample_dcscbm(spec, seed) if spec.bipartite else sample_dcsbm(spec, seed)


PROTOCOLS = ("table1a-K2", "table1a-K3", "table1b")


def protocol_spec(which: str, rng: np.random.Generator, n=None, n_prime=None) -> BlockModelSpec:
    """Draw one replication spec of a named simulation protocol.

    The undirected protocols draw the upper triangle of ``B`` from
    ``Uniform(0, 1)`` and mirror it; the bipartite one draws a full
    ``2 x 3`` matrix. Degree corrections follow ``Beta(2, 1)`` and
    communities have equal sizes.
    """
    law = RhoLaw.beta(2.0, 1.0)
    if which in ("table1a-K2", "table1a-K3"):
        K = 2 if which.endswith("K2") else 3
        n = 1000 if n is None else n
        upper = np.triu(rng.uniform(0.0, 1.0, (K, K)))
        B = upper + np.triu(upper, 1).T
        return BlockModelSpec(B, n, sizes=equal_sizes(n, K), rho_law=law)
    if which == "table1b":
        n = 1000 if n is None else n
        n_prime = 1500 if n_prime is None else n_prime
        B = rng.uniform(0.0, 1.0, (2, 3))
        return BlockModelSpec(B, n, sizes=equal_sizes(n, 2), rho_law=law, n_prime=n_prime,
                              sizes_prime=equal_sizes(n_prime, 3), rho_law_prime=law)
    raise ValueError(f"unknown protocol {which!r}; expected one of {PROTOCOLS}")


def sample_table_protocol(which: str, N: int, seed=0, n=None, n_prime=None) -> Iterator:
    """Yield ``(spec, graph, truth)`` for ``N`` independent replications.

    Every replication gets its own generator spawned from ``seed``, so
    replication ``r`` is reproducible on its own.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    for child in np.random.SeedSequence(seed).spawn(N):
        rng = np.random.default_rng(child)
        spec = protocol_spec(which, rng, n, n_prime)
        g, truth = sample(spec, seed=rng)
        yield spec, g, truth


def section52_spec(n=2000) -> BlockModelSpec:
    """Three-community DCSBM with ``B = mu mu^T`` of full rank 3 and uniform corrections."""
    mu = np.array([[0.7, 0.4, 0.1], [0.1, 0.1, 0.5], [0.4, 0.8, -0.1]])
    B = np.array([[0.66, 0.16, 0.59], [0.16, 0.27, 0.07], [0.59, 0.07, 0.81]])
    return BlockModelSpec(B, n, sizes=equal_sizes(n, 3), rho_law=RhoLaw.uniform(0, 1), mu=mu)


def two_ray_spec(n=1000) -> BlockModelSpec:
    B = np.array([[0.1, 0.05], [0.05, 0.15]])
    return BlockModelSpec(B, n, sizes=equal_sizes(n, 2), rho_law=RhoLaw.beta(2, 1))


def figure1b_spec(corrected=True) -> BlockModelSpec:
    """439 x 60635 bipartite four-community spec used for degree histograms.

    ``corrected=True`` gives the DCScBM with block matrix ``2B`` and
    ``Beta(3, 5)`` corrections; otherwise the ScBM with ``B / 2``.
    """
    B = np.full((4, 4), 0.1)
    np.fill_diagonal(B, [0.35, 0.25, 0.15, 0.1])
    n, n_prime = 439, 60635
    if corrected:
        law = RhoLaw.beta(3, 5)
        B = 2 * B
    else:
        law = RhoLaw.constant(1.0)
        B = B / 2
    return BlockModelSpec(B, n, sizes=equal_sizes(n, 4), rho_law=law, n_prime=n_prime,
                          sizes_prime=equal_sizes(n_prime, 4), rho_law_prime=law)


def clt_spec(n=1000) -> BlockModelSpec:
    """Two equally likely rays ``mu_1 = (1/4, 3/4)``, ``mu_2 = (3/4, 1/4)``, uniform corrections."""
    mu = np.array([[0.25, 0.75], [0.75, 0.25]])
    return BlockModelSpec(mu @ mu.T, n, psi=(0.5, 0.5), rho_law=RhoLaw.uniform(0, 1), mu=mu)


def rho_sweep_spec(r, n=500) -> BlockModelSpec:
    """``B = [[0.5, r], [r, 0.35]]`` with equal sizes and uniform corrections."""
    B = np.array([[0.5, r], [r, 0.35]])
    return BlockModelSpec(B, n, sizes=equal_sizes(n, 2), rho_law=RhoLaw.uniform(0, 1))


def block_density_stats(g: SparseGraph, z, z_prime=None, K=None, K_prime=None):
    """Observed edge densities per block pair with binomial standard errors."""
    z = np.asarray(z)
    zp = z if z_prime is None else np.asarray(z_prime)
    K = int(z.max()) + 1 if K is None else K
    Kp = int(zp.max()) + 1 if K_prime is None else K_prime
    counts = np.zeros((K, Kp))
    np.add.at(counts, (z[g.rows], zp[g.cols]), 1.0)
    sizes = np.bincount(z, minlength=K).astype(float)
    sizes_p = np.bincount(zp, minlength=Kp).astype(float)
    pairs = np.outer(sizes, sizes_p)
    if g.mode == "undirected":
        pairs -= np.diag(sizes)  # ordered pairs (i, j), i != j
    density = np.divide(counts, pairs, out=np.zeros_like(counts), where=pairs > 0)
    return density, pairs
