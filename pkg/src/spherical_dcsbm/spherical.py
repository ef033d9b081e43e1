"""Cartesian to spherical coordinates and asymptotic covariance of ASE rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed import Embedding
from .exceptions import InvertibilityError, SingularGradientError, UndefinedAngleError
from .simulate import RhoLaw

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class SphericalEmbedding:
    """Angles of the kept rows of an embedding.

    Attributes
    ----------
    angles : ndarray, shape (n_kept, m - 1)
        Entries in ``[0, 2*pi)``.
    source_dim : int
        Column count ``m`` of the Cartesian embedding.
    kept : ndarray of int
        Row indices (into the source embedding) that ``angles`` describes.
    n_nodes : int
        Row count of the source embedding.
    """

    angles: np.ndarray
    source_dim: int
    kept: np.ndarray
    n_nodes: int

    @property
    def excluded(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.kept] = False
        return np.flatnonzero(mask)

    @property
    def n(self) -> int:
        return self.angles.shape[0]

    @property
    def n_cols(self) -> int:
        return self.angles.shape[1]


def _reduce(angles: np.ndarray) -> np.ndarray:
    out = np.mod(angles, TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


def to_spherical(x) -> np.ndarray:
    """Map vectors in ``R^m`` to ``m - 1`` angles.

    ``theta_1`` is ``arccos(x_2 / ||x_{:2}||)``, reflected to
    ``2*pi - arccos(...)`` when ``x_1 < 0``; for ``j >= 2``,
    ``theta_j = 2 * arccos(x_{j+1} / ||x_{:j+1}||)``. Accepts one vector or a
    2-d array of row vectors.

    Raises
    ------
    UndefinedAngleError
        If ``x_1 = x_2 = 0`` for some row.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n, m = x.shape
    if m < 2:
        raise ValueError("need at least two coordinates")
    partial = np.sqrt(np.cumsum(x * x, axis=1))
    if np.any(partial[:, 1] == 0):
        bad = int(np.flatnonzero(partial[:, 1] == 0)[0])
        raise UndefinedAngleError(f"first two coordinates of row {bad} are both zero")
    theta = np.empty((n, m - 1))
    cos1 = np.clip(x[:, 1] / partial[:, 1], -1.0, 1.0)
    theta[:, 0] = np.arccos(cos1)
    neg = x[:, 0] < 0
    theta[neg, 0] = TWO_PI - theta[neg, 0]
    if m > 2:
        norms = partial[:, 2:]
        # partial norms are non-decreasing, so these are positive after column 2
        ratio = np.clip(x[:, 2:] / norms, -1.0, 1.0)
        theta[:, 1:] = 2.0 * np.arccos(ratio)
    theta = _reduce(theta)
    return theta[0] if single else theta


def transform_embedding(e: Embedding, exclude=None, atol: float = 0.0) -> SphericalEmbedding:
    """Row-wise :func:`to_spherical` of an embedding.

    Rows flagged in ``e.isolated`` or in ``exclude`` are dropped and
    recorded. Rows whose first two coordinates have norm ``<= atol`` are
    dropped as well; with the default ``atol=0`` an unflagged row of that
    kind raises :class:`UndefinedAngleError`.
    """
    if e.m < 2:
        raise ValueError("embedding needs at least two columns")
    drop = np.zeros(e.n, dtype=bool)
    if e.isolated is not None:
        drop |= np.asarray(e.isolated, bool)
    if exclude is not None:
        ex = np.asarray(exclude)
        if ex.dtype == bool:
            drop |= ex
        else:
            drop[ex] = True
    if atol > 0:
        drop |= np.hypot(e.positions[:, 0], e.positions[:, 1]) <= atol
    kept = np.flatnonzero(~drop)
    return SphericalEmbedding(to_spherical(e.positions[kept]) if kept.size else
                              np.empty((0, e.m - 1)), e.m, kept, e.n)


def theta_gradient_2d(x) -> np.ndarray:
    """Gradient of the 2-d angle as printed in the asymptotic appendix.

    Returns ``(0, -2 sign(x_1) sqrt(1 - x_2^2/||x||^2) / ||x||)``. This does
    not agree with differentiating the angle map itself; see
    :func:`analytic_gradient_eq2`.
    """
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[0], x[1])
    if r == 0 or abs(x[1]) >= r:
        raise SingularGradientError("gradient undefined when |x_2| = ||x||")
    g2 = -2.0 * np.sign(x[0]) * np.sqrt(1.0 - x[1] ** 2 / r ** 2) / r
    return np.array([0.0, g2])


def analytic_gradient_eq2(x) -> np.ndarray:
    """Exact gradient of ``theta_1`` as a function of ``(x_1, x_2)``.

    On both branches this is ``(x_2, -x_1) / ||x||^2``.
    """
    x = np.asarray(x, dtype=float)
    r2 = x[0] ** 2 + x[1] ** 2
    if r2 == 0 or x[1] ** 2 >= r2:
        raise SingularGradientError("gradient undefined when |x_2| = ||x||")
    return np.array([x[1], -x[0]]) / r2


def gradient_discrepancy_report(points, step: float = 1e-6) -> dict:
    """Compare both analytic angle gradients with central differences.

    Returns a JSON-serialisable dict with the maximum absolute error of
    each variant and the name of the variant that agrees to ``1e-4``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rows = []
    for x in pts:
        fd = np.empty(2)
        for j in range(2):
            h = np.zeros(2)
            h[j] = step
            fd[j] = (to_spherical(x + h)[0] - to_spherical(x - h)[0]) / (2 * step)
        direct = analytic_gradient_eq2(x)
        printed = theta_gradient_2d(x)
        rows.append({"x": x.tolist(), "finite_difference": fd.tolist(),
                     "direct": direct.tolist(), "appendix": printed.tolist(),
                     "err_direct": float(np.max(np.abs(direct - fd))),
                     "err_appendix": float(np.max(np.abs(printed - fd)))})
    err_direct = max(r["err_direct"] for r in rows)
    err_printed = max(r["err_appendix"] for r in rows)
    chosen = "direct" if err_direct <= err_printed else "appendix"
    return {
        "n_points": len(rows),
        "step": step,
        "max_err_direct": err_direct,
        "max_err_appendix": err_printed,
        "chosen_variant": chosen,
        "chosen_within_1e-4": min(err_direct, err_printed) < 1e-4,
        "points": rows,
    }


@dataclass(frozen=True, eq=False)
class AsymptoticCovariance:
    sigma: np.ndarray
    community: int
    rho: float


def asymptotic_covariance(mu, psi, rho_law: RhoLaw, k: int, rho: float,
                          n_mc=None, seed=0) -> AsymptoticCovariance:
    """Limiting covariance of the ASE estimate of ``rho * mu[k]``.

    Computes ``D^{-1} E[x'xi (1 - x'xi) xi xi'] D^{-1}`` with ``x = rho*mu_k``,
    ``xi = rho' * mu_Z``, ``Z ~ psi``, ``rho' ~ rho_law`` and
    ``D = E[xi xi']``. With ``n_mc=None`` the expectation is exact, using the
    moments ``E[rho'^p]`` of ``rho_law``; otherwise it is a Monte Carlo
    average over ``n_mc`` draws.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    psi = np.asarray(psi, dtype=float)
    if mu.shape[0] != psi.size:
        raise ValueError("mu and psi disagree on the number of communities")
    if np.any(psi < 0) or not np.isclose(psi.sum(), 1.0):
        raise ValueError("psi must be a probability vector")
    x = rho * mu[k]
    if n_mc is None:
        outer = np.einsum("ka,kb->kab", mu, mu)
        m2, m3, m4 = (rho_law.moment(p) for p in (2, 3, 4))
        delta = np.einsum("k,kab->ab", psi, outer) * m2
        b = mu @ x
        inner = np.einsum("k,kab->ab", psi * (b * m3 - b * b * m4), outer)
    else:
        rng = np.random.default_rng(seed)
        z = rng.choice(psi.size, size=int(n_mc), p=psi)
        xi = rho_law.sample(rng, int(n_mc))[:, None] * mu[z]
        delta = xi.T @ xi / n_mc
        p = xi @ x
        inner = (xi * (p * (1 - p))[:, None]).T @ xi / n_mc
    if np.linalg.cond(delta) > 1e12:
        raise InvertibilityError("second-moment matrix is singular")
    dinv = np.linalg.inv(delta)
    sigma = dinv @ inner @ dinv
    sigma = 0.5 * (sigma + sigma.T)
    return AsymptoticCovariance(sigma, int(k), float(rho))
