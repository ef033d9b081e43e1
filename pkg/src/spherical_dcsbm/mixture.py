"""Constrained Gaussian mixture on spherical coordinates, EM and BIC selection.

The first ``d`` columns of each observation follow a full-covariance
Gaussian component; the remaining columns are independent Gaussian noise
around a fixed centre (``pi`` for angles, ``0`` for Cartesian embeddings)
with component-specific variances. The noise centre is never estimated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from . import _em_kernel
from .embed import Embedding
from .exceptions import (ComponentCollapseError, DensityError, NumericalError,
                         SelectionError)
from .spherical import SphericalEmbedding

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
COV_FLOOR = 1e-6
VAR_FLOOR = 1e-8
EMPTY_TOL = 1e-8
UNASSIGNED = -1
# the warm-start GMM only seeds the constrained EM, so it runs loose
WARM_TOL = 1e-3
WARM_MAX_ITER = 100


@dataclass(eq=False)
class MixtureParams:
    """Parameters of a ``K``-component constrained mixture.

    ``noise_mean`` is the fixed centre of the last ``m - d`` columns, not a
    free parameter.
    """

    d: int
    K: int
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    noise_vars: np.ndarray
    noise_mean: float = np.pi

    def validate(self):
        if not np.isclose(self.weights.sum(), 1.0) or np.any(self.weights < 0):
            raise ValueError("weights must lie on the simplex")
        if self.means.shape != (self.K, self.d) or self.covs.shape != (self.K, self.d, self.d):
            raise ValueError("means/covs have inconsistent shapes")
        if np.any(self.noise_vars <= 0):
            raise ValueError("noise variances must be positive")

    def to_dict(self) -> dict:
        return {"d": self.d, "K": self.K, "weights": self.weights.tolist(),
                "means": self.means.tolist(), "covs": self.covs.tolist(),
                "noise_vars": self.noise_vars.tolist(), "noise_mean": self.noise_mean}


@dataclass(eq=False)
class FitResult:
    params: MixtureParams
    log_likelihood: float
    responsibilities: np.ndarray
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)
    reseeds: list = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.responsibilities, axis=1)


def _as_matrix(theta) -> np.ndarray:
    if isinstance(theta, SphericalEmbedding):
        return theta.angles
    if isinstance(theta, Embedding):
        return theta.positions
    return np.atleast_2d(np.asarray(theta, dtype=float))


def _noise_residuals(Y, d, noise_mean):
    return (Y[:, d:] - noise_mean) ** 2


def _component_log_density(X, R, params: MixtureParams) -> np.ndarray:
    n = X.shape[0]
    out = np.zeros((n, params.K))
    d = params.d
    if d:
        try:
            chol = np.linalg.cholesky(params.covs)
        except np.linalg.LinAlgError as exc:
            raise DensityError("covariance matrix is not positive definite") from exc
        diff = X[:, None, :] - params.means[None, :, :]
        z = np.einsum("kab,nkb->nka", np.linalg.inv(chol), diff)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        out -= 0.5 * (d * LOG_2PI + logdet + np.einsum("nka,nka->nk", z, z))
    q = R.shape[1]
    if q:
        if np.any(params.noise_vars <= 0):
            raise DensityError("noise variances must be positive")
        out -= 0.5 * (q * LOG_2PI + np.log(params.noise_vars).sum(axis=1))
        out -= 0.5 * R @ (1.0 / params.noise_vars).T
    return out


def component_log_density(theta, params: MixtureParams) -> np.ndarray:
    """``log phi_k(y_i)`` for every row ``i`` and component ``k`` (no weights)."""
    Y = _as_matrix(theta)
    if Y.shape[1] < params.d:
        raise ValueError("data has fewer columns than the structured dimension")
    return _component_log_density(Y[:, :params.d], _noise_residuals(Y, params.d, params.noise_mean),
                                  params)


def log_likelihood(theta, params: MixtureParams) -> float:
    """Marginal log-likelihood of the constrained mixture, via log-sum-exp."""
    with np.errstate(divide="ignore"):
        logw = np.log(params.weights)
    return float(logsumexp(component_log_density(theta, params) + logw, axis=1).sum())


def _floor_covariances(covs):
    w, v = np.linalg.eigh(covs)
    if np.all(w >= COV_FLOOR):
        return covs
    w = np.maximum(w, COV_FLOOR)
    out = np.einsum("kab,kb,kcb->kac", v, w, v)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def _m_step(X, R, resp, nk, noise_mean):
    n, d = X.shape
    K = resp.shape[1]
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    if d:
        diff = X[:, None, :] - means[None, :, :]
        covs = np.einsum("nka,nkb->kab", diff * resp[:, :, None], diff) / nk[:, None, None]
        covs = _floor_covariances(0.5 * (covs + np.swapaxes(covs, 1, 2)))
    else:
        covs = np.zeros((K, 0, 0))
    noise_vars = np.maximum((resp.T @ R) / nk[:, None], VAR_FLOOR)
    return MixtureParams(d, K, weights, means, covs, noise_vars, noise_mean)


def _global_noise_vars(R, K):
    return np.tile(np.maximum(R.mean(axis=0), VAR_FLOOR), (K, 1))


def _run_em(X, R, params: MixtureParams, max_iter, tol) -> FitResult:
    X = np.ascontiguousarray(X, dtype=float)
    R = np.ascontiguousarray(R, dtype=float)
    K, d = params.K, params.d
    weights = params.weights.astype(float).copy()
    means = np.ascontiguousarray(params.means, dtype=float).copy()
    covs = np.ascontiguousarray(params.covs, dtype=float).copy()
    noise_vars = np.ascontiguousarray(params.noise_vars, dtype=float).copy()
    if d:
        glob_cov = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
        glob_cov = _floor_covariances(glob_cov[None])[0]
    else:
        glob_cov = np.zeros((0, 0))
    glob_var = np.maximum(R.mean(axis=0), VAR_FLOOR) if R.shape[1] else np.zeros(0)
    history = np.empty(max_iter + 2)
    try:
        status, it, n_hist, reseed_it, ll, resp = _em_kernel.em_loop(
            X, R, weights, means, covs, noise_vars, int(max_iter), float(tol),
            glob_cov, glob_var, COV_FLOOR, VAR_FLOOR, EMPTY_TOL, history)
    except np.linalg.LinAlgError as exc:
        raise DensityError("covariance lost positive definiteness during EM") from exc
    if status == _em_kernel.STATUS_NONFINITE:
        raise NumericalError("non-finite log-likelihood", iteration=int(it))
    if status == _em_kernel.STATUS_COLLAPSE:
        raise ComponentCollapseError(f"component collapsed again at iteration {it}")
    out = MixtureParams(d, K, weights, means, covs, noise_vars, params.noise_mean)
    reseeds = [] if reseed_it < 0 else [int(reseed_it)]
    return FitResult(out, float(ll), resp, int(it), status == _em_kernel.STATUS_CONVERGED,
                     history[:n_hist].tolist(), reseeds)


def _hard_responsibilities(X, centers):
    dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((X.shape[0], centers.shape[0]))
    resp[np.arange(X.shape[0]), np.argmin(dist, axis=1)] = 1.0
    return resp


def _params_from_responsibilities(X, R, resp, noise_mean):
    nk = resp.sum(axis=0)
    if np.any(nk < EMPTY_TOL):
        # duplicate seeds leave a component without points; spread it thinly
        resp = resp + 1e-6
        resp /= resp.sum(axis=1, keepdims=True)
        nk = resp.sum(axis=0)
    return _m_step(X, R, resp, nk, noise_mean)


def fit_gmm(x, K, rng=None, max_iter=500, tol=1e-6, init=None) -> FitResult:
    """Plain full-covariance GMM on all columns of ``x``, seeded by k-means++."""
    X = _as_matrix(x)
    rng = np.random.default_rng(rng)
    R = np.empty((X.shape[0], 0))
    if init is None:
        centers, _ = kmeans_plusplus(X, K, random_state=int(rng.integers(2**31 - 1)))
        init = _params_from_responsibilities(X, R, _hard_responsibilities(X, centers), 0.0)
    return _run_em(X, R, init, max_iter, tol)


def fit_constrained_em(theta, d, K, init="kmeans++", max_iter=500, tol=1e-6, seed=None,
                       noise_mean=np.pi) -> FitResult:
    """Maximum-likelihood fit of the constrained mixture by EM.

    Parameters
    ----------
    theta : SphericalEmbedding, Embedding or array, shape (n, m)
    d : int
        Structured dimension, ``1 <= d <= m``.
    K : int
        Number of components.
    init : {"kmeans++"} or MixtureParams or ndarray
        ``"kmeans++"`` fits a GMM (loosely, see :data:`WARM_TOL`) to the first
        ``d`` columns from a k-means++ seeding and uses it for the structured block, with every noise
        variance set to the column mean squared deviation from
        ``noise_mean``. An ``(n, K)`` array is used as initial
        responsibilities.
    max_iter, tol : int, float
        Stop after ``max_iter`` M-steps or once the log-likelihood changes by
        less than ``tol``.
    seed : int or Generator, optional
    noise_mean : float
        Fixed centre of the noise columns.

    Raises
    ------
    ComponentCollapseError
        A component emptied a second time after being re-seeded once.
    NumericalError
        The log-likelihood became non-finite.
    """
    Y = _as_matrix(theta)
    n, m = Y.shape
    if not 1 <= d <= m:
        raise ValueError(f"d must be in [1, {m}], got {d}")
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = Y[:, :d]
    R = _noise_residuals(Y, d, noise_mean)
    if isinstance(init, MixtureParams):
        params = init
    elif isinstance(init, str):
        if init != "kmeans++":
            raise ValueError(f"unknown init policy {init!r}")
        warm = fit_gmm(X, K, rng=seed, max_iter=min(max_iter, WARM_MAX_ITER),
                       tol=max(tol, WARM_TOL))
        p = warm.params
        params = MixtureParams(d, K, p.weights, p.means, p.covs, _global_noise_vars(R, K),
                               noise_mean)
    else:
        resp = np.asarray(init, dtype=float)
        params = _params_from_responsibilities(X, R, resp, noise_mean)
    return _run_em(X, R, params, max_iter, tol)


def fit_reference_gmm(x, d, K, **kwargs) -> FitResult:
    """Same mixture on Cartesian coordinates: noise columns centred at zero."""
    kwargs.setdefault("noise_mean", 0.0)
    return fit_constrained_em(x, d, K, **kwargs)


def n_parameters(d: int, m: int) -> float:
    """Free parameters per component: covariance, mean, noise variances, weight."""
    return d * d / 2 + d / 2 + m + 1


def bic(theta, fit: FitResult, d: int, K: int) -> float:
    """``-2 log L + K log(n) (d^2/2 + d/2 + m + 1)``, ``m`` the column count of ``theta``."""
    n, m = _as_matrix(theta).shape
    return -2.0 * fit.log_likelihood + K * np.log(n) * n_parameters(d, m)


@dataclass(eq=False)
class SelectionResult:
    """Outcome of the ``(d, K)`` grid search.

    ``bic_surface[d - 1, K - 1]`` holds the smallest BIC found at that cell
    (``inf`` where every restart failed). ``labels`` has one entry per node
    of the source embedding with :data:`UNASSIGNED` for excluded nodes.
    """

    bic_surface: np.ndarray
    d_hat: int
    K_hat: int
    labels: Optional[np.ndarray]
    final_fit: Optional[FitResult]
    loglik_surface: np.ndarray
    n_effective: int
    n_cols: int
    noise_mean: float = np.pi
    cell_fits: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        surface = [[None if not np.isfinite(v) else float(v) for v in row]
                   for row in self.bic_surface]
        out = {"d_hat": self.d_hat, "K_hat": self.K_hat, "bic_surface": surface,
               "n_effective": self.n_effective, "n_cols": self.n_cols,
               "noise_mean": self.noise_mean}
        if self.final_fit is not None:
            out["final_params"] = self.final_fit.params.to_dict()
            out["final_log_likelihood"] = self.final_fit.log_likelihood
        return out


def _cell_seed(seed, d, K):
    return np.random.SeedSequence([0 if seed is None else int(seed), int(d), int(K)])


def _fit_cell(Y, d, K, restarts, seed, max_iter, tol, noise_mean):
    best = None
    children = _cell_seed(seed, d, K).spawn(restarts)
    for child in children:
        try:
            fit = fit_constrained_em(Y, d, K, max_iter=max_iter, tol=tol,
                                     seed=np.random.default_rng(child), noise_mean=noise_mean)
        except (ComponentCollapseError, NumericalError, DensityError) as exc:
            logger.debug("fit failed at d=%d K=%d: %s", d, K, exc)
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    return best


def grid_bic(theta, K_star, restarts=10, d_max=None, seed=0, max_iter=500, tol=1e-6,
             noise_mean=np.pi, n_jobs=1, keep_fits=False):
    """BIC at every ``(d, K)`` with ``d = 1..d_max`` and ``K = 1..K_star``.

    Returns ``(bic_surface, loglik_surface, fits)``.
    """
    Y = _as_matrix(theta)
    n, m = Y.shape
    d_max = m if d_max is None else min(d_max, m)
    K_star = min(K_star, n)
    cells = [(d, K) for d in range(1, d_max + 1) for K in range(1, K_star + 1)]
    if n_jobs == 1:
        fits = [_fit_cell(Y, d, K, restarts, seed, max_iter, tol, noise_mean) for d, K in cells]
    else:
        from joblib import Parallel, delayed
        fits = Parallel(n_jobs=n_jobs)(
            delayed(_fit_cell)(Y, d, K, restarts, seed, max_iter, tol, noise_mean)
            for d, K in cells)
    surface = np.full((d_max, K_star), np.inf)
    loglik = np.full((d_max, K_star), -np.inf)
    kept = {}
    for (d, K), fit in zip(cells, fits):
        if fit is None:
            continue
        surface[d - 1, K - 1] = bic(Y, fit, d, K)
        loglik[d - 1, K - 1] = fit.log_likelihood
        if keep_fits:
            kept[(d, K)] = fit
    return surface, loglik, kept


def argmin_surface(surface: np.ndarray):
    """1-based ``(d, K)`` of the smallest finite entry, preferring small ``d`` then ``K``."""
    finite = np.isfinite(surface)
    if not finite.any():
        raise SelectionError("no grid cell produced a finite BIC")
    flat = np.where(finite, surface, np.inf).ravel()
    idx = int(np.argmin(flat))  # row-major: first hit has the smallest d, then K
    d, K = np.unravel_index(idx, surface.shape)
    return int(d) + 1, int(K) + 1


def select_model(theta, K_star, restarts=10, d_max=None, seed=0, max_iter=500, tol=1e-6,
                 noise_mean=np.pi, n_jobs=1, assign=True, keep_fits=False) -> SelectionResult:
    """Grid search for ``(d, K)`` minimising BIC, then community assignment.

    Every cell keeps the best of ``restarts`` k-means++-seeded EM runs.
    """
    Y = _as_matrix(theta)
    if Y.shape[0] == 0:
        raise SelectionError("no observations to cluster")
    surface, loglik, fits = grid_bic(Y, K_star, restarts, d_max, seed, max_iter, tol,
                                     noise_mean, n_jobs, keep_fits)
    d_hat, K_hat = argmin_surface(surface)
    labels, final = None, None
    if assign:
        labels, final = assign_communities(theta, d_hat, K_hat, restarts, seed, max_iter, tol)
    return SelectionResult(surface, d_hat, K_hat, labels, final, loglik, Y.shape[0], Y.shape[1],
                           noise_mean, fits)


def assign_communities(theta, d_hat, K_hat, restarts=10, seed=0, max_iter=500, tol=1e-6):
    """Labels from a fresh ``K_hat``-component GMM on the first ``d_hat`` columns.

    Each row goes to the component maximising ``psi_k phi(y_{:d}; mean_k, cov_k)``
    (lowest index on ties). Returns ``(labels, fit)``; when ``theta`` is a
    :class:`SphericalEmbedding`, ``labels`` covers every source node and
    excluded ones are :data:`UNASSIGNED`.
    """
    Y = _as_matrix(theta)
    X = Y[:, :d_hat]
    best = None
    for child in np.random.SeedSequence([0 if seed is None else int(seed), 0, int(K_hat),
                                         int(d_hat)]).spawn(max(restarts, 1)):
        try:
            fit = fit_gmm(X, K_hat, rng=np.random.default_rng(child), max_iter=max_iter, tol=tol)
        except (ComponentCollapseError, NumericalError, DensityError):
            continue
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    if best is None:
        raise SelectionError(f"every GMM fit failed at d={d_hat}, K={K_hat}")
    with np.errstate(divide="ignore"):
        score = _component_log_density(X, np.empty((X.shape[0], 0)), best.params) + \
            np.log(best.params.weights)
    labels = np.argmax(score, axis=1)
    if isinstance(theta, SphericalEmbedding):
        full = np.full(theta.n_nodes, UNASSIGNED, dtype=np.int64)
        full[theta.kept] = labels
        labels = full
    return labels, best


def select_reference_model(x, K_star, **kwargs) -> SelectionResult:
    """Grid search for the Cartesian comparator (noise columns centred at zero)."""
    kwargs.setdefault("noise_mean", 0.0)
    return select_model(x, K_star, **kwargs)
