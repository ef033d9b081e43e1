"""Compiled EM loop for the constrained mixture.

Only plain arrays cross this boundary; the Python wrapper in
:mod:`spherical_dcsbm.mixture` turns status codes into exceptions.
"""

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)
# fastmath without the no-nan / no-inf assumptions: -inf log weights must survive
FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_COLLAPSE = 2
STATUS_NONFINITE = 3


@njit(cache=True, fastmath=FAST)
def log_joint(X, R, weights, means, chol, noise_vars, out):
    """``out[i, k] = log w_k + log phi_k(x_i) + log noise_k(r_i)``."""
    n, d = X.shape
    K = weights.size
    q = R.shape[1]
    tmp = np.empty(d)
    inv = np.empty(q)
    for k in range(K):
        logdet = 0.0
        for a in range(d):
            logdet += 2.0 * np.log(chol[k, a, a])
        for j in range(q):
            logdet += np.log(noise_vars[k, j])
        if weights[k] > 0:
            base = np.log(weights[k]) - 0.5 * ((d + q) * LOG_2PI + logdet)
        else:
            base = -np.inf
        for j in range(q):
            inv[j] = 1.0 / noise_vars[k, j]
        for i in range(n):
            maha = 0.0
            for a in range(d):
                s = X[i, a] - means[k, a]
                for b in range(a):
                    s -= chol[k, a, b] * tmp[b]
                tmp[a] = s / chol[k, a, a]
                maha += tmp[a] * tmp[a]
            for j in range(q):
                maha += R[i, j] * inv[j]
            out[i, k] = base - 0.5 * maha


@njit(cache=True)
def normalise(logp, resp, point_ll):
    n, K = logp.shape
    total = 0.0
    for i in range(n):
        top = -np.inf
        for k in range(K):
            if logp[i, k] > top:
                top = logp[i, k]
        s = 0.0
        for k in range(K):
            resp[i, k] = np.exp(logp[i, k] - top)
            s += resp[i, k]
        for k in range(K):
            resp[i, k] /= s
        point_ll[i] = top + np.log(s)
        total += point_ll[i]
    return total


@njit(cache=True)
def _floor_eigenvalues(cov, cov_floor):
    d = cov.shape[0]
    if d == 1:
        if cov[0, 0] < cov_floor:
            cov[0, 0] = cov_floor
        return
    w, v = np.linalg.eigh(cov)
    if w[0] >= cov_floor:
        return
    for a in range(d):
        if w[a] < cov_floor:
            w[a] = cov_floor
    for a in range(d):
        for b in range(a + 1):
            s = 0.0
            for c in range(d):
                s += v[a, c] * w[c] * v[b, c]
            cov[a, b] = s
            cov[b, a] = s


@njit(cache=True)
def m_step(X, R, resp, weights, means, covs, noise_vars, cov_floor, var_floor, empty_tol):
    """In-place M-step. Returns the number of empty components (then nothing is updated)."""
    n, d = X.shape
    K = resp.shape[1]
    q = R.shape[1]
    nk = np.zeros(K)
    for i in range(n):
        for k in range(K):
            nk[k] += resp[i, k]
    n_empty = 0
    for k in range(K):
        if nk[k] < empty_tol:
            n_empty += 1
    if n_empty:
        return n_empty
    total = nk.sum()
    means[:, :] = 0.0
    covs[:, :, :] = 0.0
    noise_vars[:, :] = 0.0
    for i in range(n):
        for k in range(K):
            r = resp[i, k]
            for a in range(d):
                means[k, a] += r * X[i, a]
            for j in range(q):
                noise_vars[k, j] += r * R[i, j]
    for k in range(K):
        weights[k] = nk[k] / total
        for a in range(d):
            means[k, a] /= nk[k]
        for j in range(q):
            s = noise_vars[k, j] / nk[k]
            noise_vars[k, j] = s if s > var_floor else var_floor
    diff = np.empty(d)
    for i in range(n):
        for k in range(K):
            r = resp[i, k]
            for a in range(d):
                diff[a] = X[i, a] - means[k, a]
            for a in range(d):
                ra = r * diff[a]
                for b in range(a + 1):
                    covs[k, a, b] += ra * diff[b]
    for k in range(K):
        for a in range(d):
            for b in range(a + 1):
                covs[k, a, b] /= nk[k]
                covs[k, b, a] = covs[k, a, b]
        if d:
            _floor_eigenvalues(covs[k], cov_floor)
    return 0


@njit(cache=True)
def cholesky_all(covs, chol):
    K, d, _ = covs.shape
    for k in range(K):
        if d:
            chol[k] = np.linalg.cholesky(covs[k])


@njit(cache=True)
def em_loop(X, R, weights, means, covs, noise_vars, max_iter, tol,
            glob_cov, glob_var, cov_floor, var_floor, empty_tol, history):
    """Run EM in place on the parameter arrays.

    Returns ``(status, n_iter, n_history, reseed_iter, loglik, resp)``;
    ``reseed_iter`` is -1 when no component had to be re-seeded.
    """
    n, d = X.shape
    K = weights.size
    logp = np.empty((n, K))
    resp = np.empty((n, K))
    point_ll = np.empty(n)
    chol = np.zeros((K, d, d))
    reseed_iter = -1
    it = 0
    n_hist = 0
    ll = -np.inf
    while True:
        cholesky_all(covs, chol)
        log_joint(X, R, weights, means, chol, noise_vars, logp)
        ll = normalise(logp, resp, point_ll)
        if not np.isfinite(ll):
            return STATUS_NONFINITE, it, n_hist, reseed_iter, ll, resp
        history[n_hist] = ll
        n_hist += 1
        if n_hist > 1 and it != reseed_iter and abs(history[n_hist - 1] - history[n_hist - 2]) < tol:
            return STATUS_CONVERGED, it, n_hist, reseed_iter, ll, resp
        if it >= max_iter:
            return STATUS_MAX_ITER, it, n_hist, reseed_iter, ll, resp
        it += 1
        n_empty = m_step(X, R, resp, weights, means, covs, noise_vars,
                         cov_floor, var_floor, empty_tol)
        if n_empty:
            if reseed_iter >= 0:
                return STATUS_COLLAPSE, it, n_hist, reseed_iter, ll, resp
            reseed_iter = it
            worst = np.argmin(point_ll)
            nk = resp.sum(axis=0)
            for k in range(K):
                if nk[k] < empty_tol:
                    means[k] = X[worst]
                    covs[k] = glob_cov
                    noise_vars[k] = glob_var
                    weights[k] = 1.0 / K
            weights /= weights.sum()
