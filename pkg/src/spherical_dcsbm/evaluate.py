"""Clustering agreement and normality diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import comb, gammaln

from .exceptions import UndefinedStatisticError

UNASSIGNED = -1


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float
    null: str
    n_obs: int
    # natural log of p_value, kept finite where p_value underflows to 0
    log_p_value: Optional[float] = None

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "null": self.null,
                "n_obs": self.n_obs, "log_p_value": self.log_p_value}


def _pairs(x):
    return comb(x, 2, exact=False)


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index.

    Positions where either labelling is ``-1`` (unassigned) are ignored.
    Identical partitions score exactly 1.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("label vectors must have equal length")
    keep = (a != UNASSIGNED) & (b != UNASSIGNED)
    a, b = a[keep], b[keep]
    n = a.size
    if n < 2:
        raise UndefinedStatisticError("adjusted Rand index needs at least two labelled points")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    index = _pairs(table).sum()
    row = _pairs(table.sum(axis=1)).sum()
    col = _pairs(table.sum(axis=0)).sum()
    expected = row * col / _pairs(n)
    top = 0.5 * (row + col)
    if top == expected:
        # only reachable when both partitions are trivial in the same way
        return 1.0 if index == top else 0.0
    return float((index - expected) / (top - expected))


def _standardise(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    ell, d = x.shape
    centred = x - x.mean(axis=0)
    S = centred.T @ centred / ell
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise UndefinedStatisticError("sample covariance is singular") from exc
    if np.linalg.cond(S) > 1e14:
        raise UndefinedStatisticError("sample covariance is singular")
    return np.linalg.solve(chol, centred.T).T, ell, d


def chi2_logsf(t: float, df: float) -> float:
    """``log P(chi2_df > t)``, finite far into the tail.

    Falls back to the asymptotic expansion of the upper incomplete gamma
    function, ``Gamma(a, x) ~ x^(a-1) e^-x sum_k (a-1)...(a-k) / x^k``, when
    scipy's value underflows.
    """
    out = float(stats.chi2.logsf(t, df))
    if np.isfinite(out):
        return out
    a, x = 0.5 * df, 0.5 * t
    term, total = 1.0, 1.0
    for k in range(1, 30):
        term *= (a - k) / x
        if abs(term) < 1e-17 * abs(total):
            break
        total += term
    return float((a - 1) * np.log(x) - x - gammaln(a) + np.log(total))


def mardia_tests(x):
    """Mardia's multivariate skewness and kurtosis tests.

    The covariance uses the ``1/ell`` normaliser. Skewness is referred to a
    chi-square with ``d(d+1)(d+2)/6`` degrees of freedom (upper tail),
    kurtosis to a standard normal (two-sided).

    Returns
    -------
    (TestReport, TestReport)
        Skewness and kurtosis reports. ``log_p_value`` stays informative
        for statistics so extreme that ``p_value`` is 0.
    """
    z, ell, d = _standardise(x)
    if ell <= d + 1:
        raise UndefinedStatisticError(f"need more than d + 1 = {d + 1} observations")
    # sum_ij (z_i . z_j)^3 equals the squared Frobenius norm of the third-moment tensor
    third = np.einsum("ia,ib,ic->abc", z, z, z)
    t_skew = float((third ** 2).sum() / (6.0 * ell))
    maha = np.einsum("ia,ia->i", z, z)
    b2 = float(np.mean(maha ** 2))
    t_kurt = float(np.sqrt(ell / (8.0 * d * (d + 2))) * (b2 - d * (d + 2) * (ell - 1) / (ell + 1)))
    df = d * (d + 1) * (d + 2) / 6.0
    log_ps = chi2_logsf(t_skew, df)
    log_pk = float(min(0.0, np.log(2.0) + stats.norm.logsf(abs(t_kurt))))
    skew = TestReport(t_skew, float(np.exp(log_ps)), f"chi2(df={df:g})", ell, log_ps)
    kurt = TestReport(t_kurt, float(np.exp(log_pk)), "N(0,1) two-sided", ell, log_pk)
    return skew, kurt


def ks_gaussian_score(x) -> float:
    """Kolmogorov-Smirnov distance to the moment-matched Gaussian."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise UndefinedStatisticError("need at least two values")
    sd = x.std()
    if not sd > 0:
        raise UndefinedStatisticError("sample has zero variance")
    return float(stats.kstest(x, "norm", args=(x.mean(), sd)).statistic)


def paired_sign_test(delta, alternative="greater") -> TestReport:
    """Binomial sign test on paired differences; zeros are dropped.

    ``alternative="greater"`` tests whether positive differences are more
    likely than negative ones.
    """
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size < 1:
        raise ValueError("need at least one difference")
    if np.isnan(delta).any():
        raise ValueError("paired differences contain NaN")
    nonzero = delta[delta != 0]
    if nonzero.size == 0:
        raise UndefinedStatisticError("all paired differences are zero")
    k = int((nonzero > 0).sum())
    res = stats.binomtest(k, nonzero.size, 0.5, alternative=alternative)
    return TestReport(float(k), float(min(1.0, res.pvalue)), f"Binomial({nonzero.size}, 1/2)",
                      int(nonzero.size))


def one_way_anova(groups) -> TestReport:
    groups = [np.asarray(g, dtype=float) for g in groups]
    res = stats.f_oneway(*groups)
    return TestReport(float(res.statistic), float(res.pvalue), "F", int(sum(g.size for g in groups)))
