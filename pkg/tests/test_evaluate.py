import itertools

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from spherical_dcsbm.evaluate import (adjusted_rand_index, chi2_logsf, ks_gaussian_score,
                                      mardia_tests, one_way_anova, paired_sign_test)
from spherical_dcsbm.exceptions import UndefinedStatisticError


def _brute_ari(a, b):
    # pair enumeration with the Hubert-Arabie expectation
    pairs = list(itertools.combinations(range(len(a)), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    index = np.sum(same_a & same_b)
    ra, rb, total = same_a.sum(), same_b.sum(), len(pairs)
    expected = ra * rb / total
    top = 0.5 * (ra + rb)
    return (index - expected) / (top - expected)


def test_ari_identical_and_permuted():
    assert adjusted_rand_index([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 1.0
    assert adjusted_rand_index([0, 0, 1, 1, 2], [2, 2, 0, 0, 1]) == 1.0


def test_ari_small_example():
    a, b = [1, 1, 2, 2], [1, 1, 1, 2]
    assert_allclose(adjusted_rand_index(a, b), _brute_ari(a, b), rtol=1e-14)
    assert_allclose(adjusted_rand_index(a, b), 0.0, atol=1e-14)


def test_ari_matches_brute_force():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 100:
        n = int(rng.integers(2, 13))
        a, b = rng.integers(0, 4, n), rng.integers(0, 4, n)
        if len(set(a)) in (1, n) and len(set(b)) in (1, n):
            continue  # both trivial: the ratio is 0/0
        assert_allclose(adjusted_rand_index(a, b), _brute_ari(a, b), rtol=1e-12, atol=1e-12)
        assert adjusted_rand_index(a, b) == adjusted_rand_index(b, a)
        checked += 1


def test_ari_drops_unassigned():
    assert adjusted_rand_index([0, 0, -1, 1, 1], [1, 1, 0, 0, 0]) == 1.0
    with pytest.raises(UndefinedStatisticError):
        adjusted_rand_index([0, -1], [0, 1])


def test_ari_both_trivial():
    assert adjusted_rand_index([0, 0, 0], [1, 1, 1]) == 1.0
    assert adjusted_rand_index([0, 1, 2], [0, 1, 2]) == 1.0
    assert adjusted_rand_index([0, 0, 0], [0, 1, 2]) == 0.0


def test_mardia_symmetric_sample_has_zero_skewness():
    skew, kurt = mardia_tests(np.array([-1.0, 0.0, 1.0, -2.0, 2.0]))
    assert_allclose(skew.statistic, 0.0, atol=1e-12)
    assert_allclose(skew.p_value, 1.0)
    assert 0 <= kurt.p_value <= 1


def test_mardia_hand_statistics():
    x = np.random.default_rng(1).normal(size=(40, 2))
    c = x - x.mean(axis=0)
    s_inv = np.linalg.inv(c.T @ c / 40)
    g = c @ s_inv @ c.T
    t_s = (g ** 3).sum() / (6 * 40)
    b2 = np.mean(np.diag(g) ** 2)
    t_k = np.sqrt(40 / 64) * (b2 - 8 * 39 / 41)
    skew, kurt = mardia_tests(x)
    assert_allclose([skew.statistic, kurt.statistic], [t_s, t_k], rtol=1e-10)
    assert_allclose(skew.p_value, stats.chi2.sf(t_s, 4), rtol=1e-10)
    assert_allclose(kurt.p_value, 2 * stats.norm.sf(abs(t_k)), rtol=1e-10)


def test_mardia_affine_invariance():
    rng = np.random.default_rng(2)
    x = rng.gamma(2.0, size=(200, 3))
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    s1, k1 = mardia_tests(x)
    s2, k2 = mardia_tests(x @ A.T + 5.0)
    assert_allclose([s2.statistic, k2.statistic], [s1.statistic, k1.statistic], rtol=1e-8)


def test_mardia_null_calibration():
    rng = np.random.default_rng(3)
    ps, pk = [], []
    for _ in range(200):
        s, k = mardia_tests(rng.normal(size=(5000, 2)))
        ps.append(s.p_value)
        pk.append(k.p_value)
    assert stats.kstest(ps, "uniform").statistic < 0.1
    assert stats.kstest(pk, "uniform").statistic < 0.1


def test_mardia_log_p_survives_underflow():
    x = np.random.default_rng(4).exponential(size=(20000, 2)) ** 3
    skew, kurt = mardia_tests(x)
    assert skew.p_value == 0.0
    assert np.isfinite(skew.log_p_value) and skew.log_p_value < -745
    assert np.isfinite(kurt.log_p_value)


def test_mardia_errors():
    with pytest.raises(UndefinedStatisticError):
        mardia_tests(np.ones((10, 2)))
    with pytest.raises(UndefinedStatisticError):
        mardia_tests(np.random.default_rng(0).normal(size=(3, 2)))


@pytest.mark.parametrize("t,df", [(50.0, 4), (2000.0, 4), (5000.0, 10), (20000.0, 1)])
def test_chi2_logsf_matches_mpmath(t, df):
    mpmath.mp.dps = 50
    exact = mpmath.log(mpmath.gammainc(df / 2, t / 2, mpmath.inf, regularized=True))
    assert_allclose(chi2_logsf(t, df), float(exact), rtol=1e-8)


def test_ks_two_point_sample():
    # ECDF jumps to 1/2 at 0 where the fitted Gaussian CDF is Phi(-1)
    assert_allclose(ks_gaussian_score([0.0, 1.0]), 0.5 - stats.norm.cdf(-1.0), rtol=1e-12)
    assert_allclose(ks_gaussian_score([0.0, 1.0]), 0.3413, atol=1e-4)


def test_ks_at_quantiles():
    x = stats.norm.ppf((np.arange(100) + 0.5) / 100)
    assert ks_gaussian_score(x) < 0.01


def test_ks_constant_sample():
    with pytest.raises(UndefinedStatisticError):
        ks_gaussian_score(np.full(5, 2.0))


def test_sign_test_values():
    assert_allclose(paired_sign_test(np.ones(20)).p_value, 2.0 ** -20)
    assert_allclose(paired_sign_test([1, -1, 1, -1], alternative="two-sided").p_value, 1.0)
    assert paired_sign_test([1.0, 0.0, 2.0]).n_obs == 2


def test_sign_test_monotone_in_positives():
    p = [paired_sign_test(np.r_[np.ones(k), -np.ones(20 - k)]).p_value for k in range(21)]
    assert np.all(np.diff(p) <= 0)


def test_sign_test_errors():
    with pytest.raises(UndefinedStatisticError):
        paired_sign_test(np.zeros(4))
    with pytest.raises(ValueError):
        paired_sign_test([1.0, np.nan])
    with pytest.raises(ValueError):
        paired_sign_test([])


def test_anova_detects_shift():
    rng = np.random.default_rng(5)
    rep = one_way_anova([rng.normal(size=100), rng.normal(1.0, size=100)])
    assert rep.p_value < 1e-6
