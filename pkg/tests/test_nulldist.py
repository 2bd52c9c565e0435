import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats
from sympy.utilities.iterables import partitions as sympy_partitions

from haartest.errors import DegenerateInput
from haartest.kernels import KernelParams, uq_diagonal, uq_weight_values
from haartest.linalg import cos_spectra
from haartest.nulldist import (
    NullMixtureSpec,
    PartitionTable,
    ad_ksample,
    ad_limit_sf,
    local_power,
    partition_count,
    sample_null_mixture,
    truncation_weight,
    tz_null_moments,
    tz_null_quantile,
    tz_null_quantiles,
)
from haartest.rng import RngStream
from haartest.samplers import SamplerSpec, draw_sample
from haartest.statistics import u_zq

from conftest import haar_sample


def _brute_partitions(n, k):
    if k == 0:
        return 1
    return sum(1 for p in sympy_partitions(k, m=n))


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


def test_partition_examples():
    assert all(partition_count(n, 0) == 1 for n in range(6))
    assert partition_count(2, 4) == 3
    assert partition_count(25, 4) == 5
    assert partition_count(0, 3) == 0


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_partition_counts_match_enumeration(n):
    for k in range(0, 16):
        assert partition_count(n, k) == _brute_partitions(n, k)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), k=st.integers(0, 300))
def test_partition_recurrence_and_monotonicity(n, k):
    p = partition_count(n, k)
    assert p == (partition_count(n, k - n) if k >= n else 0) + partition_count(n - 1, k)
    assert partition_count(n + 1, k) >= p


def test_partition_table_bounds():
    t = PartitionTable(3, 10)
    assert t.row(3)[:5] == [1, 1, 2, 3, 4]
    with pytest.raises(IndexError):
        t(4, 2)
    with pytest.raises(ValueError):
        partition_count(-1, 2)


def test_large_counts_are_exact_integers():
    # p(k) for k <= n is the unrestricted partition number; p(200) is known exactly
    assert partition_count(200, 200) == 3972999029388


@pytest.mark.parametrize("n", [1, 5, 25])
@pytest.mark.parametrize("z", [0.3, 0.5, 0.9])
def test_generating_function_identity(n, z):
    target = math.prod(1.0 / (1.0 - z**i) for i in range(1, n + 1))
    total, k = 0.0, 0
    while True:
        term = z**k * partition_count(n, k)
        total += term
        k += 1
        if k > 50 and term < 1e-13 * total:
            break
    assert total == pytest.approx(target, rel=1e-10)


# ---------------------------------------------------------------------------
# Moments and mixture draws
# ---------------------------------------------------------------------------


def test_moments_table_values():
    mean, var = tz_null_moments(25, 0.5)
    assert mean == pytest.approx(2.46, abs=0.005)
    assert var == pytest.approx(0.9047073, abs=1e-7)
    assert tz_null_moments(25, 0.9)[0] == pytest.approx(402914.7, abs=0.05)


@pytest.mark.parametrize("z", [0.1, 0.5, 0.8])
def test_rank_one_moments(z):
    mean, var = tz_null_moments(1, z)
    assert mean == pytest.approx(z / (1 - z), rel=1e-14)
    assert var == pytest.approx(2 * z * z / (1 - z * z), rel=1e-14)


@pytest.mark.parametrize("n,z", [(3, 0.4), (25, 0.5)])
def test_moments_match_partition_sums(n, z):
    # E = sum_k z^k p(n,k), Var = 2 sum_k z^2k p(n,k)
    ks = range(1, 400)
    mean = sum(z**k * partition_count(n, k) for k in ks)
    var = 2 * sum(z ** (2 * k) * partition_count(n, k) for k in ks)
    m, v = tz_null_moments(n, z)
    assert m == pytest.approx(mean, rel=1e-12)
    assert v == pytest.approx(var, rel=1e-12)


def test_mixture_moments():
    draws = sample_null_mixture(NullMixtureSpec(25, 0.5, seed=4), 100_000)
    mean, var = tz_null_moments(25, 0.5)
    se_mean = math.sqrt(var / draws.size)
    assert abs(draws.mean() - mean) < 4 * se_mean
    assert abs(draws.mean() - 2.46) < 0.02
    # fourth cumulant of the mixture gives the standard error of the sample variance
    k4 = 48 * sum(0.5 ** (4 * k) * partition_count(25, k) for k in range(1, 200))
    se_var = math.sqrt((k4 + 2 * var**2) / draws.size)
    assert abs(draws.var() - var) < 4 * se_var


def test_small_z_limit():
    z = 1e-6
    draws = sample_null_mixture(NullMixtureSpec(25, z, seed=1), 50_000)
    assert draws.mean() == pytest.approx(z, rel=0.03)
    assert stats.kstest(draws / z, stats.chi2(1).cdf).pvalue > 0.001


def test_monotone_coupling_in_z():
    a = sample_null_mixture(NullMixtureSpec(10, 0.3, seed=9), 5000)
    b = sample_null_mixture(NullMixtureSpec(10, 0.6, seed=9), 5000)
    assert np.all(b >= a)


def test_truncation_tail():
    n, z = 25, 0.5
    K = truncation_weight(n, z)
    mean = tz_null_moments(n, z)[0]
    tail = mean - sum(z**k * partition_count(n, k) for k in range(1, K + 1))
    assert 0 <= tail <= 1e-8 * mean


def _imhof_quantile(n, z, prob, K=60):
    w = np.array([z**k for k in range(1, K)])
    d = np.array([partition_count(n, k) for k in range(1, K)], dtype=float)

    def sf(x):
        f = lambda u: math.sin(0.5 * np.sum(d * np.arctan(w * u)) - 0.5 * x * u) / (
            u * np.exp(np.sum(d / 4 * np.log1p((w * u) ** 2))))
        return 0.5 + integrate.quad(f, 0, np.inf, limit=400)[0] / math.pi

    return optimize.brentq(lambda x: sf(x) - (1 - prob), 1e-3, 50)


@pytest.mark.parametrize("prob", [0.5, 0.95])
def test_quantiles_match_characteristic_function_inversion(prob):
    est = tz_null_quantile(25, 0.5, prob, 100_000, seed=2)
    exact = _imhof_quantile(25, 0.5, prob)
    assert abs(est.quantile - exact) < 4 * est.stderr


def test_median_matches_table():
    assert tz_null_quantile(25, 0.5, 0.5, 100_000, seed=5).quantile == pytest.approx(2.20, abs=0.1)


@pytest.mark.xfail(strict=True, reason="the printed 0.95 quantile (4.65) is a finite-sample N=200 value; "
                   "the limiting mixture's 0.95 quantile is 4.27 by exact inversion")
def test_asymptotic_95_quantile_against_finite_sample_table():
    assert tz_null_quantile(25, 0.5, 0.95, 100_000, seed=5).quantile == pytest.approx(4.65, abs=0.3)


def test_quantiles_monotone():
    est = tz_null_quantiles(5, 0.5, [0.1, 0.5, 0.9, 0.99], 20_000, seed=1)
    qs = [e.quantile for e in est]
    assert qs == sorted(qs)
    assert all(e.stderr > 0 for e in est)
    with pytest.raises(ValueError):
        tz_null_quantile(5, 0.5, 1.0)


# ---------------------------------------------------------------------------
# Anderson-Darling
# ---------------------------------------------------------------------------


def test_ad_identical_and_disjoint():
    x = np.random.default_rng(0).normal(size=200)
    assert ad_ksample([x, x.copy()]).pvalue >= 0.9
    assert ad_ksample([np.arange(1000.0), np.arange(10000.0, 11000.0)]).pvalue < 1e-6


def test_ad_errors():
    with pytest.raises(DegenerateInput):
        ad_ksample([[1.0, 1.0], [1.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        ad_ksample([[1.0, 2.0]])
    with pytest.raises(ValueError):
        ad_ksample([[1.0, 2.0], []])


@pytest.mark.filterwarnings("ignore:p-value (capped|floored)")
@pytest.mark.parametrize("k", [2, 3])
def test_ad_statistic_matches_scipy(k):
    rng = np.random.default_rng(k)
    samples = [rng.normal(loc=0.1 * i, size=50 + 10 * i).round(1) for i in range(k)]  # ties on purpose
    ours = ad_ksample(samples)
    ref = stats.anderson_ksamp(samples, midrank=True)
    assert ours.standardized == pytest.approx(ref.statistic, rel=1e-10, abs=1e-10)


@pytest.mark.filterwarnings("ignore:p-value (capped|floored)")
def test_ad_pvalue_near_scipy_interpolation():
    # scipy interpolates tabulated percentiles on [0.001, 0.25]; agree loosely there
    rng = np.random.default_rng(7)
    for shift in (0.15, 0.25, 0.35):
        a, b = rng.normal(size=300), rng.normal(loc=shift, size=300)
        ref = stats.anderson_ksamp([a, b], midrank=True)
        ours = ad_ksample([a, b]).pvalue
        if 0.002 < ref.pvalue < 0.24:
            assert ours == pytest.approx(ref.pvalue, rel=0.3)


def test_ad_permutation_symmetry():
    rng = np.random.default_rng(3)
    a, b, c = rng.normal(size=40), rng.normal(size=55), rng.normal(0.3, size=35)
    r1, r2 = ad_ksample([a, b, c]), ad_ksample([c, a, b])
    assert r1.statistic == pytest.approx(r2.statistic, rel=1e-12)
    assert r1.pvalue == pytest.approx(r2.pvalue, rel=1e-10)


@pytest.mark.slow
def test_ad_calibration():
    rng = np.random.default_rng(11)
    p = [ad_ksample([rng.normal(size=1000), rng.normal(size=1000)]).pvalue for _ in range(1000)]
    assert stats.kstest(p, "uniform").statistic < 0.05


def test_ad_limit_sf_against_simulation():
    # the limit law sum_j chi2_1 / (j (j + 1)), simulated directly
    rng = np.random.default_rng(2)
    j = np.arange(1, 400)
    sims = (rng.chisquare(1, size=(100_000, j.size)) / (j * (j + 1))).sum(axis=1)
    for x in (0.5, 1.0, 2.0, 3.0):
        emp = np.mean(sims > x)
        assert ad_limit_sf(x, 1) == pytest.approx(emp, abs=4 * math.sqrt(emp * (1 - emp) / sims.size) + 1e-3)


# ---------------------------------------------------------------------------
# Local power
# ---------------------------------------------------------------------------


def test_local_power_reduces_to_alpha():
    p = local_power(5, 0.5, 0.05, {}, draws=50_000, seed=1)
    assert p == pytest.approx(0.05, abs=4 * math.sqrt(0.05 * 0.95 / 50_000))


def test_local_power_monotone():
    powers = [local_power(5, 0.5, 0.05, {1: [t]}, draws=20_000, seed=3) for t in (0.0, 1.0, 4.0, 9.0, 25.0)]
    assert powers == sorted(powers)
    assert powers[-1] > 0.5


def test_local_power_single_weight_one_component():
    # direct simulation of z chi2_1(theta^2) + sum_{k>=2} z^k chi2_{p(n,k)}
    n, z, alpha, theta2 = 3, 0.5, 0.05, 6.0
    rng = np.random.default_rng(0)
    M = 200_000
    null = sum(z**k * rng.chisquare(partition_count(n, k), size=M) for k in range(1, 60))
    crit = np.quantile(null, 1 - alpha)
    alt = z * stats.ncx2.rvs(1, theta2, size=M, random_state=rng)
    alt = alt + sum(z**k * rng.chisquare(partition_count(n, k), size=M) for k in range(2, 60))
    ref = np.mean(alt > crit)
    got = local_power(n, z, alpha, {1: [theta2]}, draws=M, seed=5, critical=crit)
    assert got == pytest.approx(ref, abs=0.01)


def test_local_power_validation():
    with pytest.raises(ValueError):
        local_power(3, 0.5, 0.0, {})
    with pytest.raises(ValueError):
        local_power(3, 0.5, 0.05, {1: [1.0, 2.0]})  # p(3, 1) = 1 component only
    with pytest.raises(ValueError):
        local_power(3, 0.5, 0.05, {1: [-1.0]})


# ---------------------------------------------------------------------------
# U_{z,q} null mean
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("dim", [3, 5, 4])
def test_uq_weight_has_zero_haar_mean(dim):
    # every nontrivial character integrates to 0, so W(g) has Haar mean 0
    kind = "B" if dim % 2 else "D"
    X = cos_spectra(haar_sample(dim, 100_000, dim))
    for z, q in [(0.2, 0.4), (0.5, 0.7)]:
        W = uq_weight_values(kind, X, KernelParams(z, q))
        assert abs(W.mean()) < 4 * W.std() / math.sqrt(W.size)


@pytest.mark.slow
def test_u_null_mean_is_stable_in_N():
    p = KernelParams(0.2, 0.4)
    spec = SamplerSpec("haar", 5)
    diag = uq_diagonal("B", 2, p)
    means = []
    for N in (50, 100, 200):
        root = RngStream(100 + N)
        vals = np.array([u_zq(draw_sample(spec, N, root.split(r)), p).value for r in range(500)])
        means.append((vals.mean(), vals.std() / math.sqrt(vals.size)))
        # E U = W(I) exactly: the off-diagonal terms have mean 0
        assert abs(vals.mean() - diag) < 3 * means[-1][1]
    for (m1, s1), (m2, s2) in zip(means, means[1:]):
        assert abs(m1 - m2) < 3 * math.hypot(s1, s2)
