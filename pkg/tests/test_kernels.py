import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from haartest.errors import DegenerateAngles, DegenerateSpectrum
from haartest.kernels import (
    KernelParams,
    _entry_matrix,
    cauchy_kernel,
    character,
    kernel_pair_values,
    kernel_series_oracle,
    partitions,
    regularize_spectra,
    series_tail_bound,
    taylor_table,
    uq_diagonal,
    uq_weight_sum,
    uq_weight_values,
)
from haartest.linalg import cos_spectra
from haartest.nulldist import partition_count

from conftest import haar_sample


def so3_character(k, theta):
    if abs(math.sin(theta / 2)) < 1e-14:
        return 2 * k + 1.0
    return math.sin((k + 0.5) * theta) / math.sin(theta / 2)


# --- closed forms ----------------------------------------------------------


def test_type_b_identity_value():
    assert cauchy_kernel("B", [1.0], [1.0], 0.5) == pytest.approx(33.0, rel=1e-12)


@pytest.mark.parametrize("z", np.round(np.arange(0.1, 1.0, 0.1), 1))
def test_type_b_identity_generating_function(z):
    ref = (1 + 6 * z + z * z) / (1 - z) ** 3 - 1
    assert abs(cauchy_kernel("B", [1.0], [1.0], z) - ref) <= 1e-10 * max(1.0, ref)


def test_type_b_so3_series():
    th, ph, z = 1.0, 0.5, 0.3
    ref = sum(z**k * so3_character(k, th) * so3_character(k, ph) for k in range(1, 61))
    got = cauchy_kernel("B", [math.cos(th)], [math.cos(ph)], z)
    assert got == pytest.approx(ref, abs=1e-10)


def test_type_a_single_eigenvalue():
    assert cauchy_kernel("A", [1.0], [1.0], 0.5) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["B", "C"])
@pytest.mark.parametrize("m", [1, 2])
@pytest.mark.parametrize("z", [0.1, 0.5])
def test_cauchy_matches_character_series(kind, m, z):
    rng = np.random.default_rng(100 * m + int(10 * z))
    for _ in range(20):
        x = np.cos(rng.uniform(0.05, math.pi - 0.05, m))
        y = np.cos(rng.uniform(0.05, math.pi - 0.05, m))
        exact = cauchy_kernel(kind, x, y, z)
        series = kernel_series_oracle(kind, x, y, z, 60)
        assert abs(exact - series) <= 1e-8, (x, y)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_type_a_matches_schur_series(m):
    rng = np.random.default_rng(m)
    for z in (0.1, 0.5):
        for _ in range(20 if m < 3 else 4):
            x = np.exp(1j * rng.uniform(-math.pi, math.pi, m))
            y = np.exp(1j * rng.uniform(-math.pi, math.pi, m))
            exact = cauchy_kernel("A", x, y, z)
            series = kernel_series_oracle("A", x, y, z, 60)
            assert abs(exact - series) <= 1e-8


@pytest.mark.parametrize("kind", ["B", "C", "D"])
def test_kernel_symmetry(kind):
    rng = np.random.default_rng(1)
    for m in (1, 3, 6):
        x, y = np.cos(rng.uniform(0, math.pi, (2, m)))
        a, b = cauchy_kernel(kind, x, y, 0.4), cauchy_kernel(kind, y, x, 0.4)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@pytest.mark.parametrize("kind", ["B", "C"])
def test_gram_matrix_is_positive_semidefinite(kind):
    rng = np.random.default_rng(7)
    X = np.sort(np.cos(rng.uniform(0, math.pi, (12, 3))), axis=1)[:, ::-1]
    G = np.array([[cauchy_kernel(kind, a, b, 0.5) + 1.0 for b in X] for a in X])
    assert np.linalg.eigvalsh(G).min() >= -1e-8 * np.abs(G).max()


# --- cosine-form expansions, checked symbolically -------------------------


def _cosine_entry(kind, c, d, z):
    return _entry_matrix(kind, np.array([c], dtype=object), np.array([d], dtype=object), z)[0, 0]


@pytest.mark.parametrize("kind", ["B", "C", "D"])
def test_cosine_form_matches_complex_factors(kind):
    x, y, z = sp.symbols("x y z", nonzero=True)
    c, d = (x + 1 / x) / 2, (y + 1 / y) / 2
    factors = [(1 - z * x * y), (1 - z * y / x), (1 - z * x / y), (1 - z / (x * y))]
    if kind == "C":
        ref = 1 / sp.Mul(*factors)
    elif kind == "D":
        ref = sum(1 / f for f in factors)
    else:
        # printed odd-orthogonal entry with 2 cos 2t = x^2 + x^-2
        ref = ((1 + z) ** 2 + 2 * z * (c + d)) / (
            (1 + z**2) ** 2 - 4 * (z + z**3) * c * d + z**2 * (x**2 + x**-2 + y**2 + y**-2)
        )
    got = sp.nsimplify(_cosine_entry(kind, c, d, z), rational=True)
    assert sp.simplify(sp.together(got - ref)) == 0


def test_type_d_series_consistency():
    # constant term 3 and weight-one term proportional to Tr(g) Tr(h)
    rng = np.random.default_rng(3)
    for m, scale in ((1, 1.0), (2, 4.0)):
        x, y = rng.uniform(-1, 1, (2, m))
        eps = 1e-5
        k1 = cauchy_kernel("D", x, y, eps)
        k2 = cauchy_kernel("D", x, y, 2 * eps)
        assert k1 == pytest.approx(3.0, abs=1e-3)
        slope = (k2 - k1) / eps
        assert slope == pytest.approx(scale * 4 * x.sum() * y.sum(), rel=1e-3, abs=1e-3)


# --- degenerate spectra ----------------------------------------------------


def test_identity_spectrum_is_jittered_not_fatal():
    X = np.ones((2, 4))
    out, count = regularize_spectra(X, KernelParams(0.5))
    assert count == 2
    assert np.all(np.diff(out, axis=1) < 0)
    assert np.isfinite(cauchy_kernel("B", np.ones(4), np.ones(4), 0.5))


def test_cluster_at_minus_one_spreads_upward():
    out, _ = regularize_spectra(np.array([[0.2, -1.0, -1.0]]), KernelParams(0.5))
    assert np.all(out >= -1.0) and np.all(np.diff(out[0]) < 0)


def test_strict_mode_raises():
    with pytest.raises(DegenerateSpectrum):
        cauchy_kernel("B", [0.3, 0.3], [0.1, 0.2], KernelParams(0.5, strict=True))


@pytest.mark.parametrize("mode", ["confluent", "jitter"])
def test_jitter_consistency(mode):
    # perturbing a degenerate input by 10 delta barely moves the value
    base = np.array([0.7, 0.7, 0.1])
    y = np.array([0.5, -0.2, -0.6])
    a = cauchy_kernel("B", base, y, KernelParams(0.5, degenerate=mode))
    b = cauchy_kernel("B", base - np.array([0, 1e-6, 0]), y, 0.5)
    assert abs(a - b) <= 1e-4 * abs(a)


def _mp_kernel(kind, x, y, z):
    z = mpmath.mpf(z)
    z2 = z * z
    m = len(x)

    def f(c, d):
        den = (1 + z2) ** 2 - 4 * z * (1 + z2) * c * d + 4 * z2 * (c * c + d * d - 1)
        num = {"B": (1 + z) ** 2 + 2 * z * (c + d), "C": 1,
               "D": 4 * (1 + z2) - 4 * z * (3 + z2) * c * d + 8 * z2 * (c * c + d * d - 1)}[kind]
        return num / den

    M = mpmath.matrix([[f(a, b) for b in y] for a in x])
    V = lambda v: mpmath.fprod(v[i] - v[j] for i in range(m) for j in range(i + 1, m))
    pre = (4 * z) ** (-(m * (m - 1) // 2)) * {"B": (1 - z) ** m, "C": (1 - z2) ** m, "D": 1}[kind]
    return pre * mpmath.det(M) / (V(x) * V(y)) - 1


def _separate(v, eps):
    # split coincident entries by multiples of eps, keeping descending order
    return [mpmath.mpf(a) - sum(1 for b in v[:i] if b == a) * eps for i, a in enumerate(v)]


@pytest.mark.parametrize("kind,x,y,z", [
    ("B", [1.0, 1.0, 0.3], [0.8, 0.1, -0.5], 0.5),
    ("B", [0.6, 0.6, 0.6, -0.2], [0.6, 0.6, -0.9, -0.9], 0.4),
    ("C", [1.0, 1.0, 1.0, 0.2], [1.0, 1.0, 0.5, -1.0], 0.3),
    ("D", [0.5, 0.5, -1.0, -1.0], [0.9, 0.1, 0.1, 0.1], 0.6),
    ("B", [1.0] * 6 + [0.4, -0.3], [1.0] * 5 + [0.7, 0.2, -0.8], 0.5),
])
def test_coincidence_limit_matches_high_precision(kind, x, y, z):
    with mpmath.workdps(800):
        eps = mpmath.mpf("1e-25")
        ref = float(_mp_kernel(kind, _separate(x, eps), _separate(y, eps), z))
    got = cauchy_kernel(kind, np.array(x), np.array(y), z)
    assert got == pytest.approx(ref, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("m,z", [(2, 0.3), (3, 0.2), (2, 0.5)])
def test_identity_kernel_is_weyl_dimension_series(m, z):
    # K(I, I) = sum z^|lambda| dim(lambda)^2, each character at I being a dimension
    one = np.ones(m)
    ref = kernel_series_oracle("B", one, one, z, 120)
    assert cauchy_kernel("B", one, one, z) == pytest.approx(ref, rel=1e-10)
    assert cauchy_kernel("C", one, one, z) == pytest.approx(kernel_series_oracle("C", one, one, z, 120), rel=1e-10)


def test_ill_conditioned_coincidence_limit_raises():
    x = np.array([1.0] * 20 + list(np.cos(np.linspace(0.3, 3.0, 5))))
    y = np.array([1.0] * 18 + list(np.cos(np.linspace(0.2, 2.9, 7))))
    with pytest.raises(DegenerateSpectrum, match="ill-conditioned"):
        cauchy_kernel("B", x, y, 0.5)


@pytest.mark.parametrize("kind", ["B", "C", "D"])
@pytest.mark.parametrize("c,d,z", [(0.3, -0.2, 0.5), (1.0, 1.0, 0.5), (1.0, -1.0, 0.9), (0.99, 0.7, 0.2)])
def test_taylor_table_matches_mpmath(kind, c, d, z):
    T = taylor_table(kind, c, d, z, 5, 4)

    def f(cc, dd):
        return _mp_kernel_entry(kind, cc, dd, z)

    with mpmath.workdps(40):
        for r in range(6):
            for u in range(5):
                ref = mpmath.diff(f, (mpmath.mpf(c), mpmath.mpf(d)), (r, u)) / (math.factorial(r) * math.factorial(u))
                assert T[r, u] == pytest.approx(float(ref), rel=1e-12, abs=1e-12)


def _mp_kernel_entry(kind, c, d, z):
    z = mpmath.mpf(z)
    z2 = z * z
    den = (1 + z2) ** 2 - 4 * z * (1 + z2) * c * d + 4 * z2 * (c * c + d * d - 1)
    num = {"B": (1 + z) ** 2 + 2 * z * (c + d), "C": 1,
           "D": 4 * (1 + z2) - 4 * z * (3 + z2) * c * d + 8 * z2 * (c * c + d * d - 1)}[kind]
    return num / den


def test_degenerate_mode_validation():
    with pytest.raises(ValueError):
        KernelParams(0.5, degenerate="ignore")


def test_pair_values_match_single_calls():
    rng = np.random.default_rng(9)
    X = np.sort(np.cos(rng.uniform(0, math.pi, (6, 4))), axis=1)[:, ::-1]
    i, j = np.triu_indices(6)
    vals = kernel_pair_values("B", X, i, j, KernelParams(0.5), chunk=4)
    for v, a, b in zip(vals, i, j):
        assert v == pytest.approx(cauchy_kernel("B", X[a], X[b], 0.5), rel=1e-12)


def test_large_rank_is_finite():
    rng = np.random.default_rng(0)
    x, y = np.cos(rng.uniform(0, math.pi, (2, 25)))
    v = cauchy_kernel("B", x, y, 0.5)
    assert np.isfinite(v)


def test_rank25_against_high_precision():
    import mpmath

    mpmath.mp.dps = 400
    # Haar spectra repel; double precision holds there (not for arbitrary clustered input)
    x, y = cos_spectra(haar_sample(51, 2, 5))
    z = mpmath.mpf("0.5")
    m = 25
    M = mpmath.matrix(m, m)
    for i in range(m):
        for j in range(m):
            c, d = mpmath.mpf(x[i]), mpmath.mpf(y[j])
            num = (1 + z) ** 2 + 2 * z * (c + d)
            den = (1 + z**2) ** 2 - 4 * z * (1 + z**2) * c * d + 4 * z**2 * (c * c + d * d - 1)
            M[i, j] = num / den
    vx = mpmath.fprod(mpmath.mpf(x[i]) - mpmath.mpf(x[j]) for i in range(m) for j in range(i + 1, m))
    vy = mpmath.fprod(mpmath.mpf(y[i]) - mpmath.mpf(y[j]) for i in range(m) for j in range(i + 1, m))
    ref = (1 - z) ** m * mpmath.det(M) / ((4 * z) ** (m * (m - 1) // 2) * vx * vy) - 1
    got = cauchy_kernel("B", x, y, 0.5)
    assert abs(got - float(ref)) <= 1e-7 * max(1.0, abs(float(ref)))


# --- characters and partitions ---------------------------------------------


def test_partitions_enumeration():
    assert sorted(partitions(4, 2)) == [(2, 2), (3, 1), (4,)]
    assert len(list(partitions(4, 25))) == 5
    for k in range(12):
        assert len(list(partitions(k, 3))) == partition_count(3, k)


def test_characters_known_values():
    th = 0.83
    assert character("B", (1,), [th]) == pytest.approx(1 + 2 * math.cos(th))
    assert character("B", (), [th, 0.2]) == pytest.approx(1.0)
    # at the identity the character is the Weyl dimension
    assert character("B", (1,), [0.0, 0.0]) == pytest.approx(5.0)
    assert character("B", (2,), [0.0]) == pytest.approx(5.0)
    assert character("C", (1,), [0.0, 0.0]) == pytest.approx(4.0)
    assert character("A", (1, 1), [0.0, 0.0, 0.0]) == pytest.approx(3.0)
    for k in range(6):
        assert character("C", (k,), [th]) == pytest.approx(math.sin((k + 1) * th) / math.sin(th))
    # Schur s_(1) is the trace
    ph = np.array([0.1, 1.3, -2.0])
    assert character("A", (1,), ph) == pytest.approx(np.exp(1j * ph).sum())
    with pytest.raises(DegenerateAngles):
        character("B", (1,), [0.4, 0.4])
    with pytest.raises(NotImplementedError):
        character("D", (1,), [0.4])


def test_series_oracle_properties():
    assert kernel_series_oracle("B", [0.3], [0.1], 0.5, 0) == 0
    assert kernel_series_oracle("B", [1.0], [1.0], 0.5, 200) == pytest.approx(33.0, rel=1e-10)
    vals = [kernel_series_oracle("B", [0.2, -0.5], [0.2, -0.5], 0.5, L) for L in range(8)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_tail_bound_shrinks():
    b = [series_tail_bound(2, 0.5, L, 1.0) for L in (5, 10, 20)]
    assert b[0] > b[1] > b[2] >= 0


# --- U-family summands -------------------------------------------------------


def test_uq_type_a_single():
    assert uq_weight_sum("A", [1.0 + 0j], KernelParams(0.5, q=0.3)) == pytest.approx(1.0)


def test_uq_type_b_rank2_identity():
    z, q = 0.2, 0.4
    ref = (1 - z * z * q) * (1 + z) * (1 + z * q) / ((1 - z) ** 2 * (1 - z * q) ** 2) ** 2 - 1
    # independent product: levels a = (z, zq), two unit cosines each
    a = [z, z * q]
    num = (1 - a[0] * a[1]) * (1 + a[0]) * (1 + a[1])
    den = 1.0
    for ai in a:
        for _ in range(2):
            den *= 1 - 2 * ai + ai * ai
    assert num / den - 1 == pytest.approx(ref, rel=1e-14)
    assert uq_weight_sum("B", [1.0, 1.0], KernelParams(z, q=q)) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("kind", ["B", "C", "D"])
def test_uq_identity_is_maximal(kind):
    p = KernelParams(0.3, q=0.5)
    top = uq_diagonal(kind, 4, p)
    rng = np.random.default_rng(2)
    X = np.cos(rng.uniform(0, math.pi, (200, 4)))
    assert np.all(uq_weight_values(kind, X, p) <= top)
    assert np.all(uq_weight_values(kind, X, p) > -1)


def test_uq_q_levels_override():
    p = KernelParams(0.3, q=0.5, q_levels=8)
    a = uq_weight_sum("B", [0.2, 0.1], p)
    b = uq_weight_sum("B", [0.2, 0.1], KernelParams(0.3, q=0.5))
    assert a != b and np.isfinite(a)


@given(st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=1, max_size=6),
       st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=0.01, max_value=0.99))
@settings(max_examples=100, deadline=None)
def test_uq_finite_and_above_minus_one(x, z, q):
    v = uq_weight_sum("B", x, KernelParams(z, q=q))
    assert np.isfinite(v) and v > -1


def test_params_validation():
    with pytest.raises(ValueError):
        KernelParams(0.0)
    with pytest.raises(ValueError):
        KernelParams(0.5, q=1.0)
