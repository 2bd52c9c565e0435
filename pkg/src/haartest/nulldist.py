"""Null distributions, quantiles, the k-sample Anderson-Darling test and local power."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import DegenerateInput
from .rng import RngStream

MIXTURE_TOL = 1e-8


# ---------------------------------------------------------------------------
# Partition counts
# ---------------------------------------------------------------------------


class PartitionTable:
    """p(n, k): partitions of k into at most n parts, for n <= n_max, k <= k_max."""

    def __init__(self, n_max: int, k_max: int):
        if n_max < 0 or k_max < 0:
            raise ValueError("table bounds must be nonnegative")
        self.n_max = n_max
        self.k_max = k_max
        # python ints: p(25, k) leaves int64 range for k in the thousands
        table = [[0] * (k_max + 1) for _ in range(n_max + 1)]
        table[0][0] = 1
        for n in range(1, n_max + 1):
            row, prev = table[n], table[n - 1]
            for k in range(k_max + 1):
                row[k] = prev[k] + (row[k - n] if k >= n else 0)
        self._table = table

    def __call__(self, n: int, k: int) -> int:
        if n < 0 or k < 0:
            raise ValueError("n and k must be nonnegative")
        if n > self.n_max or k > self.k_max:
            raise IndexError(f"p({n}, {k}) outside table ({self.n_max}, {self.k_max})")
        return self._table[n][k]

    def row(self, n: int) -> list[int]:
        return list(self._table[n])


@lru_cache(maxsize=64)
def _table_for(n: int, k_max: int) -> PartitionTable:
    return PartitionTable(n, k_max)


def partition_count(n: int, k: int) -> int:
    """Number of partitions of k into at most n parts."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    # round the table size up so repeated calls share one table
    size = max(64, 1 << (int(k).bit_length()))
    return _table_for(n, size)(n, k)


# ---------------------------------------------------------------------------
# T_z null moments and mixture
# ---------------------------------------------------------------------------


def _generating_product(n: int, z: float) -> float:
    out = 1.0
    for i in range(1, n + 1):
        out /= 1.0 - z**i
    return out


def tz_null_moments(n: int, z: float) -> tuple[float, float]:
    """Mean and variance of the limiting null law of T_z at rank n."""
    if not 0 < z < 1:
        raise ValueError("z must lie in (0, 1)")
    if n < 1:
        raise ValueError("rank must be positive")
    mean = _generating_product(n, z) - 1.0
    var = 2.0 * (_generating_product(n, z * z) - 1.0)
    return mean, var


def truncation_weight(n: int, z: float, tol: float = MIXTURE_TOL) -> int:
    """Smallest K with omitted tail mean sum_{k>K} z^k p(n,k) <= tol * mean."""
    mean, _ = tz_null_moments(n, z)
    partial = 0.0
    K = 0
    k_max = 64
    table = _table_for(n, k_max)
    while True:
        K += 1
        if K > k_max:
            k_max *= 2
            table = _table_for(n, k_max)
        partial += z**K * table(n, K)
        if mean - partial <= tol * mean:
            return K


@dataclass(frozen=True)
class NullMixtureSpec:
    n: int
    z: float
    K: int | None = None
    seed: int = 0

    def truncation(self) -> int:
        return self.K if self.K is not None else truncation_weight(self.n, self.z)


def _degrees(n: int, K: int) -> np.ndarray:
    table = _table_for(n, max(64, 1 << K.bit_length()))
    return np.array([table(n, k) for k in range(1, K + 1)], dtype=float)


def sample_null_mixture(spec: NullMixtureSpec, draws: int, rng: RngStream | None = None) -> np.ndarray:
    """I.i.d. draws of sum_{k=1}^K z^k chi2_{p(n,k)}.

    The chi-square column for weight k is drawn k-th from the stream, so two
    specs sharing a seed share their chi-square variables term by term.
    """
    rng = rng if rng is not None else RngStream(spec.seed)
    K = spec.truncation()
    dfs = _degrees(spec.n, K)
    out = np.zeros(draws)
    zk = 1.0
    for df in dfs:
        zk *= spec.z
        out += zk * rng.chisquare(df, size=draws)
    return out


@dataclass(frozen=True)
class QuantileEstimate:
    prob: float
    quantile: float
    stderr: float


def _order_stat_quantile(values: np.ndarray, prob: float) -> tuple[float, float]:
    v = np.sort(values)
    M = len(v)
    q = float(np.quantile(v, prob, method="inverted_cdf"))
    # distribution-free interval from binomial order statistics, ~ +-1 sd
    half = math.sqrt(M * prob * (1 - prob))
    lo = v[max(int(math.floor(M * prob - half)) - 1, 0)]
    hi = v[min(int(math.ceil(M * prob + half)) - 1, M - 1)]
    return q, float(hi - lo) / 2.0


def tz_null_quantile(
    n: int, z: float, prob: float, draws: int = 100_000, seed: int = 0,
    rng: RngStream | None = None,
) -> QuantileEstimate:
    """Empirical quantile of the limiting null mixture with its Monte Carlo error."""
    return tz_null_quantiles(n, z, [prob], draws, seed, rng)[0]


def tz_null_quantiles(
    n: int, z: float, probs: Sequence[float], draws: int = 100_000, seed: int = 0,
    rng: RngStream | None = None,
) -> list[QuantileEstimate]:
    for p in probs:
        if not 0 < p < 1:
            raise ValueError(f"probability {p} outside (0, 1)")
    values = sample_null_mixture(NullMixtureSpec(n, z, seed=seed), draws, rng)
    out = []
    for p in probs:
        q, se = _order_stat_quantile(values, p)
        out.append(QuantileEstimate(float(p), q, se))
    return out


# ---------------------------------------------------------------------------
# k-sample Anderson-Darling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ADResult:
    statistic: float
    pvalue: float
    standardized: float
    k: int

    def __iter__(self):
        yield self.statistic
        yield self.pvalue


def _ad_midrank(samples: list[np.ndarray]) -> float:
    pooled = np.sort(np.concatenate(samples))
    N = pooled.size
    zstar, counts = np.unique(pooled, return_counts=True)
    below = np.searchsorted(pooled, zstar, side="left")
    B = below + counts / 2.0
    denom = B * (N - B) - N * counts / 4.0
    total = 0.0
    for s in samples:
        s = np.sort(s)
        n_i = s.size
        lt = np.searchsorted(s, zstar, side="left")
        le = np.searchsorted(s, zstar, side="right")
        M = lt + (le - lt) / 2.0
        total += np.sum(counts / N * (N * M - B * n_i) ** 2 / denom) / n_i
    return total * (N - 1.0) / N


def _ad_variance(ns: Sequence[int]) -> float:
    k = len(ns)
    N = int(sum(ns))
    H = sum(1.0 / n for n in ns)
    harmonic = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, N))])  # h_0..h_{N-1}
    h = float(harmonic[N - 1])
    i = np.arange(1, N - 1)
    g = float(np.sum((h - harmonic[i]) / (N - i)))
    a = (4 * g - 6) * (k - 1) + (10 - 6 * g) * H
    b = (2 * g - 4) * k**2 + 8 * h * k + (2 * g - 14 * h - 4) * H - 8 * h + 4 * g - 6
    c = (6 * h + 2 * g - 2) * k**2 + (4 * h - 4 * g + 6) * k + (2 * h - 6) * H + 4 * h
    d = (2 * h + 6) * k**2 - 4 * h * k
    return (a * N**3 + b * N**2 + c * N + d) / ((N - 1.0) * (N - 2.0) * (N - 3.0))


AD_WEIGHT_VAR = 2.0 * (math.pi**2 - 9.0) / 3.0


def ad_limit_sf(x: float, dof: int, terms: int = 4000) -> float:
    """P(sum_j chi2_dof / (j(j+1)) > x): the limiting law of the k-sample statistic.

    Imhof's inversion for moderate tails; the largest-weight asymptotic
    ``3^(dof/2) P(chi2_dof > 2x)`` once the tail drops below 1e-9.
    """
    if x <= 0:
        return 1.0
    tail = 3.0 ** (dof / 2.0) * stats.chi2.sf(2.0 * x, dof)
    if tail < 1e-9:
        return float(tail)
    j = np.arange(1, terms + 1, dtype=float)
    w = 1.0 / (j * (j + 1.0))
    shift = dof / (terms + 1.0)  # mean of the omitted weights
    xs = x - shift

    def integrand(u):
        theta = 0.5 * dof * np.sum(np.arctan(w * u)) - 0.5 * xs * u
        rho = np.exp(0.25 * dof * np.sum(np.log1p((w * u) ** 2)))
        return math.sin(theta) / (u * rho)

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=500, epsabs=1e-12)
    p = 0.5 + val / math.pi
    return float(min(max(p, 0.0), 1.0))


def ad_ksample(samples: Sequence[Sequence[float]]) -> ADResult:
    """k-sample Anderson-Darling test with midrank tie handling.

    Returns the statistic A2_akN, its standardized form
    ``(A2 - (k-1)) / sigma_N``, and an asymptotic p-value.
    """
    samples = [np.asarray(s, dtype=float).ravel() for s in samples]
    k = len(samples)
    if k < 2:
        raise ValueError("need at least two samples")
    if any(s.size == 0 for s in samples):
        raise ValueError("every sample must be nonempty")
    pooled = np.concatenate(samples)
    if np.all(pooled == pooled[0]):
        raise DegenerateInput("all observations are identical")
    if pooled.size < 4:
        raise ValueError("need at least four observations in total")
    A2 = float(_ad_midrank(samples))
    sigma = math.sqrt(_ad_variance([s.size for s in samples]))
    m = k - 1
    T = (A2 - m) / sigma
    x = m + T * math.sqrt(m * AD_WEIGHT_VAR)
    return ADResult(A2, ad_limit_sf(x, m), T, k)


# ---------------------------------------------------------------------------
# Local power
# ---------------------------------------------------------------------------


def local_power(
    n: int,
    z: float,
    alpha: float,
    noncentrality: Mapping[int, Sequence[float]],
    draws: int = 100_000,
    seed: int = 0,
    critical: float | None = None,
) -> float:
    """Monte Carlo local power under the noncentral-chi-square limit.

    ``noncentrality`` maps a weight |lambda| to the noncentralities of the
    listed components at that weight; all other components stay central.
    Noncentral variables are drawn by inversion from shared uniforms, so the
    estimate is monotone in every noncentrality for a fixed seed.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    root = RngStream(seed)
    if critical is None:
        critical = tz_null_quantile(n, z, 1.0 - alpha, draws, rng=root.split(0)).quantile
    rng = root.split(1)
    K = truncation_weight(n, z)
    K = max(K, max(noncentrality, default=0))
    dfs = _degrees(n, K)
    total = np.zeros(draws)
    zk = 1.0
    for k in range(1, K + 1):
        zk *= z
        deltas = [float(d) for d in noncentrality.get(k, ())]
        if len(deltas) > dfs[k - 1]:
            raise ValueError(f"more noncentral components than p({n},{k})")
        central = dfs[k - 1] - len(deltas)
        term = rng.chisquare(central, size=draws) if central > 0 else np.zeros(draws)
        for d in deltas:
            u = rng.uniform(size=draws)
            if d < 0:
                raise ValueError("noncentralities must be nonnegative")
            term += stats.chi2.ppf(u, 1) if d == 0 else stats.ncx2.ppf(u, 1, d)
        total += zk * term
    return float(np.mean(total > critical))
