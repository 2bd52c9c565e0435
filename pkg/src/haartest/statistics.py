"""Test statistics for samples of rotation matrices.

Every statistic maps a sample (an ``(N, n, n)`` array or a list of
:class:`~haartest.linalg.GroupElement`) to a :class:`StatisticResult`.
The spectral statistics also have ``*_from_spectra`` entry points so that
a harness can reuse cosine spectra across statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from . import kernels as K
from .errors import DegenerateSpectrum, EmptySample, MixedDeterminants, NonPositiveParameter
from .linalg import as_stack, cos_spectra, det_signs, log_vandermonde, relative_cos_spectra
from .nulldist import NullMixtureSpec, sample_null_mixture
from .specfun import digamma, trigamma

PVALUE_METHODS = ("chi2_3", "chi2", "null_mixture_mc", "empirical_reference", "none")
EXPFAM_CLAMP = 1e-12


@dataclass
class StatisticResult:
    statistic_id: str
    value: float
    N: int
    n: int
    params: dict = field(default_factory=dict)
    pvalue: float | None = None
    pvalue_method: str = "none"
    warnings: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DegenerateSpectrum(f"{self.statistic_id} is not finite ({self.value})")
        if self.pvalue is not None and not 0.0 <= self.pvalue <= 1.0:
            raise ValueError(f"p-value {self.pvalue} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "statistic": self.statistic_id,
            "value": self.value,
            "N": self.N,
            "n": self.n,
            "params": self.params,
            "pvalue": self.pvalue,
            "pvalue_method": self.pvalue_method,
            "warnings": self.warnings,
        }


def _stack(sample) -> np.ndarray:
    stack = as_stack(sample)
    if stack.shape[0] == 0:
        raise EmptySample("the sample is empty")
    return stack


def empirical_pvalue(value: float, reference: Sequence[float]) -> float:
    """Upper-tail p-value against a reference cohort, (1 + #{ref >= v}) / (1 + R)."""
    ref = np.asarray(reference, dtype=float)
    return float((1 + np.count_nonzero(ref >= value)) / (1 + ref.size))


def _check_dets(dets: np.ndarray, allow_det_minus: bool, name: str) -> int:
    neg = int(np.count_nonzero(dets < 0))
    if neg and not allow_det_minus:
        raise MixedDeterminants(
            f"{name} needs det +1 elements; {neg} have det -1 (pass allow_det_minus)"
        )
    return neg


# ---------------------------------------------------------------------------
# Rayleigh and Gine
# ---------------------------------------------------------------------------


def rayleigh(sample, pvalue: bool = False) -> StatisticResult:
    """n N Tr(gbar^T gbar) with gbar the entrywise sample mean."""
    G = _stack(sample)
    N, n, _ = G.shape
    gbar = G.mean(axis=0)
    value = float(n * N * np.sum(np.abs(gbar) ** 2))
    res = StatisticResult("rayleigh", value, N, n)
    if pvalue:
        # asymptotically chi-square with n^2 degrees of freedom
        res.pvalue = float(stats.chi2.sf(value, n * n))
        res.pvalue_method = "chi2"
    return res


def gine(sample) -> StatisticResult:
    """(1/N) sum_{i,j} sqrt(Tr(I - g_i^T g_j)), radicand clamped at 0."""
    G = _stack(sample)
    N, n, _ = G.shape
    F = G.reshape(N, n * n)
    gram = np.real(F.conj() @ F.T)
    rad = np.clip(n - gram, 0.0, None)
    np.fill_diagonal(rad, 0.0)
    value = float(np.sum(np.sqrt(rad)) / N)
    return StatisticResult("gine", value, N, n)


# ---------------------------------------------------------------------------
# Exponential family / Selberg normalizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpFamParams:
    gamma: float = 1.0
    alpha: float = 1.5
    beta: float = 0.5

    def __post_init__(self):
        if min(self.gamma, self.alpha, self.beta) <= 0:
            raise NonPositiveParameter(
                f"Selberg parameters must be positive, got {(self.gamma, self.alpha, self.beta)}"
            )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.gamma, self.alpha, self.beta)


HAAR_EXPFAM = ExpFamParams()


@dataclass(frozen=True)
class SelbergDerivatives:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def selberg_derivatives(n: int, at: ExpFamParams = HAAR_EXPFAM) -> SelbergDerivatives:
    """Log Selberg integral A(gamma, alpha, beta) at rank n, with gradient and Hessian."""
    if not isinstance(at, ExpFamParams):
        at = ExpFamParams(*at)
    if n < 1:
        raise ValueError("rank must be positive")
    g, a, b = at.as_tuple()
    log2 = math.log(2.0)
    value = (g * n * (n - 1) + n * (a + b - 1)) * log2
    grad = np.array([n * (n - 1) * log2, n * log2, n * log2])
    hess = np.zeros((3, 3))
    lg1 = math.lgamma(1 + g)
    psi1, tri1 = digamma(1 + g), trigamma(1 + g)
    for j in range(n):
        u = 1 + g + j * g  # d/dg = 1 + j
        va = a + j * g  # d/da = 1, d/dg = j
        vb = b + j * g
        w = a + b + g * (n + j - 1)  # d/da = d/db = 1, d/dg = n + j - 1
        s = n + j - 1
        value += math.lgamma(u) + math.lgamma(va) + math.lgamma(vb) - lg1 - math.lgamma(w)
        pu, pa, pb, pw = digamma(u), digamma(va), digamma(vb), digamma(w)
        tu, ta, tb, tw = trigamma(u), trigamma(va), trigamma(vb), trigamma(w)
        grad[0] += (1 + j) * pu + j * pa + j * pb - psi1 - s * pw
        grad[1] += pa - pw
        grad[2] += pb - pw
        hess[0, 0] += (1 + j) ** 2 * tu + j * j * (ta + tb) - tri1 - s * s * tw
        hess[0, 1] += j * ta - s * tw
        hess[0, 2] += j * tb - s * tw
        hess[1, 1] += ta - tw
        hess[2, 2] += tb - tw
        hess[1, 2] += -tw
    hess[1, 0], hess[2, 0], hess[2, 1] = hess[0, 1], hess[0, 2], hess[1, 2]
    return SelbergDerivatives(value, grad, hess)


def expfam_sufficient(X: np.ndarray) -> np.ndarray:
    """(T1, T2, T3) per spectrum; X must be free of coincident cosines."""
    X = np.clip(np.asarray(X, dtype=float), -1.0 + EXPFAM_CLAMP, 1.0 - EXPFAM_CLAMP)
    _, logv = log_vandermonde(X)
    t1 = 2.0 * logv
    t2 = np.sum(np.log1p(-X), axis=-1)
    t3 = np.sum(np.log1p(X), axis=-1)
    return np.stack([t1, t2, t3], axis=-1)


def expfam_from_spectra(
    X: np.ndarray, n: int, params: K.KernelParams | None = None
) -> StatisticResult:
    X = np.asarray(X, dtype=float)
    N, m = X.shape
    if N == 0:
        raise EmptySample("the sample is empty")
    params = params or K.KernelParams(z=0.5)
    X, jittered = K.regularize_spectra(X, params)
    T = expfam_sufficient(X)
    if not np.all(np.isfinite(T)):
        raise DegenerateSpectrum("sufficient statistic is not finite")
    sel = selberg_derivatives(m)
    diff = T.mean(axis=0) - sel.gradient
    cov = sel.hessian / N
    value = float(diff @ np.linalg.solve(cov, diff))
    return StatisticResult(
        "expfam",
        value,
        N,
        n,
        params={"gamma": 1.0, "alpha": 1.5, "beta": 0.5},
        pvalue=float(stats.chi2.sf(value, 3)),
        pvalue_method="chi2_3",
        warnings={"jittered_spectra": jittered},
    )


def expfam_statistic(sample, allow_det_minus: bool = False, strict: bool = False) -> StatisticResult:
    """Quadratic form of the averaged sufficient statistics; chi2_3 p-value."""
    G = _stack(sample)
    dets = det_signs(G)
    neg = _check_dets(dets, allow_det_minus, "expfam")
    X = cos_spectra(G, dets)
    res = expfam_from_spectra(X, G.shape[-1], K.KernelParams(z=0.5, strict=strict))
    res.warnings["det_minus_overrides"] = neg
    return res


# ---------------------------------------------------------------------------
# Spectral statistic T_z
# ---------------------------------------------------------------------------


def _pair_sum(values: np.ndarray, i_idx: np.ndarray, j_idx: np.ndarray) -> float:
    """sum over ordered pairs given values on the upper triangle i <= j."""
    diag = i_idx == j_idx
    return float(np.sum(values[diag]) + 2.0 * np.sum(values[~diag]))


def _kernel_type(G: np.ndarray) -> str:
    if np.iscomplexobj(G):
        return "A"
    return "B" if G.shape[-1] % 2 else "D"


def unitary_eigenvalues(G: np.ndarray) -> np.ndarray:
    return np.linalg.eigvals(G)


def tz_from_spectra(
    X: np.ndarray,
    params: K.KernelParams,
    kind: str = "B",
    n: int | None = None,
) -> StatisticResult:
    """T_z from per-element spectra (cosines, or unitary eigenvalues for A)."""
    X = np.asarray(X)
    N, m = X.shape
    if N == 0:
        raise EmptySample("the sample is empty")
    degenerate = 0
    if kind != "A":
        X, degenerate = K.prepare_spectra(X, params)
    i_idx, j_idx = np.triu_indices(N)
    vals = K.kernel_pair_values(kind, X, i_idx, j_idx, params)
    total = _pair_sum(np.real(vals), i_idx, j_idx)
    value = total / N
    if n is None:
        n = 2 * m + 1 if kind == "B" else (2 * m if kind in "CD" else m)
    return StatisticResult(
        "tz",
        value,
        N,
        n,
        params={"z": params.z, "kernel": kind},
        warnings={"degenerate_spectra": degenerate},
    )


def t_z(
    sample,
    params: K.KernelParams | float,
    allow_det_minus: bool = False,
    pvalue: str = "none",
    reference: Sequence[float] | None = None,
    mixture_draws: int = 100_000,
    seed: int = 0,
) -> StatisticResult:
    """Spectral statistic N sum_{lambda != 0} z^|lambda| |chi_hat(lambda)|^2.

    ``pvalue`` is ``"none"``, ``"null_mixture_mc"`` (limiting chi-square
    mixture, type B only) or ``"empirical_reference"`` (needs ``reference``).
    """
    params = params if isinstance(params, K.KernelParams) else K.KernelParams(z=float(params))
    G = _stack(sample)
    kind = _kernel_type(G)
    neg = 0
    if kind == "A":
        X = unitary_eigenvalues(G)
    else:
        dets = det_signs(G)
        neg = _check_dets(dets, allow_det_minus, "T_z")
        X = cos_spectra(G, dets)
    res = tz_from_spectra(X, params, kind, n=G.shape[-1])
    res.warnings["det_minus_overrides"] = neg
    _attach_pvalue(res, pvalue, reference, kind, X.shape[1], params.z, mixture_draws, seed)
    return res


def _attach_pvalue(res, method, reference, kind, rank, z, draws, seed):
    if method == "none":
        return
    if method == "empirical_reference":
        if reference is None:
            raise ValueError("empirical_reference p-values need a reference cohort")
        res.pvalue = empirical_pvalue(res.value, reference)
    elif method == "null_mixture_mc":
        if kind != "B":
            raise ValueError("the null mixture is only provided for type B")
        draws_ = sample_null_mixture(NullMixtureSpec(rank, z, seed=seed), draws)
        res.pvalue = float((1 + np.count_nonzero(draws_ >= res.value)) / (1 + draws))
    else:
        raise ValueError(f"unsupported p-value method {method!r}")
    res.pvalue_method = method


# ---------------------------------------------------------------------------
# Full-group statistic U_{z,q}
# ---------------------------------------------------------------------------


PAIR_CHUNK = 2048


def u_zq(
    sample,
    params: K.KernelParams,
    pvalue: str = "none",
    reference: Sequence[float] | None = None,
    chunk: int = PAIR_CHUNK,
) -> StatisticResult:
    """(1/N) sum_{k,l} W(spectrum of g_k g_l^T) with the closed-form U summand W."""
    if params.q is None:
        raise ValueError("U_{z,q} needs q")
    G = _stack(sample)
    N, n, _ = G.shape
    kind = _kernel_type(G)
    i_idx, j_idx = np.triu_indices(N, k=1)
    off = 0.0
    if kind == "A":
        rank = n
        for s in range(0, len(i_idx), chunk):
            ii, jj = i_idx[s : s + chunk], j_idx[s : s + chunk]
            rel = G[ii].conj().swapaxes(-1, -2) @ G[jj]
            off += float(np.sum(np.real(K.uq_weight_values("A", np.linalg.eigvals(rel), params))))
    else:
        dets = det_signs(G)
        if np.any(dets != dets[0]):
            raise MixedDeterminants("U_{z,q} needs a constant determinant across the sample")
        rank = n // 2
        for s in range(0, len(i_idx), chunk):
            ii, jj = i_idx[s : s + chunk], j_idx[s : s + chunk]
            X = relative_cos_spectra(G, ii, jj, dets)
            off += float(np.sum(K.uq_weight_values(kind, X, params)))
    diag = K.uq_diagonal(kind, rank, params)
    value = (N * diag + 2.0 * off) / N
    res = StatisticResult(
        "uzq",
        value,
        N,
        n,
        params={"z": params.z, "q": params.q, "kernel": kind,
                "q_levels": params.q_levels if params.q_levels is not None else rank},
    )
    if pvalue != "none":
        if pvalue != "empirical_reference":
            raise ValueError("U_{z,q} p-values are available only against an empirical reference")
        _attach_pvalue(res, pvalue, reference, kind, rank, params.z, 0, 0)
    return res


# ---------------------------------------------------------------------------
# Trace powers
# ---------------------------------------------------------------------------


def trace_powers_from_spectra(X: np.ndarray, k: int, dim: int, dets: np.ndarray) -> np.ndarray:
    """Tr(g^k) per element from its cosine spectrum."""
    theta = np.arccos(np.clip(X, -1.0, 1.0))
    base = np.where(dim % 2 == 1, np.asarray(dets, dtype=float) ** k, 0.0)
    return base + 2.0 * np.sum(np.cos(k * theta), axis=-1)


def trace_power(sample, k: int) -> StatisticResult:
    """(1/N) sum_i Tr(g_i^k)."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    G = _stack(sample)
    N, n, _ = G.shape
    if np.iscomplexobj(G):
        traces = np.real(np.sum(unitary_eigenvalues(G) ** k, axis=-1))
    else:
        dets = det_signs(G)
        traces = trace_powers_from_spectra(cos_spectra(G, dets), k, n, dets)
    return StatisticResult("trace", float(np.mean(traces)), N, n, params={"k": k})
