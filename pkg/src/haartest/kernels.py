"""Reproducing kernels of the character-series statistics.

Types ``B``, ``C`` and ``D`` take cosine spectra (``x_i = cos(theta_i)``)
and are evaluated entirely in real arithmetic. Type ``A`` takes unitary
eigenvalues (complex numbers on the unit circle) and returns complex values;
the double sums over a sample are real.

The determinant formulas are evaluated in signed-log form: the prefactor
``(4z)^(m choose 2)`` and the two Vandermonde products over/underflow doubles
long before ``m = 25``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import DegenerateAngles, DegenerateSpectrum
from .linalg import log_vandermonde
from .nulldist import partition_count

KERNEL_TYPES = ("A", "B", "C", "D")

DEFAULT_JITTER = 1e-7
DEFAULT_DEGENERACY_TOL = 1e-10
PAIR_CHUNK = 4096
# relative accuracy of the coincidence limit is roughly cond * 1e-16
CONFLUENT_MAX_COND = 1e10


@dataclass(frozen=True)
class KernelParams:
    z: float
    q: float | None = None
    jitter: float = DEFAULT_JITTER
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
    strict: bool = False
    # coincident cosines: exact coincidence limit ("confluent") or spread by jitter
    degenerate: str = "confluent"
    # number of q-levels in the U-family products; None means the group rank
    q_levels: int | None = None

    def __post_init__(self):
        if not 0.0 < self.z < 1.0:
            raise ValueError(f"z must lie in (0, 1), got {self.z}")
        if self.q is not None and not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")
        if self.degenerate not in ("confluent", "jitter"):
            raise ValueError(f"degenerate must be confluent or jitter, got {self.degenerate!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def _params(params, z=None) -> KernelParams:
    if isinstance(params, KernelParams):
        return params
    if params is None:
        return KernelParams(z=z)
    return KernelParams(z=float(params))


# ---------------------------------------------------------------------------
# Degenerate spectra
# ---------------------------------------------------------------------------


def min_gap(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] < 2:
        return np.full(X.shape[:-1], np.inf)
    return np.min(np.abs(np.diff(X, axis=-1)), axis=-1)


def _spread(row: np.ndarray, tol: float, delta: float) -> np.ndarray:
    out = row.copy()
    m = len(row)
    start = 0
    while start < m:
        stop = start + 1
        while stop < m and abs(row[stop - 1] - row[stop]) <= tol:
            stop += 1
        size = stop - start
        if size > 1:
            steps = delta * np.arange(size)
            if row[start] <= -1.0 + tol:
                # cluster pinned at -1: push upward, keeping descending order
                out[start:stop] = row[start] + steps[::-1]
            else:
                out[start:stop] = row[start] - steps
        start = stop
    return np.clip(out, -1.0, 1.0)


def regularize_spectra(
    X: np.ndarray, params: KernelParams
) -> tuple[np.ndarray, int]:
    """Separate coincident cosines deterministically.

    Each run of cosines that agree within ``degeneracy_tol`` is spread in
    steps of ``jitter`` (downward, or upward for runs at -1). Returns the
    regularized spectra and the number of spectra that needed it.
    """
    X = np.asarray(X, dtype=float)
    flat = X.reshape(-1, X.shape[-1])
    bad = np.flatnonzero(min_gap(flat) <= params.degeneracy_tol)
    if bad.size == 0:
        return X, 0
    if params.strict or params.jitter == 0:
        raise DegenerateSpectrum(
            f"{bad.size} spectra have coincident cosines (strict mode)"
            if params.strict
            else f"{bad.size} spectra have coincident cosines and jitter is 0"
        )
    out = flat.copy()
    for b in bad:
        out[b] = _spread(flat[b], params.degeneracy_tol, params.jitter)
    still = min_gap(out[bad]) <= params.degeneracy_tol
    if np.any(still):
        raise DegenerateSpectrum("spectrum still degenerate after jitter")
    return out.reshape(X.shape), int(bad.size)


# ---------------------------------------------------------------------------
# Cauchy kernels
# ---------------------------------------------------------------------------


def _entry_matrix(kind: str, x: np.ndarray, y: np.ndarray, z: float) -> np.ndarray:
    """Matrix entries of the B/C/D determinants in cosine form.

    x: (..., m), y: (..., m) -> (..., m, m) with rows indexed by x.
    """
    c = x[..., :, None]
    d = y[..., None, :]
    z2 = z * z
    den = (1.0 + z2) ** 2 - 4.0 * z * (1.0 + z2) * c * d + 4.0 * z2 * (c * c + d * d - 1.0)
    if kind == "B":
        num = (1.0 + z) ** 2 + 2.0 * z * (c + d)
    elif kind == "C":
        return 1.0 / den
    elif kind == "D":
        num = 4.0 * (1.0 + z2) - 4.0 * z * (3.0 + z2) * c * d + 8.0 * z2 * (c * c + d * d - 1.0)
    else:
        raise ValueError(kind)
    return num / den


def _log_prefactor(kind: str, m: int, z: float) -> float:
    pairs = m * (m - 1) // 2
    base = -pairs * math.log(4.0 * z)
    if kind == "B":
        return base + m * math.log1p(-z)
    if kind == "C":
        return base + m * math.log1p(-z * z)
    return base


def _bcd_pairs(
    kind: str,
    X: np.ndarray,
    Y: np.ndarray,
    vx: tuple[np.ndarray, np.ndarray],
    vy: tuple[np.ndarray, np.ndarray],
    z: float,
) -> np.ndarray:
    """K(x_p, y_p) for aligned rows; vx, vy are precomputed Vandermonde logs."""
    m = X.shape[-1]
    if m == 0:
        # rank 0: every character series is empty
        return np.zeros(X.shape[0])
    sdet, ldet = np.linalg.slogdet(_entry_matrix(kind, X, Y, z))
    logv = _log_prefactor(kind, m, z) + ldet - vx[1] - vy[1]
    sign = sdet * vx[0] * vy[0]
    return sign * np.exp(logv) - 1.0


def _type_a(x: np.ndarray, y: np.ndarray, z: float) -> np.ndarray:
    prod = z * x[..., :, None] * np.conj(y[..., None, :])
    return np.exp(-np.sum(np.log1p(-prod), axis=(-2, -1))) - 1.0


def _local_coefficients(kind: str, c: float, d: float, z: float):
    """Coefficients of numerator and denominator around (c, d) as dicts {(i, j): a_ij}."""
    z2 = z * z
    den = {
        (0, 0): (1.0 + z2) ** 2 - 4.0 * z * (1.0 + z2) * c * d + 4.0 * z2 * (c * c + d * d - 1.0),
        (1, 0): -4.0 * z * (1.0 + z2) * d + 8.0 * z2 * c,
        (0, 1): -4.0 * z * (1.0 + z2) * c + 8.0 * z2 * d,
        (2, 0): 4.0 * z2,
        (0, 2): 4.0 * z2,
        (1, 1): -4.0 * z * (1.0 + z2),
    }
    if kind == "B":
        num = {(0, 0): (1.0 + z) ** 2 + 2.0 * z * (c + d), (1, 0): 2.0 * z, (0, 1): 2.0 * z}
    elif kind == "C":
        num = {(0, 0): 1.0}
    else:
        num = {
            (0, 0): 4.0 * (1.0 + z2) - 4.0 * z * (3.0 + z2) * c * d + 8.0 * z2 * (c * c + d * d - 1.0),
            (1, 0): -4.0 * z * (3.0 + z2) * d + 16.0 * z2 * c,
            (0, 1): -4.0 * z * (3.0 + z2) * c + 16.0 * z2 * d,
            (2, 0): 8.0 * z2,
            (0, 2): 8.0 * z2,
            (1, 1): -4.0 * z * (3.0 + z2),
        }
    return num, den


def taylor_table(kind: str, c: float, d: float, z: float, R: int, U: int) -> np.ndarray:
    """Mixed Taylor coefficients f_{r,u} = d_c^r d_d^u f / (r! u!) of one matrix entry, r <= R, u <= U.

    The entry is num/den with polynomials of degree <= 2, so den * f = num
    gives a short recurrence; each row in r is a power series division in u.
    """
    num, den = _local_coefficients(kind, c, d, z)
    a = [den[(0, 0)], den[(0, 1)], den[(0, 2)]]
    out = np.zeros((R + 1, U + 1))
    for r in range(R + 1):
        rhs = np.zeros(U + 1)
        for (i, j), v in num.items():
            if i == r and j <= U:
                rhs[j] += v
        if r >= 1:
            prev = out[r - 1]
            rhs -= den[(1, 0)] * prev
            rhs[1:] -= den[(1, 1)] * prev[:-1]
        if r >= 2:
            rhs -= den[(2, 0)] * out[r - 2]
        out[r] = lfilter([1.0], a, rhs)
    return out


@dataclass(frozen=True)
class _Layout:
    """Cluster structure of one sorted cosine spectrum."""

    centers: np.ndarray  # per index, the center of its cluster
    orders: np.ndarray  # per index, the position inside its cluster
    blocks: tuple  # (start, stop) per cluster
    sign: float  # sign of the cross-cluster Vandermonde times the cluster signs
    logmag: float


def _layout(x: np.ndarray, tol: float) -> _Layout:
    m = len(x)
    blocks = []
    start = 0
    while start < m:
        stop = start + 1
        while stop < m and x[stop - 1] - x[stop] <= tol:
            stop += 1
        blocks.append((start, stop))
        start = stop
    centers = np.empty(m)
    orders = np.empty(m, dtype=int)
    ids = np.empty(m, dtype=int)
    sign = 1.0
    for b, (a, e) in enumerate(blocks):
        centers[a:e] = np.mean(x[a:e])
        orders[a:e] = np.arange(e - a)
        ids[a:e] = b
        s = e - a
        if (s * (s - 1) // 2) % 2:
            sign = -sign
    iu, ju = np.triu_indices(m, k=1)
    cross = ids[iu] != ids[ju]
    diffs = centers[iu[cross]] - centers[ju[cross]]
    if np.any(diffs <= 0):
        raise DegenerateSpectrum("clusters of the spectrum are not separated")
    return _Layout(centers, orders, tuple(blocks), sign, float(np.sum(np.log(diffs))))


def _confluent_value(kind: str, lx: _Layout, ly: _Layout, z: float) -> float:
    """Coincidence limit of the determinant ratio for clustered spectra.

    Rows of a cluster become Taylor coefficients in x at its center (the
    divided-difference limit), columns likewise in y; within-cluster
    Vandermonde factors cancel and only cross-cluster factors remain.
    """
    M = _entry_matrix(kind, lx.centers, ly.centers, z)
    for a, e in lx.blocks:
        for b, f in ly.blocks:
            if e - a == 1 and f - b == 1:
                continue
            T = taylor_table(kind, lx.centers[a], ly.centers[b], z, e - a - 1, f - b - 1)
            M[a:e, b:f] = T
    # equilibrate by powers of two (exact), then check the limit is trustworthy
    r = np.exp2(-np.round(np.log2(np.max(np.abs(M), axis=1))))
    M = M * r[:, None]
    c = np.exp2(-np.round(np.log2(np.max(np.abs(M), axis=0))))
    M = M * c
    cond = np.linalg.cond(M)
    if not cond < CONFLUENT_MAX_COND:
        raise DegenerateSpectrum(
            f"coincidence limit is ill-conditioned in double precision (cond {cond:.1e}); "
            "clusters of repeated eigenvalues are too large"
        )
    sdet, ldet = np.linalg.slogdet(M)
    ldet -= np.sum(np.log(r)) + np.sum(np.log(c))
    m = len(lx.centers)
    logv = _log_prefactor(kind, m, z) + ldet - lx.logmag - ly.logmag
    with np.errstate(over="ignore"):
        return float(sdet * lx.sign * ly.sign * np.exp(logv) - 1.0)


def _degenerate_rows(X: np.ndarray, tol: float) -> np.ndarray:
    return min_gap(X) <= tol


def cauchy_kernel(kind: str, x, y, params) -> float | complex:
    """Closed-form kernel ``sum_{lambda != 0} z^|lambda| chi_lambda(x) chi_lambda(y)``.

    For ``B``/``C``/``D`` the arguments are cosine spectra; for ``A`` they
    are unitary eigenvalues. ``params`` is a :class:`KernelParams` or ``z``.
    """
    params = _params(params)
    kind = kind.upper()
    if kind not in KERNEL_TYPES:
        raise ValueError(f"unknown kernel type {kind!r}")
    if kind == "A":
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        return complex(_type_a(x, y, params.z))
    x = np.sort(np.asarray(getattr(x, "x", x), dtype=float))[::-1]
    y = np.sort(np.asarray(getattr(y, "x", y), dtype=float))[::-1]
    if x.shape != y.shape:
        raise ValueError("spectra must have equal rank")
    X = np.stack([x, y])
    idx = np.array([0])
    return float(kernel_pair_values(kind, X, idx, idx + 1, params)[0])


def prepare_spectra(X: np.ndarray, params: KernelParams) -> tuple[np.ndarray, int]:
    """Sort cosine spectra descending and apply the degeneracy policy.

    Returns the spectra to hand to :func:`kernel_pair_values` and the number
    of degenerate spectra. Strict mode raises on any degenerate spectrum;
    the ``jitter`` policy spreads clusters; the default leaves them for the
    exact coincidence limit.
    """
    X = np.sort(np.asarray(X, dtype=float), axis=-1)[..., ::-1]
    bad = int(np.count_nonzero(_degenerate_rows(X.reshape(-1, X.shape[-1]), params.degeneracy_tol)))
    if bad and params.strict:
        raise DegenerateSpectrum(f"{bad} spectra have coincident cosines (strict mode)")
    if bad and params.degenerate == "jitter":
        X, _ = regularize_spectra(X, params)
    return X, bad


def kernel_pair_values(
    kind: str,
    X: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    params: KernelParams,
    chunk: int = PAIR_CHUNK,
) -> np.ndarray:
    """Kernel values for pairs (X[i], X[j]).

    For B/C/D the rows of X must be sorted descending (see
    :func:`prepare_spectra`); rows with coincident cosines are evaluated in
    the coincidence limit, or rejected in strict mode.
    """
    out_dtype = complex if kind == "A" else float
    out = np.empty(len(i_idx), dtype=out_dtype)
    if kind == "A":
        for s in range(0, len(i_idx), chunk):
            sl = slice(s, s + chunk)
            out[sl] = _type_a(X[i_idx[sl]], X[j_idx[sl]], params.z)
        return out
    X = np.asarray(X, dtype=float)
    degenerate = _degenerate_rows(X, params.degeneracy_tol) if X.shape[-1] > 1 else np.zeros(len(X), bool)
    if np.any(degenerate) and params.strict:
        raise DegenerateSpectrum("spectrum has coincident cosines (strict mode)")
    slow = degenerate[i_idx] | degenerate[j_idx]
    fast = np.flatnonzero(~slow)
    v = log_vandermonde(X)
    for s in range(0, len(fast), chunk):
        sel = fast[s : s + chunk]
        ii, jj = i_idx[sel], j_idx[sel]
        out[sel] = _bcd_pairs(
            kind, X[ii], X[jj], (v[0][ii], v[1][ii]), (v[0][jj], v[1][jj]), params.z
        )
    slow = np.flatnonzero(slow)
    if slow.size:
        # identical spectra share layouts and values (identity samples, repeated elements)
        _, row_class = np.unique(X, axis=0, return_inverse=True)
        row_class = row_class.ravel()
        layouts: dict[int, _Layout] = {}
        memo: dict[tuple[int, int], float] = {}
        for p in slow:
            ci, cj = int(row_class[i_idx[p]]), int(row_class[j_idx[p]])
            key = (ci, cj)
            if key not in memo:
                for c, row in ((ci, i_idx[p]), (cj, j_idx[p])):
                    if c not in layouts:
                        layouts[c] = _layout(X[row], params.degeneracy_tol)
                memo[key] = _confluent_value(kind, layouts[ci], layouts[cj], params.z)
            out[p] = memo[key]
    return out


# ---------------------------------------------------------------------------
# U-family weight sums
# ---------------------------------------------------------------------------


def _q_levels(params: KernelParams, rank: int) -> np.ndarray:
    if params.q is None:
        raise ValueError("the U-family needs q")
    levels = rank if params.q_levels is None else params.q_levels
    return params.z * params.q ** np.arange(levels)


def _uq_log_numerator(kind: str, a: np.ndarray) -> float:
    iu, ju = np.triu_indices(len(a), k=0 if kind == "D" else 1)
    out = float(np.sum(np.log1p(-a[iu] * a[ju])))
    if kind == "B":
        out += float(np.sum(np.log1p(a)))
    return out


def uq_weight_values(kind: str, X: np.ndarray, params: KernelParams) -> np.ndarray:
    """Vectorized U-family summand for rows of X (cosines, or eigenvalues for A)."""
    kind = kind.upper()
    X = np.asarray(X)
    rank = X.shape[-1]
    a = _q_levels(params, rank)
    if kind == "A":
        prod = a[None, :] * X[..., :, None]  # (..., n, levels)
        return np.exp(-np.sum(np.log1p(-prod), axis=(-2, -1))) - 1.0
    if kind not in ("B", "C", "D"):
        raise ValueError(f"unknown kernel type {kind!r}")
    X = X.astype(float)
    num = _uq_log_numerator(kind, a)
    # log(1 - 2 a c + a^2), summed over levels and angles
    den = np.zeros(X.shape[:-1])
    for ai in a:
        den += np.sum(np.log1p(ai * (ai - 2.0 * X)), axis=-1)
    return np.exp(num - den) - 1.0


def uq_weight_sum(kind: str, x, params: KernelParams) -> float | complex:
    """``sum_{lambda != 0} c_lambda(z, q) chi_lambda`` for one relative spectrum."""
    kind = kind.upper()
    x = np.asarray(getattr(x, "x", x))
    val = uq_weight_values(kind, x[None], params)[0]
    return complex(val) if kind == "A" else float(val)


def uq_diagonal(kind: str, rank: int, params: KernelParams) -> float:
    """The U-family summand at the identity (all cosines 1)."""
    if kind.upper() == "A":
        return float(uq_weight_values("A", np.ones((1, rank), dtype=complex), params)[0].real)
    return float(uq_weight_values(kind, np.ones((1, rank)), params)[0])


# ---------------------------------------------------------------------------
# Partitions and characters (verification oracles)
# ---------------------------------------------------------------------------


def partitions(k: int, max_parts: int, max_part: int | None = None) -> Iterator[tuple[int, ...]]:
    """Partitions of k into at most ``max_parts`` parts, each <= ``max_part``."""
    if max_part is None:
        max_part = k
    if k == 0:
        yield ()
        return
    if max_parts == 0:
        return
    for first in range(min(k, max_part), 0, -1):
        for rest in partitions(k - first, max_parts - 1, first):
            yield (first,) + rest


def _weyl_dimension(l: np.ndarray, r: np.ndarray, squared: bool) -> float:
    """prod_{i<j} (l_i^p - l_j^p) / (r_i^p - r_j^p) [* prod l_i / r_i]."""
    p = 2 if squared else 1
    iu, ju = np.triu_indices(len(l), k=1)
    out = float(np.prod((l[iu] ** p - l[ju] ** p) / (r[iu] ** p - r[ju] ** p)))
    return out * float(np.prod(l / r)) if squared else out


def _weyl_ratio(lam: Sequence[int], angles: np.ndarray, shift: float) -> float:
    m = len(angles)
    lam = list(lam) + [0] * (m - len(lam))
    if len(lam) > m:
        raise ValueError("partition has more parts than the rank")
    j = np.arange(1, m + 1)
    if np.all(np.abs(np.asarray(angles, dtype=float)) < 1e-12):
        return _weyl_dimension(np.asarray(lam) + m - j + shift, m - j + shift, squared=True)
    th = np.asarray(angles, dtype=float)[:, None]
    num = np.linalg.det(np.sin((np.asarray(lam) + m - j + shift) * th))
    den = np.linalg.det(np.sin((m - j + shift) * th))
    if abs(den) < 1e-12:
        raise DegenerateAngles("Weyl denominator vanishes at these angles")
    return float(num / den)


def character(kind: str, lam: Sequence[int], angles) -> float | complex:
    """Irreducible character by the Weyl character formula.

    ``angles`` are eigen-angles theta_i (for ``A``: phases of the n
    eigenvalues). Type ``D`` is not provided.
    """
    kind = kind.upper()
    lam = tuple(int(p) for p in lam if p)
    if kind == "B":
        return _weyl_ratio(lam, angles, 0.5)
    if kind == "C":
        return _weyl_ratio(lam, angles, 1.0)
    if kind == "A":
        th = np.asarray(angles, dtype=float)
        n = len(th)
        if len(lam) > n:
            raise ValueError("partition has more parts than the rank")
        full = np.array(list(lam) + [0] * (n - len(lam)))
        j = np.arange(1, n + 1)
        if np.all(np.abs(th) < 1e-12):
            return complex(_weyl_dimension(full + n - j, n - j + 0.0, squared=False))
        xs = np.exp(1j * th)[:, None]
        num = np.linalg.det(xs ** (full + n - j))
        den = np.linalg.det(xs ** (n - j))
        if abs(den) < 1e-12:
            raise DegenerateAngles("Vandermonde vanishes at these angles")
        return complex(num / den)
    raise NotImplementedError(f"no character oracle for type {kind}")


def _as_angles(kind: str, v) -> np.ndarray:
    v = np.asarray(getattr(v, "x", v))
    if kind == "A":
        return np.angle(v.astype(complex))
    return np.arccos(np.clip(v.astype(float), -1.0, 1.0))


def kernel_series_oracle(kind: str, x, y, params, max_weight: int) -> float | complex:
    """Partial character sum over all partitions of weight 1..L."""
    params = _params(params)
    kind = kind.upper()
    th = _as_angles(kind, x)
    ph = _as_angles(kind, y)
    m = len(th)
    total = 0.0 + 0.0j if kind == "A" else 0.0
    for k in range(1, max_weight + 1):
        zk = params.z**k
        for lam in partitions(k, m):
            cx = character(kind, lam, th)
            cy = character(kind, lam, ph)
            total += zk * cx * (np.conj(cy) if kind == "A" else cy)
    return total


def series_tail_bound(rank: int, z: float, max_weight: int, char_bound: float) -> float:
    """Crude bound on the omitted terms when every |chi| <= char_bound."""
    full = 1.0
    for i in range(1, rank + 1):
        full /= 1.0 - z**i
    partial = sum(z**k * partition_count(rank, k) for k in range(max_weight + 1))
    return char_bound**2 * max(full - partial, 0.0)
