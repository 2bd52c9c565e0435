"""Dense matrix primitives for samples of orthogonal matrices.

The central routine is :func:`cos_spectra`, which turns a stack of real
orthogonal matrices into the cosines of their eigen-angles using only the
symmetric part ``(g + g.T) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonSquare,
    NotOrthogonal,
    NotSymmetric,
    PairingFailure,
)

ORTHOGONALITY_TOL = 1e-9
PAIRING_TOL = 1e-6

GROUPS = ("A", "B", "C", "D")


# ---------------------------------------------------------------------------
# Signed logarithms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignedLog:
    """A real number stored as ``sign * exp(logmag)``."""

    sign: int
    logmag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or 1")
        if self.sign == 0 and self.logmag != -math.inf:
            object.__setattr__(self, "logmag", -math.inf)

    @classmethod
    def from_value(cls, value: float) -> "SignedLog":
        if value == 0:
            return cls(0, -math.inf)
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    @classmethod
    def product(cls, values: Iterable[float]) -> "SignedLog":
        arr = np.asarray(list(values), dtype=float)
        if arr.size == 0:
            return cls(1, 0.0)
        if np.any(arr == 0):
            return cls(0, -math.inf)
        sign = -1 if np.count_nonzero(arr < 0) % 2 else 1
        return cls(sign, float(np.sum(np.log(np.abs(arr)))))

    def __mul__(self, other: "SignedLog") -> "SignedLog":
        if not isinstance(other, SignedLog):
            other = SignedLog.from_value(other)
        return SignedLog(self.sign * other.sign, self.logmag + other.logmag)

    __rmul__ = __mul__

    def __truediv__(self, other: "SignedLog") -> "SignedLog":
        if not isinstance(other, SignedLog):
            other = SignedLog.from_value(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero SignedLog")
        return SignedLog(self.sign * other.sign, self.logmag - other.logmag)

    def __pow__(self, k: int) -> "SignedLog":
        k = int(k)
        return SignedLog(self.sign**k if k else 1, self.logmag * k if k else 0.0)

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.logmag)


def signed_logdet(A: np.ndarray) -> SignedLog:
    """log|det A| from an LU factorization with pivot-sign tracking."""
    sign, logabs = np.linalg.slogdet(np.asarray(A, dtype=float))
    return SignedLog(int(sign), float(logabs))


def log_vandermonde(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sign and log-magnitude of ``prod_{i<j} (x_i - x_j)`` along the last axis."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    iu, ju = np.triu_indices(m, k=1)
    diffs = x[..., iu] - x[..., ju]
    with np.errstate(divide="ignore"):
        logmag = np.sum(np.log(np.abs(diffs)), axis=-1)
    neg = np.count_nonzero(diffs < 0, axis=-1)
    sign = np.where(neg % 2 == 1, -1.0, 1.0)
    sign = np.where(np.any(diffs == 0, axis=-1), 0.0, sign)
    return sign, logmag


# ---------------------------------------------------------------------------
# Group elements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupElement:
    """A validated orthogonal (or unitary, for group ``A``) matrix."""

    entries: np.ndarray = field(repr=False)
    det_sign: int
    group: str

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def rank(self) -> int:
        return self.dim if self.group == "A" else self.dim // 2

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def default_group(dim: int) -> str:
    return "B" if dim % 2 else "D"


def orthogonality_defect(M: np.ndarray) -> float:
    M = np.asarray(M)
    n = M.shape[-1]
    return float(np.max(np.abs(M.conj().swapaxes(-1, -2) @ M - np.eye(n))))


def validate_group_element(
    M, tol: float = ORTHOGONALITY_TOL, group: str | None = None
) -> GroupElement:
    """Check ``M`` is square and orthogonal within ``tol`` and tag it.

    Complex entries are accepted only for group ``A`` (unitary).
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if np.iscomplexobj(M):
        if group not in (None, "A"):
            raise ValueError(f"complex entries are only allowed for group A, not {group}")
        group = "A"
    else:
        M = M.astype(float, copy=False)
        group = group or default_group(M.shape[0])
    if group not in GROUPS:
        raise ValueError(f"unknown group label {group!r}")
    defect = orthogonality_defect(M)
    if defect > tol:
        raise NotOrthogonal(f"orthogonality defect {defect:.3g} exceeds tol {tol:.3g}")
    if group == "A":
        det_sign = 1
    else:
        det_sign = 1 if np.linalg.det(M) > 0 else -1
    return GroupElement(np.array(M, copy=True), det_sign, group)


def as_stack(sample) -> np.ndarray:
    """Coerce a sample (list of GroupElement or arrays, or an array) to (N, n, n)."""
    if isinstance(sample, np.ndarray):
        arr = sample
    else:
        arr = np.stack([np.asarray(g) for g in sample]) if len(sample) else np.empty((0, 0, 0))
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise NonSquare(f"sample must have shape (N, n, n), got {arr.shape}")
    return arr


def det_signs(stack: np.ndarray) -> np.ndarray:
    return np.where(np.linalg.det(stack) > 0, 1, -1)


# ---------------------------------------------------------------------------
# Symmetric eigenvalues
# ---------------------------------------------------------------------------


def jacobi_eigenvalues(
    S: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60, return_vectors: bool = False
):
    """Cyclic Jacobi eigenvalue iteration (unsorted output)."""
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, q]
                V[:, q] = s * Vp + c * V[:, q]
    else:
        off = math.sqrt(max(np.sum(A**2) - np.sum(np.diag(A) ** 2), 0.0))
        if off > tol * scale * 10:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3g})")
    w = np.diag(A).copy()
    return (w, V) if return_vectors else w


def symmetric_eigenvalues(
    S, tol: float = 1e-9, method: str = "lapack", debug: bool = False
) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, sorted descending.

    ``method`` is ``"lapack"`` (default) or ``"jacobi"``. With ``debug`` the
    reconstruction ``S = Q diag(w) Q.T`` is verified.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {S.shape}")
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > tol:
        raise NotSymmetric(f"asymmetry {asym:.3g} exceeds tol {tol:.3g}")
    S = 0.5 * (S + S.T)
    if method == "lapack":
        if debug:
            w, Q = np.linalg.eigh(S)
        else:
            w = np.linalg.eigvalsh(S)
    elif method == "jacobi":
        w, Q = jacobi_eigenvalues(S, return_vectors=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    if debug:
        recon = np.max(np.abs(S - (Q * w) @ Q.T))
        norm = max(np.max(np.abs(S)), np.finfo(float).tiny)
        if recon > 1e-10 * norm:
            raise NoConvergence(f"reconstruction error {recon:.3g}")
    return np.sort(w)[::-1]


# ---------------------------------------------------------------------------
# Eigen-angle cosines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CosSpectrum:
    """Eigen-angle cosines ``x_i = cos(theta_i)``, sorted descending."""

    x: np.ndarray
    source_det: int = 1

    @property
    def m(self) -> int:
        return self.x.shape[0]


def _pair_up(w: np.ndarray, dim: int, dets: np.ndarray, pairing_tol: float) -> np.ndarray:
    """Drop the forced eigenvalue(s) and average the pairs.

    ``w`` holds eigenvalues of the symmetric parts, sorted descending, shape
    (N, dim).
    """
    if dim % 2:
        keep = np.where(dets[:, None] > 0, w[:, 1:], w[:, :-1])
        dropped = np.where(dets > 0, w[:, 0] - 1.0, w[:, -1] + 1.0)
    else:
        if np.any(dets < 0):
            raise PairingFailure("det -1 elements of even dimension have no paired spectrum")
        keep = w
        dropped = np.zeros(len(w))
    a = keep[:, 0::2]
    b = keep[:, 1::2]
    gap = np.abs(a - b)
    bad = max(float(np.max(gap, initial=0.0)), float(np.max(np.abs(dropped), initial=0.0)))
    if bad > pairing_tol:
        raise PairingFailure(f"eigenvalue pairing defect {bad:.3g} exceeds {pairing_tol:.3g}")
    x = 0.5 * (a + b)
    return np.clip(x, -1.0, 1.0)


def cos_spectra(
    stack: np.ndarray,
    dets: np.ndarray | None = None,
    pairing_tol: float = PAIRING_TOL,
) -> np.ndarray:
    """Cosine spectra of a stack of real orthogonal matrices, shape (N, dim // 2)."""
    stack = as_stack(stack)
    if np.iscomplexobj(stack):
        raise TypeError("cos_spectra expects real orthogonal matrices")
    dim = stack.shape[-1]
    if dets is None:
        dets = det_signs(stack)
    dets = np.broadcast_to(np.asarray(dets), (stack.shape[0],))
    sym = 0.5 * (stack + stack.swapaxes(-1, -2))
    w = np.linalg.eigvalsh(sym)[:, ::-1]
    return _pair_up(w, dim, dets, pairing_tol)


def cos_spectrum(g, pairing_tol: float = PAIRING_TOL) -> CosSpectrum:
    """Cosine spectrum of one element (group B or D)."""
    if not isinstance(g, GroupElement):
        g = validate_group_element(g)
    if g.group not in ("B", "D"):
        raise ValueError(f"cos_spectrum needs a real orthogonal element, got group {g.group}")
    x = cos_spectra(g.entries[None], np.array([g.det_sign]), pairing_tol)[0]
    return CosSpectrum(x, g.det_sign)


def relative_spectrum(g, h, pairing_tol: float = PAIRING_TOL) -> CosSpectrum:
    """Cosine spectrum of ``g @ h.T``."""
    if not isinstance(g, GroupElement):
        g = validate_group_element(g)
    if not isinstance(h, GroupElement):
        h = validate_group_element(h)
    if g.dim != h.dim or g.group != h.group:
        raise DimensionMismatch(f"cannot compare {g.group}{g.dim} with {h.group}{h.dim}")
    prod = g.entries @ h.entries.T
    return cos_spectrum(
        GroupElement(prod, g.det_sign * h.det_sign, g.group), pairing_tol=pairing_tol
    )


def pair_indices(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle (i <= j) index pairs in row-major order."""
    return np.triu_indices(N)


def relative_cos_spectra(
    stack: np.ndarray,
    i_idx: np.ndarray,
    j_idx: np.ndarray,
    dets: np.ndarray | None = None,
    pairing_tol: float = PAIRING_TOL,
) -> np.ndarray:
    """Cosine spectra of ``g_i g_j^T`` for the listed index pairs."""
    if dets is None:
        dets = det_signs(stack)
    sym = stack[i_idx] @ stack[j_idx].swapaxes(-1, -2)
    sym = 0.5 * (sym + sym.swapaxes(-1, -2))
    w = np.linalg.eigvalsh(sym)[:, ::-1]
    return _pair_up(w, stack.shape[-1], dets[i_idx] * dets[j_idx], pairing_tol)


# ---------------------------------------------------------------------------
# Sample files
# ---------------------------------------------------------------------------


def write_sample(path, sample) -> None:
    """Write matrices as text: a header ``n N`` then N blocks of n rows.

    ``path`` may also be an open text stream.
    """
    stack = as_stack(sample)
    if np.iscomplexobj(stack):
        raise TypeError("the sample file format holds real matrices only")
    N, n, _ = stack.shape
    lines = [f"{n} {N}"]
    for g in stack:
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in g)
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        Path(path).write_text(text)


def read_sample(path: Union[str, Path], tol: float = ORTHOGONALITY_TOL) -> np.ndarray:
    """Read a sample file and validate every matrix; returns an (N, n, n) stack."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header {header!r}")
        n, N = int(header[0]), int(header[1])
        data = np.array(fh.read().split(), dtype=float)
    if data.size != N * n * n:
        raise ValueError(f"{path}: expected {N * n * n} numbers, found {data.size}")
    stack = data.reshape(N, n, n)
    for g in stack:
        validate_group_element(g, tol=tol)
    return stack


def trace_from_spectrum(x: np.ndarray, dim: int, det: int = 1) -> np.ndarray:
    """Tr(g) reconstructed from the cosine spectrum."""
    extra = 0.0 if dim % 2 == 0 else float(det)
    return extra + 2.0 * np.sum(x, axis=-1)


__all__: Sequence[str] = [
    "SignedLog",
    "GroupElement",
    "CosSpectrum",
    "validate_group_element",
    "symmetric_eigenvalues",
    "jacobi_eigenvalues",
    "cos_spectrum",
    "cos_spectra",
    "relative_spectrum",
    "relative_cos_spectra",
    "log_vandermonde",
    "signed_logdet",
    "read_sample",
    "write_sample",
]
