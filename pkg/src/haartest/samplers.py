"""Random rotation generators.

All samplers come in two flavours: a single-matrix function taking an
:class:`~haartest.rng.RngStream`, and a ``*_stack`` function that draws one
matrix per child stream and evaluates them together. Both consume each
stream identically, so ``stack[i]`` equals the single-matrix draw from
``rng.split(i)`` bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .rng import RngStream

TWO_PI = 2.0 * math.pi
KINDS = ("haar", "kac", "reflections", "jor")


@dataclass(frozen=True)
class SamplerSpec:
    kind: str
    dim: int
    steps: int = 0
    m1: int = 0
    m2: int = 0
    seed: int = 0
    fold_det: bool = False  # odd dim only: g -> det(g) g lands in SO(n)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.dim < 1 or (self.kind != "haar" and self.dim < 2):
            raise ValueError(f"dimension {self.dim} too small for {self.kind}")
        if self.steps < 0 or self.m1 < 0 or self.m2 < 0:
            raise ValueError("step counts must be nonnegative")
        if self.fold_det and self.dim % 2 == 0:
            raise ValueError("det folding needs odd dimension (-I has det +1 otherwise)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerSpec":
        return cls(**d)


# ---------------------------------------------------------------------------
# Haar
# ---------------------------------------------------------------------------


def _haar_from_gaussian(Z: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    Q = Q * d[..., None, :]
    neg = np.linalg.det(Q) < 0
    Q[neg, :, 0] *= -1.0
    return Q


def haar_orthogonal(n: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed element of SO(n) via QR of a Gaussian matrix."""
    if n < 1:
        raise ValueError("n must be positive")
    Z = rng.normal((n, n))
    return _haar_from_gaussian(Z[None])[0]


def haar_stack(n: int, rngs: Sequence[RngStream]) -> np.ndarray:
    Z = np.stack([r.normal((n, n)) for r in rngs])
    return _haar_from_gaussian(Z)


# ---------------------------------------------------------------------------
# Kac's walk
# ---------------------------------------------------------------------------


def _kac_draws(n: int, k: int, rng: RngStream):
    # pair index over the n(n-1)/2 unordered pairs, then the angle
    pairs = rng.integers(0, n * (n - 1) // 2, size=k)
    angles = rng.uniform(0.0, TWO_PI, size=k)
    return pairs, angles


def _unrank_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, k=1)
    return iu, ju


def _kac_apply(G: np.ndarray, I: np.ndarray, J: np.ndarray, C: np.ndarray, S: np.ndarray):
    """In-place left multiplication by plane rotations, step by step.

    G: (B, n, n); I, J, C, S: (B, k).
    """
    rows = np.arange(G.shape[0])
    for t in range(I.shape[1]):
        i, j = I[:, t], J[:, t]
        c, s = C[:, t, None], S[:, t, None]
        gi = G[rows, i]
        gj = G[rows, j]
        G[rows, i] = c * gi - s * gj
        G[rows, j] = s * gi + c * gj
    return G


def kac_stack(n: int, k: int, rngs: Sequence[RngStream], start: np.ndarray | None = None):
    B = len(rngs)
    iu, ju = _unrank_pairs(n)
    draws = [_kac_draws(n, k, r) for r in rngs]
    P = np.array([d[0] for d in draws], dtype=np.int64).reshape(B, k)
    A = np.array([d[1] for d in draws], dtype=float).reshape(B, k)
    G = np.broadcast_to(np.eye(n), (B, n, n)).copy() if start is None else np.array(start, dtype=float)
    return _kac_apply(G, iu[P], ju[P], np.cos(A), np.sin(A))


def kac_walk(n: int, k: int, rng: RngStream, start: np.ndarray | None = None) -> np.ndarray:
    """k steps of Kac's walk started at ``start`` (identity by default)."""
    if n < 2:
        raise ValueError("Kac's walk needs n >= 2")
    s = None if start is None else np.asarray(start, dtype=float)[None]
    return kac_stack(n, k, [rng], s)[0]


# ---------------------------------------------------------------------------
# Products of random reflections
# ---------------------------------------------------------------------------


def _unit_vectors(n: int, k: int, rng: RngStream) -> np.ndarray:
    U = rng.normal((k, n))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def _reflect(G: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Left-multiply each G[b] by reflections I - 2 u u^T, u = U[b, t], in order."""
    for t in range(U.shape[1]):
        u = U[:, t, :]
        v = np.einsum("bi,bij->bj", u, G)
        G -= 2.0 * u[:, :, None] * v[:, None, :]
    return G


def reflection_stack(n: int, k: int, rngs: Sequence[RngStream]) -> np.ndarray:
    U = np.stack([_unit_vectors(n, k, r) for r in rngs]).reshape(len(rngs), k, n)
    G = np.broadcast_to(np.eye(n), (len(rngs), n, n)).copy()
    return _reflect(G, U)


def reflection_walk(
    n: int, k: int, rng: RngStream, vectors: np.ndarray | None = None
) -> np.ndarray:
    """Product of k random reflections; ``vectors`` (k, n) overrides the draws."""
    if n < 2:
        raise ValueError("reflection walk needs n >= 2")
    if vectors is None:
        U = _unit_vectors(n, k, rng)
    else:
        U = np.asarray(vectors, dtype=float).reshape(k, n)
        U = U / np.linalg.norm(U, axis=1, keepdims=True)
    return _reflect(np.eye(n)[None].copy(), U[None])[0]


# ---------------------------------------------------------------------------
# Jones-Osipov-Rokhlin generator
# ---------------------------------------------------------------------------


@dataclass
class JORTransform:
    """Operator form of ``(prod Q_i P_i) F (prod Q_j P_j)``.

    ``perms`` and ``angles`` hold M1 + M2 factors, the first M1 belonging to
    the left block. Factors are stored in the order they appear in the
    product, left to right.
    """

    n: int
    m1: int
    m2: int
    perms: np.ndarray  # (M1 + M2, n)
    angles: np.ndarray  # (M1 + M2, n - 1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Apply to a vector (n,) or to the columns of an (n, c) array."""
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        Y = (X[:, None] if squeeze else X).copy()
        factors = self.perms.shape[0]
        # rightmost factor acts first
        for f in range(factors - 1, self.m1 - 1, -1):
            Y = _qp_apply(Y, self.perms[f], self.angles[f])
        Y = fourier_apply(Y)
        for f in range(self.m1 - 1, -1, -1):
            Y = _qp_apply(Y, self.perms[f], self.angles[f])
        return Y[:, 0] if squeeze else Y

    __call__ = apply

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.n))


def _qp_apply(Y: np.ndarray, perm: np.ndarray, angles: np.ndarray) -> np.ndarray:
    # (P v)_j = v_{p(j)}, then Q = Q_{n-1} ... Q_1 so Q_1 acts first
    Y = Y[perm]
    c = np.cos(angles)
    s = np.sin(angles)
    for l in range(Y.shape[0] - 1):
        a = Y[l].copy()
        b = Y[l + 1]
        Y[l] = c[l] * a + s[l] * b
        Y[l + 1] = -s[l] * a + c[l] * b
    return Y


def fourier_apply(Y: np.ndarray) -> np.ndarray:
    """Apply F^n = Z^{-1} T Z along axis 0 (last coordinate fixed when n is odd)."""
    n = Y.shape[0]
    d = n // 2
    out = Y.copy()
    if d == 0:
        return out
    zc = Y[0 : 2 * d : 2] + 1j * Y[1 : 2 * d : 2]
    w = np.fft.fft(zc, axis=0, norm="ortho")
    out[0 : 2 * d : 2] = w.real
    out[1 : 2 * d : 2] = w.imag
    return out


def _jor_draws(n: int, factors: int, rng: RngStream):
    perms = np.empty((factors, n), dtype=np.int64)
    angles = np.empty((factors, n - 1))
    for f in range(factors):
        perms[f] = rng.permutation(n)
        angles[f] = rng.uniform(0.0, TWO_PI, size=n - 1)
    return perms, angles


def jor_operator(n: int, m1: int, m2: int, rng: RngStream) -> JORTransform:
    if n < 2:
        raise ValueError("JOR transform needs n >= 2")
    if m1 < 0 or m2 < 0:
        raise ValueError("M1 and M2 must be nonnegative")
    perms, angles = _jor_draws(n, m1 + m2, rng)
    return JORTransform(n, m1, m2, perms, angles)


def jor_transform(n: int, m1: int, m2: int, rng: RngStream) -> np.ndarray:
    """Materialized JOR pseudorandom orthogonal matrix."""
    return jor_operator(n, m1, m2, rng).matrix()


def jor_stack(n: int, m1: int, m2: int, rngs: Sequence[RngStream]) -> np.ndarray:
    """Batched materialization; row updates are vectorized over the batch."""
    B = len(rngs)
    draws = [_jor_draws(n, m1 + m2, r) for r in rngs]
    perms = np.stack([d[0] for d in draws]).reshape(B, m1 + m2, n)
    angles = np.stack([d[1] for d in draws]).reshape(B, m1 + m2, n - 1)
    C, S = np.cos(angles), np.sin(angles)
    Y = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    rows = np.arange(B)[:, None]

    def qp(Y, f):
        Y = Y[rows, perms[:, f]]
        for l in range(n - 1):
            a = Y[:, l].copy()
            b = Y[:, l + 1]
            c, s = C[:, f, l, None], S[:, f, l, None]
            Y[:, l] = c * a + s * b
            Y[:, l + 1] = -s * a + c * b
        return Y

    for f in range(m1 + m2 - 1, m1 - 1, -1):
        Y = qp(Y, f)
    Y = np.moveaxis(fourier_apply(np.moveaxis(Y, 1, 0)), 0, 1)
    for f in range(m1 - 1, -1, -1):
        Y = qp(Y, f)
    return Y


def jor_split(iterations: int) -> tuple[int, int]:
    """(M1, M2) for a given number of JOR iterations M1 + M2."""
    return (iterations + 1) // 2, iterations // 2


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def fold_determinant(G: np.ndarray) -> np.ndarray:
    """Map each odd-dimensional orthogonal g to det(g) g in SO(n).

    O(2m+1) is SO(2m+1) x {I, -I}, so this pushes Haar on O(n) to Haar on SO(n).
    """
    G = np.array(G, dtype=float)
    if G.shape[-1] % 2 == 0:
        raise ValueError("det folding needs odd dimension")
    G[np.linalg.det(G) < 0] *= -1.0
    return G


def sample_stack(spec: SamplerSpec, rngs: Sequence[RngStream]) -> np.ndarray:
    """One matrix per stream according to ``spec``."""
    G = _raw_stack(spec, rngs)
    return fold_determinant(G) if spec.fold_det else G


def _raw_stack(spec: SamplerSpec, rngs: Sequence[RngStream]) -> np.ndarray:
    if spec.kind == "haar":
        return haar_stack(spec.dim, rngs)
    if spec.kind == "kac":
        return kac_stack(spec.dim, spec.steps, rngs)
    if spec.kind == "reflections":
        return reflection_stack(spec.dim, spec.steps, rngs)
    if spec.kind == "jor":
        return jor_stack(spec.dim, spec.m1, spec.m2, rngs)
    raise ValueError(spec.kind)


def draw_sample(spec: SamplerSpec, N: int, rng: RngStream) -> np.ndarray:
    """N matrices; matrix i uses ``rng.split(i)``."""
    return sample_stack(spec, [rng.split(i) for i in range(N)])
