"""
Symmetric Toeplitz operators T_n(h) = (r_{k-l}(h)) and the quadratic-form
moment generating functions built on them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import NotEvenError, NotPSDError, NotSymmetricError, SizeLimitError
from .extended import ExtendedReal
from .spectral import TorusFunction, lq_norm, product_fourier_coefficient

DENSE_LIMIT = 4096
PSD_TOL = 1e-10


@dataclass(frozen=True)
class ToeplitzOperator:
    """n x n symmetric Toeplitz matrix stored by its first row."""

    n: int
    first_row: np.ndarray
    generator: TorusFunction | None = None

    def dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise SizeLimitError(f"n={self.n} exceeds the dense limit {DENSE_LIMIT}")
        return scipy.linalg.toeplitz(self.first_row)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return scipy.linalg.matmul_toeplitz(self.first_row, x)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.dense())


def build(h: TorusFunction, n: int) -> ToeplitzOperator:
    """T_n(h) for an even real trigonometric polynomial h."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not h.is_even():
        raise NotEvenError("Toeplitz generator must be even")
    row = np.array([np.real(h.coefficient(k)) for k in range(n)], dtype=float)
    return ToeplitzOperator(n, row, h)


def operator_norm(T: ToeplitzOperator) -> float:
    """Spectral norm, i.e. the largest absolute eigenvalue."""
    ev = T.eigvalsh()
    return float(np.max(np.abs(ev)))


def norm_bound(h: TorusFunction, q: float, n: int) -> float:
    """n^{1/q} ||h||_q with ||h||_q = (integral |h|^q dtheta)^{1/q}."""
    if q < 1:
        raise ValueError("q must be >= 1")
    scale = 1.0 if math.isinf(q) else n ** (1.0 / q)
    G = max(4096, 1 << (4 * h.degree + 1).bit_length())
    return scale * lq_norm(h, q, G)


def trace_product(generators: Sequence[TorusFunction], n: int) -> float:
    """(1/n) tr(T_n(f_1) ... T_n(f_s)), dense, s <= 4."""
    s = len(generators)
    if not 1 <= s <= 4:
        raise ValueError("trace_product supports 1 to 4 generators")
    if n > DENSE_LIMIT:
        raise SizeLimitError(f"n={n} exceeds the dense limit {DENSE_LIMIT}")
    mats = [build(f, n).dense() for f in generators]
    if s == 1:
        return float(np.trace(mats[0])) / n
    if s == 2:
        # tr(AB) = sum_ij A_ij B_ji without forming the product
        return float(np.sum(mats[0] * mats[1].T)) / n
    prod = mats[0]
    for M in mats[1:-1]:
        prod = prod @ M
    return float(np.sum(prod * mats[-1].T)) / n


def trace_limit(generators: Sequence[TorusFunction]) -> float:
    """r_0 of the pointwise product, by exact coefficient convolution."""
    return float(np.real(product_fourier_coefficient(list(generators), 0)))


# ---------------------------------------------------------------------------
# Quadratic forms
# ---------------------------------------------------------------------------


def _check_symmetric(M: np.ndarray, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise NotSymmetricError(f"{name} must be square")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(M)))):
        raise NotSymmetricError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


def psd_sqrt(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric square root; eigenvalues in [-tol, 0] are clamped, below rejected."""
    M = _check_symmetric(M, name)
    w, V = np.linalg.eigh(M)
    tol = PSD_TOL * max(1.0, float(np.max(np.abs(w))))
    if np.min(w) < -tol:
        raise NotPSDError(f"{name} has eigenvalue {np.min(w):.3e} < 0")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def similarity_eigenvalues(A: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Eigenvalues of A R (R PSD) through the symmetric matrix sqrt(R) A sqrt(R)."""
    A = _check_symmetric(A, "A")
    S = psd_sqrt(R, "R")
    return np.linalg.eigvalsh(S @ A @ S)


def _neg_half_logdet(z: float, lam: np.ndarray) -> ExtendedReal:
    t = 2.0 * z * lam
    if np.any(t >= 1.0):
        return ExtendedReal.infinity()
    return ExtendedReal.of(float(-0.5 * np.sum(np.log1p(-t))))


def gaussian_quadratic_logmgf(A: np.ndarray, R: np.ndarray, z: float) -> ExtendedReal:
    """log E exp(z <Y, A Y>) for Y ~ N(0, R).

    Finite iff ``1 - 2 z lambda_j > 0`` for every eigenvalue of ``A R``
    (which for z >= 0 is ``z max_j lambda_j < 1/2``).
    """
    if z == 0:
        _check_symmetric(A, "A")
        return ExtendedReal.of(0.0)
    return _neg_half_logdet(z, similarity_eigenvalues(A, R))


def _as_matrix(B) -> np.ndarray:
    return B.dense() if isinstance(B, ToeplitzOperator) else np.asarray(B, dtype=float)


def quadratic_mgf_bound(B, f: TorusFunction, lam: float, K: float) -> ExtendedReal:
    """Upper bound on log E exp(lam <X, B X>) for a linear process.

    ``f`` must be the unit-variance density ``|g|^2`` (the innovation scale
    lives in ``K``); ``A = T_n(f)``.  Returns
    ``-1/2 sum_j log(1 - 2 K^2 lam mu_j)`` with ``mu_j`` the eigenvalues of
    ``sqrt(B) A sqrt(B)``, or +inf outside ``2 K^2 lam max mu_j < 1``.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    Bm = _as_matrix(B)
    S = psd_sqrt(Bm, "B")
    if lam == 0:
        return ExtendedReal.of(0.0)
    A = build(f, Bm.shape[0]).dense()
    mu = np.linalg.eigvalsh(S @ A @ S)
    return _neg_half_logdet(K * K * lam, mu)


def wu_bound(n: int, lam: float, K: float, g_sup_sq: float) -> ExtendedReal:
    """-(n/2) log(1 - 2 lam K^2 ||g||_inf^2): the B = I, scalar case."""
    t = 2.0 * lam * K * K * g_sup_sq
    if t >= 1.0:
        return ExtendedReal.infinity()
    return ExtendedReal.of(-0.5 * n * math.log1p(-t))
