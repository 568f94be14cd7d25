"""
Closed-form limit objects: asymptotic covariance of the lagged products,
quadratic and scalar rates, the CLT variance, and the functional rate with
its excess-kurtosis correction, variational form and maximiser.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import BranchError, NotEvenError, NotSymmetricError, SingularSystemError
from .extended import ExtendedReal
from .innovations import InnovationLaw
from .spectral import DEFAULT_GRID_SIZE, MACoefficients, TorusFunction

PINV_RCOND = 1e-10
RANGE_TOL = 1e-10
ZERO_F = 1e-12
NONZERO_ETA = 1e-10
DEGENERATE_KAPPA = 1e-10
L2_REFINEMENT_RTOL = 1e-6


class Branch(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    NOT_ABSOLUTELY_CONTINUOUS = "not_absolutely_continuous"
    RATIO_NOT_SQUARE_INTEGRABLE = "ratio_not_square_integrable"
    DEGENERATE_KAPPA = "degenerate_kappa"


@dataclass(frozen=True)
class RateEvaluation:
    value: ExtendedReal
    branch: Branch

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class CovarianceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if S.shape[0] != S.shape[1]:
            raise NotSymmetricError("covariance matrix must be square")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(S))))):
            raise NotSymmetricError("covariance matrix must be symmetric")
        object.__setattr__(self, "entries", 0.5 * (S + S.T))

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def is_psd(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.entries))))
        return bool(np.min(np.linalg.eigvalsh(self.entries)) >= -tol * scale)

    def to_csv(self) -> str:
        return "\n".join(",".join(repr(float(v)) for v in row) for row in self.entries) + "\n"


def _matrix(Sigma) -> np.ndarray:
    return Sigma.entries if isinstance(Sigma, CovarianceMatrix) else np.atleast_2d(
        np.asarray(Sigma, dtype=float))


# ---------------------------------------------------------------------------
# Covariance of the lagged products
# ---------------------------------------------------------------------------


def sigma_matrix(f: TorusFunction, kappa4: float, m: int) -> CovarianceMatrix:
    """Sigma2[k, l] = r_{k-l}(f^2) + r_{k+l}(f^2) + kappa4 r_k(f) r_l(f), 0 <= k, l <= m."""
    f2 = f * f
    r = lambda h, k: float(np.real(h.coefficient(k)))
    S = np.empty((m + 1, m + 1))
    for k in range(m + 1):
        for l in range(m + 1):
            S[k, l] = r(f2, k - l) + r(f2, k + l) + kappa4 * r(f, k) * r(f, l)
    return CovarianceMatrix(S)


def lagged_product_covariance(coeffs: MACoefficients, law: InnovationLaw,
                              a: int, b: int, k: int) -> float:
    """Cov(X_0 X_a, X_k X_{k+b}) from second and fourth moments of the innovations.

    With X_t = sum_i a_{i-t} xi_i and r(h) = E X_0 X_h,

        r(k) r(k+b-a) + r(k+b) r(k-a) + kappa4 sigma^4 sum_i a_i a_{i-a} a_{i-k} a_{i-k-b}.
    """
    r = _autocov_function(coeffs, law.variance)
    c4 = law.kappa4 * law.variance ** 2
    return r(k) * r(k + b - a) + r(k + b) * r(k - a) + c4 * _fourth_sum(coeffs, a, k, k + b)


def _autocov_function(coeffs: MACoefficients, variance: float):
    lo, hi = coeffs.lo, coeffs.hi

    def r(h: int) -> float:
        # sum_i a_i a_{i-h}
        s = 0.0
        for i in range(max(lo, lo + h), min(hi, hi + h) + 1):
            s += coeffs[i] * coeffs[i - h]
        return variance * s

    return r


def _fourth_sum(coeffs: MACoefficients, s1: int, s2: int, s3: int) -> float:
    """sum_i a_i a_{i-s1} a_{i-s2} a_{i-s3}."""
    lo = coeffs.lo + max(0, s1, s2, s3)
    hi = coeffs.hi + min(0, s1, s2, s3)
    return float(sum(coeffs[i] * coeffs[i - s1] * coeffs[i - s2] * coeffs[i - s3]
                     for i in range(lo, hi + 1)))


def sigma_matrix_timedomain(coeffs: MACoefficients, law: InnovationLaw, m: int) -> CovarianceMatrix:
    """Sigma2[a, b] = sum_{k in Z} Cov(X_0 X_a, X_k X_{k+b}), summed in the time domain."""
    width = coeffs.hi - coeffs.lo
    K = width + m + 1
    S = np.empty((m + 1, m + 1))
    for a in range(m + 1):
        for b in range(m + 1):
            S[a, b] = sum(lagged_product_covariance(coeffs, law, a, b, k)
                          for k in range(-K, K + 1))
    return CovarianceMatrix(S)


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


def rate_quadratic(z, Sigma) -> RateEvaluation:
    """sup_lambda <lambda, z> - 1/2 lambda' Sigma lambda = 1/2 z' Sigma^+ z.

    +inf (branch ``not_absolutely_continuous``) when z leaves the range of Sigma.
    """
    S = _matrix(Sigma)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (S.shape[0],):
        raise ValueError(f"z has shape {z.shape}, Sigma is {S.shape}")
    if not np.any(z):
        return RateEvaluation(ExtendedReal.of(0.0), Branch.CLOSED_FORM)
    P = np.linalg.pinv(S, rcond=PINV_RCOND, hermitian=True)
    w = P @ z
    if np.linalg.norm(S @ w - z) > RANGE_TOL * max(1.0, np.linalg.norm(z)):
        return RateEvaluation(ExtendedReal.infinity(), Branch.NOT_ABSOLUTELY_CONTINUOUS)
    return RateEvaluation(ExtendedReal.of(0.5 * float(z @ w)), Branch.CLOSED_FORM)


def legendre_numeric(z, Sigma, box: float = 10.0, points: int = 21) -> float:
    """sup_lambda <lambda, z> - 1/2 lambda' Sigma lambda by direct maximisation.

    A coarse grid over ``[-box, box]^d`` seeds a quasi-Newton polish; no
    matrix inversion is involved.
    """
    S = _matrix(Sigma)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = z.size
    axes = [np.linspace(-box, box, points)] * d
    L = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    vals = L @ z - 0.5 * np.einsum("ij,jk,ik->i", L, S, L)
    x0 = L[np.argmax(vals)]
    res = scipy.optimize.minimize(
        lambda lam: -(lam @ z - 0.5 * lam @ S @ lam), x0,
        jac=lambda lam: -(z - S @ lam), method="BFGS",
        options={"gtol": 1e-13, "maxiter": 10_000})
    return float(-res.fun)


def scalar_denominator(f: TorusFunction, kappa4: float, lag: int) -> float:
    """r_0(f^2) + r_{2 lag}(f^2) + kappa4 r_lag(f)^2, the diagonal entry Sigma2[lag, lag]."""
    f2 = f * f
    return float(np.real(f2.coefficient(0) + f2.coefficient(2 * lag))
                 + kappa4 * np.real(f.coefficient(lag)) ** 2)


def rate_scalar(z: float, f: TorusFunction, kappa4: float, lag: int) -> RateEvaluation:
    """z^2 / (2 D) for the single lagged product at ``lag``."""
    if z == 0:
        return RateEvaluation(ExtendedReal.of(0.0), Branch.CLOSED_FORM)
    D = scalar_denominator(f, kappa4, lag)
    if D <= 1e-12 * max(1.0, float(np.real((f * f).coefficient(0)))):
        return RateEvaluation(ExtendedReal.infinity(), Branch.DEGENERATE_KAPPA)
    return RateEvaluation(ExtendedReal.of(z * z / (2.0 * D)), Branch.CLOSED_FORM)


def clt_variance(f: TorusFunction, h: TorusFunction, kappa4: float) -> float:
    """2 r_0(f^2 h^2) + kappa4 r_0(f h)^2."""
    fh = f * h
    return float(2.0 * np.real((fh * fh).mean()) + kappa4 * np.real(fh.mean()) ** 2)


def lambda_functional(h: TorusFunction, f: TorusFunction, kappa4: float) -> float:
    """Limiting log-MGF curvature Lambda(h); the same quantity as :func:`clt_variance`."""
    return clt_variance(f, h, kappa4)


def _grid_pair(eta: TorusFunction, f: TorusFunction, grid_size: int):
    G = eta.grid_size or f.grid_size or grid_size
    return np.real(eta.values(G)), np.real(f.values(G)), G


def _ratio_moments(ev, fv):
    """(mean (eta/f)^2, mean eta/f) over grid points where f does not vanish.

    The zero set of f is null, so points dropped there do not enter the
    normalisation either.
    """
    mask = fv >= ZERO_F
    if not np.any(mask):
        return 0.0, 0.0
    ratio = ev[mask] / fv[mask]
    return float(np.mean(ratio ** 2)), float(np.mean(ratio))


def rate_functional(eta: TorusFunction, f: TorusFunction, kappa4: float,
                    grid_size: int = DEFAULT_GRID_SIZE) -> RateEvaluation:
    """Functional rate

        I(eta) = mean(eta^2 / (4 f^2)) - kappa4/(2 + kappa4) * mean(eta / (2 f))^2,

    with means taken against d theta / 2 pi, or +inf when eta charges the zero
    set of f or eta/f is not square integrable.  At kappa4 = -2 the Gram
    form degenerates along h = c/f: the rate is +inf unless mean(eta/f)
    vanishes, in which case it is mean(eta^2 / (4 f^2)).
    """
    if not eta.is_even():
        raise NotEvenError("the functional rate is defined for even eta only")
    ev, fv, G = _grid_pair(eta, f, grid_size)
    if np.any((fv < ZERO_F) & (np.abs(ev) > NONZERO_ETA)):
        return RateEvaluation(ExtendedReal.infinity(), Branch.NOT_ABSOLUTELY_CONTINUOUS)
    q2, q1 = _ratio_moments(ev, fv)
    if eta.is_trig_polynomial and f.is_trig_polynomial:
        ev2, fv2 = np.real(eta.values(2 * G)), np.real(f.values(2 * G))
        if np.any((fv2 < ZERO_F) & (np.abs(ev2) > NONZERO_ETA)):
            return RateEvaluation(ExtendedReal.infinity(), Branch.NOT_ABSOLUTELY_CONTINUOUS)
        q2_fine, _ = _ratio_moments(ev2, fv2)
        if not np.isfinite(q2_fine) or abs(q2_fine - q2) > L2_REFINEMENT_RTOL * max(q2, 1e-300):
            return RateEvaluation(ExtendedReal.infinity(), Branch.RATIO_NOT_SQUARE_INTEGRABLE)
    if not np.isfinite(q2):
        return RateEvaluation(ExtendedReal.infinity(), Branch.RATIO_NOT_SQUARE_INTEGRABLE)
    main = q2 / 4.0
    half_mean = q1 / 2.0
    if abs(2.0 + kappa4) < DEGENERATE_KAPPA:
        if abs(half_mean) > 1e-10 * max(1.0, np.sqrt(main)):
            return RateEvaluation(ExtendedReal.infinity(), Branch.DEGENERATE_KAPPA)
        return RateEvaluation(ExtendedReal.of(main), Branch.DEGENERATE_KAPPA)
    value = main - kappa4 / (2.0 + kappa4) * half_mean ** 2
    # nonnegative for kappa4 > -2 by Cauchy-Schwarz; clip rounding residue
    return RateEvaluation(ExtendedReal.of(max(value, 0.0)), Branch.CLOSED_FORM)


def variational_objective(h: TorusFunction, eta: TorusFunction, f: TorusFunction,
                          kappa4: float, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """D(h) = mean(h eta) - 1/2 Lambda(h), by grid quadrature."""
    G = h.grid_size or eta.grid_size or f.grid_size or grid_size
    hv, ev, fv = (np.real(t.values(G)) for t in (h, eta, f))
    hf = hv * fv
    lam = 2.0 * np.mean(hf * hf) + kappa4 * np.mean(hf) ** 2
    return float(np.mean(hv * ev) - 0.5 * lam)


def rate_functional_variational(eta: TorusFunction, f: TorusFunction, kappa4: float,
                                degree: int, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """Supremum of D(h) over even trigonometric polynomials of the given degree.

    Writing h = sum_{k<=degree} c_k cos(k theta), D is the concave quadratic
    c'b - 1/2 c'Mc with b_k = mean(cos(k.) eta) and
    M_jk = 2 mean(cos(j.) cos(k.) f^2) + kappa4 mean(cos(j.) f) mean(cos(k.) f);
    the maximum is 1/2 b'c* with M c* = b.
    """
    if not 0 <= degree <= 64:
        raise ValueError("degree must lie in [0, 64]")
    ev, fv, G = _grid_pair(eta, f, grid_size)
    theta = -np.pi + 2.0 * np.pi * np.arange(G) / G
    C = np.cos(np.outer(np.arange(degree + 1), theta))
    b = C @ ev / G
    Cf = C * fv
    u = Cf.mean(axis=1)
    M = 2.0 * (Cf @ Cf.T) / G + kappa4 * np.outer(u, u)
    w = np.linalg.eigvalsh(M)
    if w[0] <= 1e-12 * max(abs(w[-1]), 1e-300):
        raise SingularSystemError("Lambda is degenerate on the trial space")
    c = np.linalg.solve(M, b)
    return float(0.5 * b @ c)


def optimal_h(eta: TorusFunction, f: TorusFunction, kappa4: float,
              grid_size: int = DEFAULT_GRID_SIZE) -> TorusFunction:
    """Maximiser h0 of D on the grid:

        h0 f = eta/(2f) - kappa4/(2 + kappa4) mean(eta/(2f)).
    """
    ev_rate = rate_functional(eta, f, kappa4, grid_size)
    if ev_rate.branch is not Branch.CLOSED_FORM:
        raise BranchError(f"closed-form maximiser unavailable: {ev_rate.branch.value}")
    ev, fv, G = _grid_pair(eta, f, grid_size)
    half = np.zeros_like(ev)
    mask = fv >= ZERO_F
    half[mask] = ev[mask] / (2.0 * fv[mask])
    hf = half - kappa4 / (2.0 + kappa4) * np.mean(half[mask])
    h = np.zeros_like(ev)
    h[mask] = hf[mask] / fv[mask]
    return TorusFunction(grid=h)


def optimal_eta_for_mean(z: float, f: TorusFunction, kappa4: float) -> TorusFunction:
    """eta of minimal rate subject to mean(eta) = z.

    It is the image of a constant h = t under eta = 2 f^2 h + kappa4 mean(f h) f,
    with t = z / Sigma2[0, 0]; its rate equals z^2 / (2 Sigma2[0, 0]).
    """
    D = scalar_denominator(f, kappa4, 0)
    t = z / D
    return (f * f) * (2.0 * t) + f * (kappa4 * t * float(np.real(f.mean())))


def bias_bound(f: TorusFunction, h: TorusFunction, n: int,
               f_derivative_l2: float | None = None) -> tuple[float, float]:
    """Exact bias of E I_n(h) against r_0(f h), and its 1/n bound.

    Returns ``(exact_bias, bound)`` where

        exact_bias = sum_{|k|<n} (1 - |k|/n) r_k(f) r_k(h) - sum_k r_k(f) r_k(h)
        bound      = (1/n) sqrt(sum_k k^2 r_k(f)^2) sqrt(sum_k r_k(h)^2).

    ``f_derivative_l2``, when given, is ||f'||_2 with the plain d theta
    integral and replaces the coefficient sum via Parseval.
    """
    off_h, ch = h.fourier
    off_f, cf = f.fourier
    ks = np.arange(min(off_h, off_f), max(off_h + ch.size, off_f + cf.size))
    rf = np.real(f.coefficients(ks))
    rh = np.real(h.coefficients(ks))
    # r_k(h) pairs with r_{-k}(f); equal for even f
    rf_neg = np.real(f.coefficients(-ks))
    weights = np.where(np.abs(ks) < n, 1.0 - np.abs(ks) / n, 0.0)
    exact = float(np.sum((weights - 1.0) * rf_neg * rh))
    if f_derivative_l2 is None:
        deriv = float(np.sqrt(np.sum(ks.astype(float) ** 2 * rf ** 2)))
    else:
        deriv = float(f_derivative_l2) / np.sqrt(2.0 * np.pi)
    bound = deriv * float(np.sqrt(np.sum(rh ** 2))) / n
    return exact, bound
