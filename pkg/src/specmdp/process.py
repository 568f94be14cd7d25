"""
Moving-average paths and their empirical statistics.

A path holds ``X_1 .. X_{n + lag_extension}`` with
``X_k = sum_j a_j xi_{k+j}``.  The extension lets lagged sums
``sum_{k=1}^n X_k X_{k+l}`` be computed exactly instead of truncated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArityError, ConsistencyError, InsufficientExtensionError
from .innovations import InnovationLaw
from .spectral import MACoefficients, TorusFunction, _next_pow2


@dataclass(frozen=True)
class SamplePath:
    values: np.ndarray
    n: int
    lag_extension: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("path values must be 1-d")
        if v.size != self.n + self.lag_extension:
            raise ValueError(f"path length {v.size} != n + lag_extension = "
                             f"{self.n + self.lag_extension}")
        object.__setattr__(self, "values", v)

    @property
    def observed(self) -> np.ndarray:
        """X_1..X_n."""
        return self.values[: self.n]


def filter_innovations(coeffs: MACoefficients, xi: np.ndarray) -> np.ndarray:
    """Apply the moving-average filter along the last axis.

    ``xi[..., i]`` is the innovation with index ``1 + coeffs.lo + i``; the
    output ``out[..., k-1]`` is ``X_k``.  Length shrinks by the support width.
    """
    a = coeffs.values
    L = a.size
    m = xi.shape[-1] - L + 1
    if m < 1:
        raise ValueError("innovation window shorter than the filter support")
    out = a[0] * xi[..., :m]
    for j in range(1, L):
        if a[j] != 0.0:
            out = out + a[j] * xi[..., j:j + m]
    return out


def innovation_window(coeffs: MACoefficients, length: int) -> int:
    """Number of innovations needed for ``length`` consecutive X values."""
    return length + coeffs.hi - coeffs.lo


def simulate_path(coeffs: MACoefficients, law: InnovationLaw, n: int,
                  lag_extension: int, rng: np.random.Generator) -> SamplePath:
    """Simulate X_1..X_{n+lag_extension} exactly from the innovation window
    ``[1 + lo, n + lag_extension + hi]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xi = law.sample(innovation_window(coeffs, n + lag_extension), rng)
    return SamplePath(filter_innovations(coeffs, xi), n, lag_extension)


def simulate_paths(coeffs: MACoefficients, law: InnovationLaw, n: int,
                   lag_extension: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent paths as rows of a ``(count, n + lag_extension)`` array."""
    w = innovation_window(coeffs, n + lag_extension)
    xi = law.sample(w * count, rng).reshape(count, w)
    return filter_innovations(coeffs, xi)


def periodogram(path: SamplePath, grid_size: int | None = None) -> TorusFunction:
    """I_n(theta) = (1/n) |sum_{k=1}^n X_k exp(i k theta)|^2 on the uniform grid.

    The discrete Parseval identity makes the grid mean equal (1/n) sum X_k^2
    whenever ``grid_size >= n``.
    """
    n = path.n
    if grid_size is None:
        grid_size = _next_pow2(n)
    if grid_size < n:
        raise ValueError("grid_size must be >= n")
    x = path.observed
    k = np.arange(1, n + 1)
    bins = np.zeros(grid_size)
    # exp(i k theta_m) = (-1)^k exp(2 pi i k m / G)
    np.add.at(bins, k % grid_size, x * np.where(k % 2, -1.0, 1.0))
    dft = np.fft.ifft(bins) * grid_size
    return TorusFunction(grid=np.abs(dft) ** 2 / n)


def periodogram_direct(path: SamplePath, theta: np.ndarray) -> np.ndarray:
    """Brute-force O(n * len(theta)) evaluation of the periodogram."""
    x = path.observed
    k = np.arange(1, path.n + 1)
    s = np.exp(1j * np.outer(np.asarray(theta), k)) @ x
    return np.abs(s) ** 2 / path.n


def lagged_products(x: np.ndarray, n: int, max_lag: int) -> np.ndarray:
    """sum_{k=1}^{n} x_k x_{k+l} for l = 0..max_lag along the last axis."""
    head = x[..., :n]
    return np.stack([np.einsum("...i,...i->...", head, x[..., l:l + n])
                     for l in range(max_lag + 1)], axis=-1)


def autocorrelation_sums(path: SamplePath, m: int) -> np.ndarray:
    """Raw sums sum_{k=1}^n X_k X_{k+l}, l = 0..m."""
    if path.lag_extension < m:
        raise InsufficientExtensionError(
            f"lag_extension={path.lag_extension} < m={m}")
    return lagged_products(path.values, path.n, m)


def toeplitz_quadratic_form(x: np.ndarray, h: TorusFunction) -> np.ndarray:
    """<x, T_n(h) x> along the last axis, via lag sums over the support of h."""
    n = x.shape[-1]
    off, c = h.fourier
    total = 0.0
    for i, r in enumerate(c):
        d = off + i
        if r == 0 or abs(d) >= n:
            continue
        # entries (k, l) with k - l = d pair x_k x_l; sum_l x_{l+d} x_l
        s = np.einsum("...i,...i->...", x[..., abs(d):], x[..., :n - abs(d)])
        total = total + np.real(r) * s
    return total


def periodogram_functional(path: SamplePath, h: TorusFunction, rtol: float = 1e-9) -> float:
    """(1/2pi) integral h(theta) I_n(theta) dtheta, evaluated two ways.

    Route one is grid quadrature of ``h * I_n``; route two is the Toeplitz
    quadratic form ``(1/n) <X, T_n(h) X>``.  Disagreement beyond ``rtol``
    (relative to ``(1/n) sum X_k^2 * sum_k |r_k(h)|``) raises
    :class:`ConsistencyError`.
    """
    if not h.is_even():
        raise ValueError("h must be an even trigonometric polynomial")
    n = path.n
    x = path.observed
    G = _next_pow2(n + h.degree + 1)
    quad = float(np.mean(periodogram(path, G).values() * h.values(G)))
    form = float(toeplitz_quadratic_form(x, h)) / n
    _, c = h.fourier
    scale = float(np.dot(x, x)) / n * float(np.sum(np.abs(c)))
    if abs(quad - form) > rtol * max(scale, np.finfo(float).tiny):
        raise ConsistencyError(f"quadrature {quad!r} vs quadratic form {form!r}")
    return form


def expected_autocovariance(f: TorusFunction, lag: int) -> float:
    """E X_k X_{k+lag} = r_lag(f)."""
    return float(np.real(f.coefficient(lag)))


def expected_periodogram_functional(f: TorusFunction, h: TorusFunction, n: int) -> float:
    """E (1/2pi) integral h I_n = sum_{|k|<n} (1 - |k|/n) r_k(h) r_{-k}(f)."""
    off, c = h.fourier
    total = 0.0
    for i, r in enumerate(c):
        k = off + i
        if abs(k) < n:
            total += (1.0 - abs(k) / n) * np.real(r * f.coefficient(-k))
    return float(total)


# ---------------------------------------------------------------------------
# Additive functionals sum_k F(X_k, ..., X_{k+l})
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalDescriptor:
    """Catalog functional F: R^{l+1} -> R^m.

    ``evaluate`` maps an array of shape ``(..., arity)`` to ``(..., m)``;
    ``gradient_lipschitz[i]`` bounds the Lipschitz constant of the partial
    derivative map in the i-th argument (operator norm).
    """

    name: str
    arity: int
    m: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    partials: Callable[[np.ndarray], np.ndarray]
    gradient_lipschitz: tuple
    params: tuple = ()

    def __call__(self, args: np.ndarray) -> np.ndarray:
        args = np.asarray(args, dtype=float)
        if args.shape[-1] != self.arity:
            raise ArityError(f"{self.name} takes {self.arity} arguments, got {args.shape[-1]}")
        return self.evaluate(args)


def identity_functional() -> FunctionalDescriptor:
    return FunctionalDescriptor(
        "identity", 1, 1,
        evaluate=lambda x: x[..., :1],
        partials=lambda x: np.ones(x.shape[:-1] + (1, 1)),
        gradient_lipschitz=(0.0,))


def product_lags_functional(l: int) -> FunctionalDescriptor:
    """F(x_0..x_l) = (x_0 x_0, x_0 x_1, ..., x_0 x_l)."""
    if l < 0:
        raise ValueError("l must be >= 0")

    def evaluate(x):
        return x[..., :1] * x

    def partials(x):
        # out[..., i, j] = d F_j / d x_i
        out = np.zeros(x.shape[:-1] + (l + 1, l + 1))
        out[..., 0, :] = x
        out[..., 0, 0] = 2 * x[..., 0]
        for i in range(1, l + 1):
            out[..., i, i] = x[..., 0]
        return out

    return FunctionalDescriptor("product_lags", l + 1, l + 1, evaluate, partials,
                                (2.0,) + (1.0,) * l, (("l", l),))


def quadratic_smooth_functional(c: float = 0.0) -> FunctionalDescriptor:
    """F(x) = x^2 / (1 + c x^2), c >= 0; c = 0 gives x^2."""
    if c < 0:
        raise ValueError("c must be >= 0")

    def evaluate(x):
        x0 = x[..., :1]
        return x0 * x0 / (1.0 + c * x0 * x0)

    def partials(x):
        x0 = x[..., 0]
        return (2 * x0 / (1.0 + c * x0 * x0) ** 2)[..., None, None]

    # sup |F''| = 2, attained at the origin
    return FunctionalDescriptor("quadratic_smooth", 1, 1, evaluate, partials, (2.0,),
                                (("c", c),))


CATALOG = {
    "identity": lambda **kw: identity_functional(),
    "product_lags": lambda l=1, **kw: product_lags_functional(int(l)),
    "quadratic_smooth": lambda c=0.0, **kw: quadratic_smooth_functional(float(c)),
}


def functional_from_dict(d: dict) -> FunctionalDescriptor:
    d = dict(d)
    name = d.pop("name")
    if name not in CATALOG:
        raise ValueError(f"unknown functional {name!r}; catalog: {sorted(CATALOG)}")
    return CATALOG[name](**d)


def sliding_windows(x: np.ndarray, n: int, arity: int) -> np.ndarray:
    """(..., n, arity) array of (x_k, ..., x_{k+arity-1}), k = 1..n."""
    return np.stack([x[..., i:i + n] for i in range(arity)], axis=-1)


def nonlinear_functional_sum(path: SamplePath, F: FunctionalDescriptor) -> np.ndarray:
    """Raw vector sum sum_{k=1}^n F(X_k, ..., X_{k+l})."""
    if path.lag_extension < F.arity - 1:
        raise ArityError(
            f"{F.name} needs lag_extension >= {F.arity - 1}, path has {path.lag_extension}")
    return F(sliding_windows(path.values, path.n, F.arity)).sum(axis=-2)
