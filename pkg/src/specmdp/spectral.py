"""
Transfer functions, spectral densities and functions on the torus.

Conventions
-----------
The torus is ``[-pi, pi)`` sampled on the uniform grid
``theta_m = -pi + 2*pi*m/G``.  Fourier coefficients follow

    r_k(h) = (1/2pi) * integral exp(i k theta) h(theta) dtheta,

so that ``h(theta) = sum_k r_k(h) exp(-i k theta)``.  Coefficient-side
quantities (``mean``, ``coefficient``) carry the ``1/2pi`` normalisation;
``lq_norm`` does not (it integrates against plain ``dtheta``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import AliasingError

DEFAULT_GRID_SIZE = 4096


def torus_grid(grid_size: int) -> np.ndarray:
    """Uniform grid ``-pi + 2*pi*m/G``, m = 0..G-1."""
    return -np.pi + 2.0 * np.pi * np.arange(grid_size) / grid_size


def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length()


# ---------------------------------------------------------------------------
# Moving-average coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MACoefficients:
    """Finite-support real sequence ``a_j``, j = lo..lo+len(values)-1.

    ``tail_l2_sq`` records the caller-supplied bound on the squared l2 mass
    discarded by truncation of an infinite sequence (0 for exact supports).
    """

    lo: int
    values: np.ndarray
    tail_l2_sq: float = 0.0
    l2_norm_sq: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d sequence")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "l2_norm_sq", float(np.dot(vals, vals)))

    @property
    def hi(self) -> int:
        return self.lo + self.values.size - 1

    @property
    def radius(self) -> int:
        """max |j| over the stored support."""
        return max(abs(self.lo), abs(self.hi))

    def __getitem__(self, j: int) -> float:
        if self.lo <= j <= self.hi:
            return float(self.values[j - self.lo])
        return 0.0

    def as_dict(self) -> dict:
        return {"offset": self.lo, "values": self.values.tolist(),
                "tail_l2_sq": self.tail_l2_sq}

    @classmethod
    def from_dict(cls, d: dict) -> "MACoefficients":
        return cls(int(d.get("offset", 0)), np.asarray(d["values"], float),
                   float(d.get("tail_l2_sq", 0.0)))

    @classmethod
    def iid(cls) -> "MACoefficients":
        return cls(0, np.array([1.0]))

    @classmethod
    def ma1(cls, b: float) -> "MACoefficients":
        """X_k = xi_k + b xi_{k+1}."""
        return cls(0, np.array([1.0, b]))

    @classmethod
    def geometric(cls, rho: float, terms: int | None = None) -> "MACoefficients":
        """a_j = rho**j for j = 0..terms-1, with the exact discarded l2 tail."""
        if not 0 <= abs(rho) < 1:
            raise ValueError("geometric coefficients need |rho| < 1")
        if terms is None:
            terms = 1 if rho == 0 else int(np.ceil(np.log(1e-17) / np.log(abs(rho)))) + 1
        vals = rho ** np.arange(terms, dtype=float)
        tail = rho ** (2 * terms) / (1 - rho * rho)
        return cls(0, vals, float(tail))


def transfer_function(coeffs: MACoefficients, grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """g(theta_m) = sum_j a_j exp(i j theta_m) on the uniform torus grid."""
    if grid_size < 2 * coeffs.radius + 1:
        raise AliasingError(
            f"grid_size={grid_size} < 2*{coeffs.radius}+1 aliases the transfer function")
    j = np.arange(coeffs.lo, coeffs.hi + 1)
    bins = np.zeros(grid_size, dtype=complex)
    # exp(i j theta_m) = (-1)^j exp(2 pi i j m / G)
    np.add.at(bins, j % grid_size, coeffs.values * np.where(j % 2, -1.0, 1.0))
    return np.fft.ifft(bins) * grid_size


def fejer_truncate(coeffs: MACoefficients, N: int) -> MACoefficients:
    """Fejer damping a_j (1 - |j|/N) for |j| <= N, zero elsewhere."""
    if N < 1:
        raise ValueError("N must be >= 1")
    j = np.arange(coeffs.lo, coeffs.hi + 1)
    damped = np.where(np.abs(j) <= N, coeffs.values * (1.0 - np.abs(j) / N), 0.0)
    keep = np.nonzero(damped)[0]
    if keep.size == 0:
        return MACoefficients(0, np.array([0.0]))
    return MACoefficients(int(j[keep[0]]), damped[keep[0]:keep[-1] + 1])


# ---------------------------------------------------------------------------
# Functions on the torus
# ---------------------------------------------------------------------------


class TorusFunction:
    """A function on the torus, held as Fourier coefficients and/or grid samples.

    Parameters
    ----------
    fourier : array_like, optional
        Coefficients ``r_k`` for ``k = offset, offset+1, ...`` (finite support,
        i.e. a trigonometric polynomial).
    offset : int
        Lag of ``fourier[0]``.
    grid : array_like, optional
        Samples on ``torus_grid(len(grid))``.  Used alone for functions that
        are not trigonometric polynomials.
    """

    __slots__ = ("_coef", "_offset", "_grid")

    def __init__(self, fourier=None, offset: int = 0, grid=None):
        if fourier is None and grid is None:
            raise ValueError("need Fourier coefficients or grid samples")
        self._coef = None
        self._offset = 0
        if fourier is not None:
            c = np.atleast_1d(np.asarray(fourier))
            if not np.iscomplexobj(c):
                c = c.astype(float)
            nz = np.nonzero(c)[0]
            if nz.size == 0:
                c, offset = np.zeros(1, dtype=c.dtype), 0
            else:
                c, offset = c[nz[0]:nz[-1] + 1], int(offset) + int(nz[0])
            c.setflags(write=False)
            self._coef, self._offset = c, offset
        self._grid = None
        if grid is not None:
            g = np.asarray(grid)
            if not np.iscomplexobj(g):
                g = g.astype(float)
            g = g.copy()
            g.setflags(write=False)
            self._grid = g

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "TorusFunction":
        return cls([float(c)], 0)

    @classmethod
    def cosine(cls, k: int = 1, amplitude: float = 1.0) -> "TorusFunction":
        """amplitude * cos(k theta)."""
        k = abs(int(k))
        if k == 0:
            return cls.constant(amplitude)
        c = np.zeros(2 * k + 1)
        c[0] = c[-1] = amplitude / 2.0
        return cls(c, -k)

    @classmethod
    def from_cosine_series(cls, b: Sequence[float]) -> "TorusFunction":
        """b[0] + sum_{k>=1} b[k] cos(k theta)."""
        b = np.asarray(b, dtype=float)
        d = b.size - 1
        c = np.zeros(2 * d + 1)
        c[d] = b[0]
        c[d + 1:] = b[1:] / 2.0
        c[:d] = b[1:][::-1] / 2.0
        return cls(c, -d)

    @classmethod
    def from_grid(cls, values) -> "TorusFunction":
        return cls(grid=values)

    # -- representation ---------------------------------------------------

    @property
    def is_trig_polynomial(self) -> bool:
        return self._coef is not None

    @property
    def grid_size(self) -> int | None:
        return None if self._grid is None else self._grid.size

    @property
    def degree(self) -> int:
        """Largest |k| with a nonzero coefficient."""
        self._need_coef()
        return max(abs(self._offset), abs(self._offset + self._coef.size - 1))

    @property
    def fourier(self) -> tuple[int, np.ndarray]:
        """(offset, coefficient array)."""
        self._need_coef()
        return self._offset, self._coef

    def _need_coef(self):
        if self._coef is None:
            raise ValueError("operation needs a trigonometric-polynomial representation")

    def coefficient(self, k: int):
        """r_k(h); exact for trig polynomials, grid quadrature otherwise."""
        if self._coef is not None:
            i = int(k) - self._offset
            if 0 <= i < self._coef.size:
                return self._coef[i].item()
            return 0.0
        theta = torus_grid(self._grid.size)
        r = np.mean(np.exp(1j * k * theta) * self._grid)
        return r.real if abs(r.imag) <= 1e-14 * max(1.0, abs(r.real)) else r

    def coefficients(self, ks: Iterable[int]) -> np.ndarray:
        return np.array([self.coefficient(k) for k in ks])

    def mean(self) -> float:
        """(1/2pi) * integral of h."""
        return self.coefficient(0)

    def is_even(self, tol: float = 1e-12) -> bool:
        if self._coef is not None:
            lo, hi = self._offset, self._offset + self._coef.size - 1
            if lo != -hi:
                return False
            scale = max(1.0, float(np.max(np.abs(self._coef))))
            return bool(np.all(np.abs(self._coef - self._coef[::-1]) <= tol * scale))
        g = self._grid
        # theta_m -> -theta_m maps index m to (G - m) mod G
        mirrored = g[(-np.arange(g.size)) % g.size]
        return bool(np.all(np.abs(g - mirrored) <= tol * max(1.0, float(np.max(np.abs(g))))))

    def values(self, grid_size: int | None = None) -> np.ndarray:
        """Samples on ``torus_grid(grid_size)``.

        Trigonometric polynomials are evaluated exactly at any grid size.
        Grid-only functions must be requested at their own size.
        """
        if self._grid is not None and (grid_size is None or grid_size == self._grid.size):
            return self._grid
        if self._coef is None:
            raise ValueError(
                f"grid-only function of size {self._grid.size} requested at size {grid_size}")
        if grid_size is None:
            grid_size = max(DEFAULT_GRID_SIZE, _next_pow2(2 * self.degree + 1))
        k = np.arange(self._offset, self._offset + self._coef.size)
        bins = np.zeros(grid_size, dtype=complex)
        # exp(-i k theta_m) = (-1)^k exp(-2 pi i k m / G)
        np.add.at(bins, k % grid_size, self._coef * np.where(k % 2, -1.0, 1.0))
        out = np.fft.fft(bins)
        if self._is_real():
            return out.real
        return out

    def _is_real(self) -> bool:
        c = self._coef
        return bool(np.allclose(c, np.conj(c[::-1]), rtol=0, atol=1e-14 * max(1.0, np.max(np.abs(c))))
                    and self._offset == -(self._offset + c.size - 1))

    def with_grid(self, grid_size: int = DEFAULT_GRID_SIZE) -> "TorusFunction":
        """Copy carrying both representations."""
        if self._coef is None:
            return TorusFunction(grid=self.values(grid_size))
        return TorusFunction(self._coef, self._offset, self.values(grid_size))

    def as_dict(self) -> dict:
        out = {}
        if self._coef is not None:
            c = self._coef
            out["offset"] = self._offset
            out["fourier"] = c.real.tolist() if not np.iscomplexobj(c) else \
                [[z.real, z.imag] for z in c]
        if self._grid is not None:
            out["grid"] = np.real(self._grid).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TorusFunction":
        fourier = d.get("fourier")
        if fourier is not None and fourier and isinstance(fourier[0], list):
            fourier = [complex(a, b) for a, b in fourier]
        return cls(fourier, int(d.get("offset", 0)), d.get("grid"))

    # -- arithmetic -------------------------------------------------------

    def _binary_grid_size(self, other: "TorusFunction") -> int | None:
        sizes = {s for s in (self.grid_size, other.grid_size) if s is not None}
        if len(sizes) > 1:
            raise ValueError(f"incompatible grid sizes {sorted(sizes)}")
        return sizes.pop() if sizes else None

    def __add__(self, other):
        if np.isscalar(other):
            other = TorusFunction.constant(other)
        if self._coef is not None and other._coef is not None:
            lo = min(self._offset, other._offset)
            hi = max(self._offset + self._coef.size, other._offset + other._coef.size)
            dtype = np.result_type(self._coef, other._coef)
            c = np.zeros(hi - lo, dtype=dtype)
            c[self._offset - lo:self._offset - lo + self._coef.size] += self._coef
            c[other._offset - lo:other._offset - lo + other._coef.size] += other._coef
            return TorusFunction(c, lo)
        G = self._binary_grid_size(other)
        return TorusFunction(grid=self.values(G) + other.values(G))

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, TorusFunction) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            if self._coef is not None:
                return TorusFunction(self._coef * other, self._offset)
            return TorusFunction(grid=self._grid * other)
        if self._coef is not None and other._coef is not None:
            return TorusFunction(np.convolve(self._coef, other._coef),
                                 self._offset + other._offset)
        G = self._binary_grid_size(other)
        return TorusFunction(grid=self.values(G) * other.values(G))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self * (1.0 / other)
        G = self._binary_grid_size(other) or DEFAULT_GRID_SIZE
        return TorusFunction(grid=self.values(G) / other.values(G))

    def __pow__(self, p: int):
        if int(p) != p or p < 0:
            raise ValueError("only nonnegative integer powers")
        out = TorusFunction.constant(1.0)
        for _ in range(int(p)):
            out = out * self
        return out

    def __repr__(self) -> str:
        if self._coef is not None:
            return f"TorusFunction(degree={self.degree})"
        return f"TorusFunction(grid_size={self._grid.size})"


def spectral_density(coeffs: MACoefficients, variance: float = 1.0) -> TorusFunction:
    """f = variance * |g|^2, with r_k(f) = variance * sum_j a_j a_{j+k}."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    a = coeffs.values
    acf = np.correlate(a, a, mode="full") * variance
    return TorusFunction(acf, -(a.size - 1))


def product_fourier_coefficient(functions: Sequence[TorusFunction], k: int = 0) -> float:
    """Exact r_k of the pointwise product of trigonometric polynomials."""
    prod = TorusFunction.constant(1.0)
    for h in functions:
        h._need_coef()
        prod = prod * h
    return prod.coefficient(k)


def quadrature_coefficient(h: TorusFunction, k: int, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """r_k(h) by the rectangle rule on the uniform grid (exact for degree < G - |k|)."""
    theta = torus_grid(grid_size)
    r = np.mean(np.exp(1j * k * theta) * h.values(grid_size))
    return float(r.real)


def lq_norm(h: TorusFunction, q: float, grid_size: int | None = None) -> float:
    """(integral |h|^q dtheta)^(1/q) by grid quadrature; q = inf gives the grid max."""
    if q < 1:
        raise ValueError("q must be >= 1")
    v = np.abs(h.values(grid_size))
    if np.isinf(q):
        return float(np.max(v))
    return float((2.0 * np.pi * np.mean(v ** q)) ** (1.0 / q))
