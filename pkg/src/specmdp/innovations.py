"""
Centered innovation laws: moments, excess kurtosis, sub-Gaussian constant,
and sampling.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMomentError, UnsupportedFamilyError

# Fixed verification grid for the sub-Gaussian domination E exp(y xi) <= exp(K^2 y^2 / 2).
MGF_GRID = np.logspace(-3, np.log10(20.0), 200)


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM_SYMMETRIC = "uniform_symmetric"
    RADEMACHER = "rademacher"
    SCALED_MIXTURE = "scaled_mixture"


@dataclass(frozen=True)
class InnovationLaw:
    """Immutable descriptor of a centered law for the innovations.

    ``params`` holds family-specific shape parameters (``weight`` and
    ``ratio`` for the scaled Gaussian mixture).  Moment fields are derived
    in closed form at construction.
    """

    family: Family
    variance: float
    params: tuple = ()
    fourth_moment: float = field(init=False)
    kappa4: float = field(init=False)
    subgaussian_K: float | None = field(init=False)
    lsi_constant: float | None = field(init=False)
    integ_delta: float | None = field(init=False)

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        s2 = float(self.variance)
        if not s2 > 0:
            raise ValueError("variance must be positive")
        p = dict(self.params)
        if fam is Family.GAUSSIAN:
            m4 = 3 * s2 * s2
            lsi = s2
            delta = 1.0 / (4 * s2)
        elif fam is Family.UNIFORM_SYMMETRIC:
            a2 = 3 * s2
            m4 = a2 * a2 / 5
            # uniform law on an interval of length L: LSI constant L^2/pi^2
            lsi = 4 * a2 / math.pi ** 2
            delta = 1.0 / s2
        elif fam is Family.RADEMACHER:
            m4 = s2 * s2
            lsi = None  # discrete support: no smooth-gradient LSI
            delta = 1.0 / s2
        elif fam is Family.SCALED_MIXTURE:
            w, r = float(p.get("weight", 0.1)), float(p.get("ratio", 3.0))
            if not (0 < w < 1 and r > 0):
                raise ValueError("scaled_mixture needs 0 < weight < 1 and ratio > 0")
            v_narrow, v_wide = self._mixture_variances(s2, w, r)
            m4 = 3 * ((1 - w) * v_narrow ** 2 + w * v_wide ** 2)
            vmax, vmin = max(v_narrow, v_wide), min(v_narrow, v_wide)
            # Holley-Stroock perturbation of the widest Gaussian component
            wmax = w if v_wide >= v_narrow else 1 - w
            lsi = vmax * ((1 - wmax) * math.sqrt(vmax / vmin) + wmax) / wmax
            delta = 1.0 / (4 * vmax)
            object.__setattr__(self, "params", (("ratio", r), ("weight", w)))
        else:  # pragma: no cover
            raise UnsupportedFamilyError(str(fam))
        object.__setattr__(self, "variance", s2)
        object.__setattr__(self, "fourth_moment", float(m4))
        object.__setattr__(self, "kappa4", (m4 - 3 * s2 * s2) / (s2 * s2))
        object.__setattr__(self, "lsi_constant", lsi)
        object.__setattr__(self, "integ_delta", delta)
        object.__setattr__(self, "subgaussian_K", _subgaussian_K(self))

    @staticmethod
    def _mixture_variances(s2, w, r):
        v = s2 / ((1 - w) + w * r * r)
        return v, r * r * v

    @property
    def mean(self) -> float:
        return 0.0

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def log_mgf(self, y) -> np.ndarray:
        """log E exp(y xi), vectorised over y."""
        y = np.asarray(y, dtype=float)
        s2 = self.variance
        if self.family is Family.GAUSSIAN:
            return 0.5 * s2 * y * y
        if self.family is Family.RADEMACHER:
            x = np.abs(y) * math.sqrt(s2)
            return x + np.log1p(np.exp(-2 * x)) - math.log(2.0)
        if self.family is Family.UNIFORM_SYMMETRIC:
            x = np.abs(y) * math.sqrt(3 * s2)
            with np.errstate(divide="ignore", invalid="ignore"):
                # log(sinh x / x) = x + log1p(-e^{-2x}) - log 2 - log x
                big = x + np.log1p(-np.exp(-2 * x)) - math.log(2.0) - np.log(x)
                small = x * x / 6 - x ** 4 / 180
            return np.where(x < 1e-3, small, big)
        w = self.param("weight")
        v1, v2 = self._mixture_variances(s2, w, self.param("ratio"))
        return np.logaddexp(np.log1p(-w) + 0.5 * v1 * y * y, np.log(w) + 0.5 * v2 * y * y)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return sample(self, count, rng)

    def as_dict(self) -> dict:
        d = {"family": self.family.value, "variance": self.variance}
        d.update(dict(self.params))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InnovationLaw":
        d = dict(d)
        try:
            fam = Family(d.pop("family"))
        except (KeyError, ValueError) as exc:
            raise UnsupportedFamilyError(f"unknown innovation family in {d!r}") from exc
        variance = d.pop("variance", 1.0)
        return cls(fam, variance, tuple(sorted(d.items())))


def gaussian(variance: float = 1.0) -> InnovationLaw:
    return InnovationLaw(Family.GAUSSIAN, variance)


def uniform_symmetric(variance: float = 1.0) -> InnovationLaw:
    return InnovationLaw(Family.UNIFORM_SYMMETRIC, variance)


def rademacher(variance: float = 1.0) -> InnovationLaw:
    return InnovationLaw(Family.RADEMACHER, variance)


def scaled_mixture(variance: float = 1.0, weight: float = 0.1, ratio: float = 3.0) -> InnovationLaw:
    """Two-component centered Gaussian mixture; the wide component has
    probability ``weight`` and standard deviation ``ratio`` times the narrow one."""
    return InnovationLaw(Family.SCALED_MIXTURE, variance, (("ratio", ratio), ("weight", weight)))


def excess_kurtosis(law) -> float:
    """(E xi^4 - 3 (E xi^2)^2) / (E xi^2)^2."""
    m4 = getattr(law, "fourth_moment", None)
    s2 = getattr(law, "variance", None)
    if m4 is None or s2 is None:
        raise UndefinedMomentError("law has no recorded fourth moment")
    return (m4 - 3.0 * s2 * s2) / (s2 * s2)


def sample(law: InnovationLaw, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. draws from ``law`` using the generator ``rng``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    s = math.sqrt(law.variance)
    fam = law.family
    if fam is Family.GAUSSIAN:
        return s * rng.standard_normal(count)
    if fam is Family.UNIFORM_SYMMETRIC:
        a = math.sqrt(3.0) * s
        return rng.uniform(-a, a, count)
    if fam is Family.RADEMACHER:
        return s * (2.0 * rng.integers(0, 2, count) - 1.0)
    w = law.param("weight")
    v1, v2 = law._mixture_variances(law.variance, w, law.param("ratio"))
    z = rng.standard_normal(count)
    wide = rng.random(count) < w
    return z * np.where(wide, math.sqrt(v2), math.sqrt(v1))


def _subgaussian_K(law: InnovationLaw) -> float:
    # K >= sigma is forced by the y -> 0 limit of 2 log E e^{y xi} / y^2.
    fam = law.family
    if fam is Family.GAUSSIAN:
        return math.sqrt(law.variance)
    if fam is Family.SCALED_MIXTURE:
        # the ratio increases to the widest component variance as y -> inf
        v1, v2 = law._mixture_variances(law.variance, law.param("weight"), law.param("ratio"))
        return math.sqrt(max(v1, v2))
    ratio = 2.0 * law.log_mgf(MGF_GRID) / MGF_GRID ** 2
    return math.sqrt(max(law.variance, float(np.max(ratio))))


def subgaussian_constant(law: InnovationLaw) -> float:
    """Constant K with E exp(y xi) <= exp(K^2 y^2 / 2) for all real y.

    The value is checked against the log-spaced grid ``MGF_GRID``.
    """
    if law.integ_delta is None:
        raise UnsupportedFamilyError(f"{law.family.value}: no exponential square integrability")
    K = law.subgaussian_K
    if np.any(law.log_mgf(MGF_GRID) > 0.5 * K * K * MGF_GRID ** 2 + 1e-12):
        raise ArithmeticError("sub-Gaussian constant fails the grid check")
    return K
