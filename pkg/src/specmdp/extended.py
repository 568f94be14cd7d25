"""Extended reals: a finite float or +inf, carried as an explicit tag."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ExtendedReal:
    finite: bool
    value: float = 0.0

    @classmethod
    def of(cls, x: float) -> "ExtendedReal":
        if math.isinf(x) and x > 0:
            return cls.infinity()
        if not math.isfinite(x):
            raise ValueError(f"not representable as an extended real: {x!r}")
        return cls(True, float(x))

    @classmethod
    def infinity(cls) -> "ExtendedReal":
        return cls(False, math.inf)

    @property
    def is_infinite(self) -> bool:
        return not self.finite

    def __float__(self) -> float:
        return self.value if self.finite else math.inf

    def to_json(self):
        return self.value if self.finite else "inf"

    def __repr__(self) -> str:
        return f"ExtendedReal({self.value!r})" if self.finite else "ExtendedReal(+inf)"
