"""
The acceptance suite: eleven checks with fixed seeds, sizes and tolerances.

Each check returns a :class:`CriterionResult`; ``run_all`` runs them in order.
Shared by ``specmdp verify`` and the test suite.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import innovations
from .montecarlo import (ExperimentConfig, TolerancePolicy, clt_check, lagged_covariance_check,
                         mdp_tail_trend, mgf_domination, replicate_statistics, variance_convergence)
from .process import SamplePath, periodogram, periodogram_functional, simulate_path
from .rates import (bias_bound, legendre_numeric, rate_functional, rate_functional_variational,
                    rate_quadratic, rate_scalar, sigma_matrix, sigma_matrix_timedomain)
from .spectral import MACoefficients, TorusFunction, spectral_density
from .toeplitz import build, gaussian_quadratic_logmgf, norm_bound, operator_norm, trace_product

SEED = 20_261_017


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str, dict]],
           limit: float | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail, data = fn()
    dt = time.perf_counter() - t0
    if limit is not None and dt >= limit:
        ok = False
        detail += f"; runtime {dt:.1f}s exceeds {limit:.0f}s"
    return CriterionResult(number, name, bool(ok), detail, dt, data)


def _random_law(rng: np.random.Generator) -> innovations.InnovationLaw:
    variance = float(rng.uniform(0.5, 2.0))
    pick = int(rng.integers(4))
    if pick == 0:
        return innovations.gaussian(variance)
    if pick == 1:
        return innovations.uniform_symmetric(variance)
    if pick == 2:
        return innovations.rademacher(variance)
    return innovations.scaled_mixture(variance, float(rng.uniform(0.05, 0.5)),
                                      float(rng.uniform(1.5, 4.0)))


def _random_coeffs(rng: np.random.Generator, max_len: int = 4) -> MACoefficients:
    L = int(rng.integers(1, max_len + 1))
    return MACoefficients(int(rng.integers(-2, 2)), rng.normal(size=L))


def _random_nonnegative_poly(rng: np.random.Generator) -> TorusFunction:
    b = rng.normal(size=int(rng.integers(1, 7)))
    h = TorusFunction.from_cosine_series(b)
    lo = float(np.min(h.values(4096)))
    return h + TorusFunction.constant(max(0.0, -lo) + float(rng.uniform(0.0, 0.5)))


# ---------------------------------------------------------------------------


def trace_asymptotics():
    f = TorusFunction.from_cosine_series([1.25, 1.0])
    ns = [128, 256, 512, 1024]
    err = [abs(trace_product([f, f], n) - 2.0625) for n in ns]
    ratios = [a / b for a, b in zip(err, err[1:])]
    ok = all(1.6 <= r <= 2.4 for r in ratios)
    return ok, "error ratios " + ", ".join(f"{r:.4f}" for r in ratios), {"errors": err}


def norm_bound_check():
    rng = np.random.default_rng(SEED + 2)
    violations, checked, worst = 0, 0, 0.0
    for _ in range(50):
        h = _random_nonnegative_poly(rng)
        for n in (16, 64, 256):
            norm = operator_norm(build(h, n))
            for q in (2.0, 4.0, math.inf):
                bound = norm_bound(h, q, n)
                checked += 1
                worst = max(worst, norm / bound)
                if norm > bound * (1 + 1e-12):
                    violations += 1
    return violations == 0, f"{violations} violations in {checked} checks, max norm/bound {worst:.4f}", {}


def gaussian_logmgf_check():
    n, R = 3, 10 ** 6
    coeffs = MACoefficients.ma1(0.5)
    A = build(TorusFunction.from_cosine_series([1.0, 0.6, -0.3]), n).dense()
    cov = build(spectral_density(coeffs, 1.0), n).dense()
    lam_max = float(np.max(np.linalg.eigvals(A @ cov).real))
    lam_min = float(np.min(np.linalg.eigvals(A @ cov).real))
    # keep 4 z lambda < 1 so the Monte Carlo estimator has finite variance
    zs = [-0.15 / abs(lam_min) if lam_min < 0 else -0.15, -0.05, 0.05, 0.1 / lam_max, 0.15 / lam_max]
    q = replicate_statistics(coeffs, innovations.gaussian(), n, 0, R, SEED + 3, 3,
                             "matrix_form", A, workers=1)[:, 0]
    worst, ok = 0.0, True
    for z in zs:
        exact = float(gaussian_quadratic_logmgf(A, cov, z).value)
        a = z * q
        shift = float(np.max(a))
        w = np.exp(a - shift)
        est = shift + math.log(w.mean())
        se = float(w.std(ddof=1) / (math.sqrt(R) * w.mean()))
        dev = abs(est - exact) / se
        worst = max(worst, dev)
        ok &= dev <= 4.0
    return ok, f"5 z values, max |MC - exact| = {worst:.2f} std errors", {"z": zs}


def mgf_domination_check():
    coeffs = MACoefficients.ma1(0.5)
    lambdas = (0.0, 0.02, 0.04, 0.06, 0.08)
    violations, parts = 0, []
    for i, law in enumerate((innovations.gaussian(), innovations.uniform_symmetric(),
                             innovations.rademacher())):
        cfg = ExperimentConfig(coeffs, law, (8,), 10 ** 5, h=TorusFunction.constant(1.0),
                               lambdas=lambdas, master_seed=SEED + 40 + i)
        rep = mgf_domination(cfg, workers=1)
        violations += sum(1 for r in rep.rows if not r.passed)
        if "exact" in rep.metadata and rep.metadata["exact"]:
            for r in rep.rows:
                exact = rep.metadata["exact"][r.quantity[7:-1]]
                violations += exact > r.analytic_target * (1 + 1e-12) + 1e-12
        parts.append(f"{law.family.value} ok" if rep.passed else f"{law.family.value} FAIL")
    return violations == 0, f"{violations} violations; " + ", ".join(parts), {}


def sigma_cross_oracle():
    rng = np.random.default_rng(SEED + 5)
    worst = 0.0
    for _ in range(20):
        coeffs, law, m = _random_coeffs(rng), _random_law(rng), int(rng.integers(0, 4))
        f = spectral_density(coeffs, law.variance)
        a = sigma_matrix(f, law.kappa4, m).entries
        b = sigma_matrix_timedomain(coeffs, law, m).entries
        worst = max(worst, float(np.max(np.abs(a - b))))
    mc_ok, mc_worst = True, 0.0
    setups = [(MACoefficients.ma1(0.5), innovations.gaussian()),
              (MACoefficients(0, [1.0, -0.4, 0.3]), innovations.uniform_symmetric()),
              (MACoefficients(-1, [0.5, 1.0]), innovations.scaled_mixture(1.0, 0.2, 2.5))]
    for i, (coeffs, law) in enumerate(setups):
        rep = lagged_covariance_check(coeffs, law, 2, 200_000, master_seed=SEED + 50 + i, workers=1)
        mc_ok &= rep.passed
        mc_worst = max(mc_worst, max(r.abs_error / r.std_error for r in rep.rows if r.std_error > 0))
    ok = mc_ok and worst <= 1e-8
    return ok, (f"time-domain vs MC max {mc_worst:.2f} std errors on 3 setups; "
                f"frequency vs time domain max diff {worst:.2e} on 20 setups"), {}


def variance_check():
    cfg = ExperimentConfig(MACoefficients.ma1(0.5), innovations.gaussian(), (4096,), 20_000,
                           lags=1, master_seed=SEED + 6)
    rep = variance_convergence(cfg)
    detail = ", ".join(f"{r.quantity}={r.estimate:.4f}±{r.std_error:.4f} (target {r.analytic_target})"
                       for r in rep.rows)
    return rep.passed, detail, {"csv": rep.to_csv()}


def clt_variance_check():
    policy = TolerancePolicy(n_se=0.0, rel=0.05)
    cases = [(innovations.gaussian(), TorusFunction.constant(1.0), 2.0),
             (innovations.gaussian(), TorusFunction.cosine(1), 1.0),
             (innovations.uniform_symmetric(), TorusFunction.constant(1.0), 0.8)]
    ok, parts = True, []
    for i, (law, h, target) in enumerate(cases):
        cfg = ExperimentConfig(MACoefficients.iid(), law, (1024,), 20_000, h=h,
                               master_seed=SEED + 70 + i, tolerance=policy)
        rep = clt_check(cfg)
        row = rep.rows[-1]
        ok &= rep.passed and row.analytic_target == target
        parts.append(f"{row.estimate:.4f} vs {target}")
    return ok, ", ".join(parts), {}


def rate_consistency():
    one, two = TorusFunction.constant(1.0), TorusFunction.constant(2.0)
    closed = float(rate_functional(two, one, -1.2).value)
    scalar = float(rate_scalar(2.0, one, -1.2, 0).value)
    var = rate_functional_variational(two, one, -1.2, 8)
    eta2 = TorusFunction.from_cosine_series([1.0, 0.0, 0.5])
    var2 = rate_functional_variational(eta2, one, 0.7, 8)
    closed2 = float(rate_functional(eta2, one, 0.7).value)
    rng = np.random.default_rng(SEED + 8)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 4))
        Q = rng.normal(size=(d, d))
        S = Q @ Q.T + 0.5 * np.eye(d)
        z = rng.normal(size=d)
        lam = np.linalg.solve(S, z)
        box = max(10.0, 2.0 * float(np.max(np.abs(lam))))
        worst = max(worst, abs(legendre_numeric(z, S, box=box) - float(rate_quadratic(z, S).value)))
    ok = (abs(closed - 2.5) <= 1e-9 and abs(closed - scalar) <= 1e-9
          and abs(var - closed) <= 1e-6 and abs(var2 - closed2) <= 1e-6 and worst <= 1e-6)
    return ok, (f"functional {closed!r} vs scalar {scalar!r}; variational gaps "
                f"{abs(var - closed):.1e}, {abs(var2 - closed2):.1e}; Legendre max gap {worst:.1e}"), {}


def bias_check():
    f = TorusFunction.from_cosine_series([1.25, 1.0])
    ok, worst = True, 0.0
    for n in (128, 256, 512, 1024, 2048):
        exact, bound = bias_bound(f, f, n)
        worst = max(worst, abs(exact * n + 0.5))
        ok &= abs(exact) <= bound
    ok &= worst <= 1e-12
    return ok, f"max |n * bias + 0.5| = {worst:.1e}", {}


def tail_trend_check():
    cfg = ExperimentConfig(MACoefficients.iid(), innovations.gaussian(),
                           (2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14), 10 ** 5, b_exponent=0.1,
                           lags=0, threshold=1.0, master_seed=SEED + 10)
    rep = mdp_tail_trend(cfg)
    detail = "|L(n) + 0.25| = " + ", ".join(f"{r.abs_error:.4f}" for r in rep.rows)
    return rep.passed, detail, {"csv": rep.to_csv()}


def parseval_dual_route():
    rng = np.random.default_rng(SEED + 11)
    worst_p, worst_q = 0.0, 0.0
    for _ in range(100):
        coeffs = _random_coeffs(rng)
        law = _random_law(rng)
        n = int(rng.integers(8, 600))
        path = simulate_path(coeffs, law, n, 0, rng)
        mean_sq = float(np.mean(path.observed ** 2))
        worst_p = max(worst_p, abs(float(np.mean(periodogram(path).values())) - mean_sq) / mean_sq)
        h = TorusFunction.from_cosine_series(rng.normal(size=int(rng.integers(1, 8))))
        form = periodogram_functional(path, h, rtol=1e-9)
        G = 1 << (n + h.degree).bit_length()
        quad = float(np.mean(periodogram(path, G).values() * h.values(G)))
        scale = mean_sq * float(np.sum(np.abs(h.fourier[1])))
        worst_q = max(worst_q, abs(form - quad) / scale)
    ok = worst_p <= 1e-10 and worst_q <= 1e-9
    return ok, f"Parseval max rel err {worst_p:.1e}, dual-route max rel err {worst_q:.1e}", {}


CRITERIA = [
    (1, "trace asymptotics", trace_asymptotics, 30.0),
    (2, "Toeplitz norm bound", norm_bound_check, None),
    (3, "Gaussian quadratic log-MGF", gaussian_logmgf_check, None),
    (4, "MGF domination", mgf_domination_check, None),
    (5, "covariance cross-oracle", sigma_cross_oracle, None),
    (6, "variance convergence", variance_check, 300.0),
    (7, "CLT variance", clt_variance_check, None),
    (8, "rate-function consistency", rate_consistency, None),
    (9, "bias bound", bias_check, None),
    (10, "MDP tail trend", tail_trend_check, 600.0),
    (11, "Parseval and dual-route identities", parseval_dual_route, None),
]


def run_criterion(number: int) -> CriterionResult:
    for num, name, fn, limit in CRITERIA:
        if num == number:
            return _timed(num, name, fn, limit)
    raise KeyError(number)


def run_all(numbers=None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    out = []
    for num, *_ in CRITERIA:
        if numbers is None or num in numbers:
            res = run_criterion(num)
            if echo is not None:
                echo(res.line())
            out.append(res)
    return out
