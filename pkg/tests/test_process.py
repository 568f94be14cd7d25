import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specmdp import innovations as inn
from specmdp.errors import ArityError, ConsistencyError, InsufficientExtensionError
from specmdp.process import (CATALOG, SamplePath, autocorrelation_sums, expected_autocovariance,
                             expected_periodogram_functional, functional_from_dict,
                             nonlinear_functional_sum, periodogram, periodogram_direct,
                             periodogram_functional, product_lags_functional,
                             quadratic_smooth_functional, simulate_path, simulate_paths,
                             toeplitz_quadratic_form)
from specmdp.spectral import MACoefficients, TorusFunction, spectral_density, torus_grid


def test_identity_filter_returns_innovations():
    law = inn.gaussian()
    p = simulate_path(MACoefficients.iid(), law, 20, 0, np.random.default_rng(3))
    xi = law.sample(20, np.random.default_rng(3))
    assert np.array_equal(p.values, xi)


def test_ma1_filter_matches_definition():
    law = inn.uniform_symmetric()
    p = simulate_path(MACoefficients.ma1(0.5), law, 30, 2, np.random.default_rng(4))
    xi = law.sample(33, np.random.default_rng(4))
    assert np.allclose(p.values, xi[:-1] + 0.5 * xi[1:], rtol=0, atol=1e-15)
    assert p.values.size == 32 and p.observed.size == 30


def test_negative_offsets_follow_definition():
    c = MACoefficients(-2, np.array([0.3, -0.2, 1.0]))
    law = inn.gaussian()
    p = simulate_path(c, law, 10, 0, np.random.default_rng(5))
    xi = law.sample(12, np.random.default_rng(5))  # xi_{-1} .. xi_{10}
    # xi_{k+j} sits at position k + j + 1
    X = [sum(c[j] * xi[k + j + 1] for j in (-2, -1, 0)) for k in range(1, 11)]
    assert np.allclose(p.values, X)


def test_sample_autocovariance_ma1():
    p = simulate_path(MACoefficients.ma1(0.5), inn.gaussian(), 10 ** 5, 1, np.random.default_rng(6))
    acov = autocorrelation_sums(p, 1) / p.n
    assert abs(acov[1] - 0.5) <= 0.02


def test_iid_lag1_sum_clt_band():
    n = 10 ** 5
    p = simulate_path(MACoefficients.iid(), inn.gaussian(), n, 1, np.random.default_rng(7))
    assert abs(autocorrelation_sums(p, 1)[1] / n) <= 3 / math.sqrt(n)


def test_autocorrelation_arithmetic_and_extension():
    p = SamplePath(np.array([1.0, 2.0, 3.0, 4.0]), 3, 1)
    assert autocorrelation_sums(p, 1).tolist() == [14.0, 20.0]
    with pytest.raises(InsufficientExtensionError):
        autocorrelation_sums(p, 2)
    with pytest.raises(ValueError):
        SamplePath(np.ones(3), 3, 1)


def test_periodogram_single_point():
    p = SamplePath(np.array([-1.7]), 1)
    assert np.allclose(periodogram(p, 8).values(), 1.7 ** 2)


def test_periodogram_fast_equals_direct(rng):
    p = simulate_path(MACoefficients.ma1(0.5), inn.gaussian(), 64, 0, rng)
    G = 128
    fast = periodogram(p, G).values()
    direct = periodogram_direct(p, torus_grid(G))
    assert np.allclose(fast, direct, rtol=1e-9, atol=1e-12)


@given(st.integers(1, 300), st.integers(0, 2 ** 31))
def test_parseval(n, seed):
    p = simulate_path(MACoefficients(0, [1.0, -0.4]), inn.gaussian(), n, 0, np.random.default_rng(seed))
    ms = float(np.mean(p.observed ** 2))
    for G in {n, 1 << (n - 1).bit_length()}:
        assert abs(periodogram(p, G).values().mean() - ms) <= 1e-10 * max(1.0, ms)


def test_periodogram_grid_too_small():
    with pytest.raises(ValueError):
        periodogram(SamplePath(np.ones(10), 10), 8)


def test_functional_oracles():
    p = SamplePath(np.array([1.0, 1.0]), 2)
    assert periodogram_functional(p, TorusFunction.cosine(1)) == pytest.approx(0.5)
    x = np.array([0.3, -1.2, 2.0, 0.7, -0.1])
    p = SamplePath(x, 5)
    assert periodogram_functional(p, TorusFunction.constant(1.0)) == pytest.approx(np.mean(x * x))
    # e^{i2t} + e^{-i2t} = 2cos(2t) picks up (2/n) sum x_k x_{k+2}
    got = periodogram_functional(p, TorusFunction.cosine(2, 2.0))
    assert got == pytest.approx(2 / 5 * np.dot(x[:-2], x[2:]))


@given(st.integers(2, 200), st.lists(st.floats(-3, 3), min_size=1, max_size=9), st.integers(0, 2 ** 31))
def test_dual_routes_agree(n, b, seed):
    rng = np.random.default_rng(seed)
    p = simulate_path(MACoefficients(-1, [0.4, 1.0, 0.3]), inn.scaled_mixture(), n, 0, rng)
    h = TorusFunction.from_cosine_series(b)
    form = periodogram_functional(p, h)
    G = 1 << (n + h.degree).bit_length()
    quad = np.mean(periodogram(p, G).values() * h.values(G))
    scale = np.mean(p.observed ** 2) * np.sum(np.abs(h.fourier[1]))
    assert abs(form - quad) <= 1e-9 * scale + 1e-300


def test_consistency_error_raised_on_mismatch(monkeypatch):
    import specmdp.process as proc
    monkeypatch.setattr(proc, "toeplitz_quadratic_form", lambda x, h: 1e6)
    with pytest.raises(ConsistencyError):
        proc.periodogram_functional(SamplePath(np.ones(4), 4), TorusFunction.constant(1.0))


def test_quadratic_form_matches_dense():
    from scipy.linalg import toeplitz
    x = np.random.default_rng(1).normal(size=12)
    h = TorusFunction.from_cosine_series([1.0, 0.4, -0.3, 0.2])
    T = toeplitz([h.coefficient(k) for k in range(12)])
    assert toeplitz_quadratic_form(x, h) == pytest.approx(x @ T @ x)


def test_expected_autocovariance_oracles():
    f = spectral_density(MACoefficients.ma1(0.5))
    assert expected_autocovariance(TorusFunction.constant(2.5), 0) == 2.5
    assert expected_autocovariance(f, 1) == 0.5
    assert expected_autocovariance(f, 2) == 0.0


def test_expected_functional_oracles():
    f = spectral_density(MACoefficients.ma1(0.5))
    assert expected_periodogram_functional(f, f, 100) == pytest.approx(2.0575, abs=1e-14)
    h = TorusFunction.from_cosine_series([0.7, 1.0, 3.0])
    assert expected_periodogram_functional(TorusFunction.constant(1.0), h, 5) == pytest.approx(0.7)
    assert expected_periodogram_functional(f, f, 10 ** 9) == pytest.approx((f * f).mean())


def test_expected_functional_monte_carlo():
    c = MACoefficients.ma1(0.5)
    f = spectral_density(c)
    h = TorusFunction.from_cosine_series([1.0, 0.5, -0.4])
    n = 16
    X = simulate_paths(c, inn.uniform_symmetric(), n, 0, 10 ** 4, np.random.default_rng(11))
    vals = toeplitz_quadratic_form(X, h) / n
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - expected_periodogram_functional(f, h, n)) <= 4 * se


def test_stationarity_lagged_means():
    c = MACoefficients(0, [1.0, -0.6, 0.3])
    f = spectral_density(c)
    n = 2 * 10 ** 5
    p = simulate_path(c, inn.gaussian(), n, 3, np.random.default_rng(12))
    sums = autocorrelation_sums(p, 3) / n
    from specmdp.rates import sigma_matrix
    Sigma = sigma_matrix(f, 0.0, 3).entries
    for l in range(4):
        se = math.sqrt(Sigma[l, l] / n)
        assert abs(sums[l] - f.coefficient(l)) <= 4 * se


def test_catalog_consistency(rng):
    p = simulate_path(MACoefficients.ma1(0.5), inn.gaussian(), 50, 1, rng)
    x = p.values
    assert nonlinear_functional_sum(p, functional_from_dict({"name": "identity"}))[0] == \
        pytest.approx(x[:50].sum())
    got = nonlinear_functional_sum(p, product_lags_functional(1))
    assert np.allclose(got, autocorrelation_sums(p, 1))
    got = nonlinear_functional_sum(p, quadratic_smooth_functional(0.0))
    assert got[0] == pytest.approx(autocorrelation_sums(p, 0)[0])


def test_arity_errors():
    p = SamplePath(np.ones(5), 5)
    with pytest.raises(ArityError):
        nonlinear_functional_sum(p, product_lags_functional(2))
    with pytest.raises(ArityError):
        product_lags_functional(1)(np.ones((3, 3)))
    with pytest.raises(ValueError):
        functional_from_dict({"name": "cubic"})


@pytest.mark.parametrize("spec", [{"name": "identity"}, {"name": "product_lags", "l": 2},
                                  {"name": "quadratic_smooth", "c": 0.0},
                                  {"name": "quadratic_smooth", "c": 1.5}])
def test_recorded_lipschitz_dominates_difference_quotients(spec):
    F = functional_from_dict(spec)
    rng = np.random.default_rng(21)
    x = rng.normal(scale=2.0, size=(10 ** 4, F.arity))
    y = x + rng.normal(scale=0.5, size=x.shape)
    Px, Py = F.partials(x), F.partials(y)
    for i in range(F.arity):
        e = np.zeros(F.arity)
        e[i] = 1.0
        # change of d F / d x_i along a move of x; operator norm bounded by L_i |x - y|
        num = np.linalg.norm(Px[:, i, :] - Py[:, i, :], axis=-1)
        den = np.linalg.norm(x - y, axis=-1)
        assert np.max(num / den) <= F.gradient_lipschitz[i] + 1e-9


@pytest.mark.parametrize("spec", [{"name": "product_lags", "l": 2},
                                  {"name": "quadratic_smooth", "c": 0.7}])
def test_partials_match_finite_differences(spec):
    F = functional_from_dict(spec)
    x = np.random.default_rng(3).normal(size=(50, F.arity))
    eps = 1e-6
    P = F.partials(x)
    for i in range(F.arity):
        d = np.zeros(F.arity)
        d[i] = eps
        fd = (F(x + d) - F(x - d)) / (2 * eps)
        assert np.allclose(P[:, i, :], fd, atol=1e-6)


def test_catalog_names():
    assert set(CATALOG) == {"identity", "product_lags", "quadratic_smooth"}
