import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specmdp import innovations as inn
from specmdp.errors import BranchError, NotEvenError, NotSymmetricError, SingularSystemError
from specmdp.rates import (Branch, CovarianceMatrix, bias_bound, clt_variance, lambda_functional,
                           lagged_product_covariance, legendre_numeric, optimal_eta_for_mean,
                           optimal_h, rate_functional, rate_functional_variational, rate_quadratic,
                           rate_scalar, sigma_matrix, sigma_matrix_timedomain, variational_objective)
from specmdp.spectral import MACoefficients, TorusFunction, spectral_density

ONE = TorusFunction.constant(1.0)
TWO = TorusFunction.constant(2.0)
F = spectral_density(MACoefficients.ma1(0.5))


def value(ev):
    return float(ev.value)


def test_sigma_matrix_oracles():
    assert np.allclose(sigma_matrix(ONE, 0.0, 1).entries, [[2, 0], [0, 1]])
    assert np.allclose(sigma_matrix(ONE, -2.0, 0).entries, [[0]])
    assert np.allclose(sigma_matrix(F, 0.0, 1).entries, [[4.125, 2.5], [2.5, 2.3125]], atol=1e-14)


def test_timedomain_oracles():
    assert np.allclose(sigma_matrix_timedomain(MACoefficients.iid(), inn.gaussian(), 0).entries, [[2]])
    assert np.allclose(sigma_matrix_timedomain(MACoefficients.iid(), inn.uniform_symmetric(), 0).entries,
                       [[0.8]])
    got = sigma_matrix_timedomain(MACoefficients.ma1(0.5), inn.gaussian(), 1).entries
    assert np.allclose(got, [[4.125, 2.5], [2.5, 2.3125]], atol=1e-8)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=5), st.integers(-3, 2),
       st.sampled_from(["gaussian", "uniform_symmetric", "rademacher", "scaled_mixture"]),
       st.floats(0.3, 3.0), st.integers(0, 3))
def test_frequency_and_time_domain_agree(vals, lo, family, s2, m):
    coeffs = MACoefficients(lo, np.array(vals))
    law = inn.InnovationLaw.from_dict({"family": family, "variance": s2})
    f = spectral_density(coeffs, s2)
    a = sigma_matrix(f, law.kappa4, m).entries
    b = sigma_matrix_timedomain(coeffs, law, m).entries
    assert np.max(np.abs(a - b)) <= 1e-8 * max(1.0, np.max(np.abs(a)))


def test_lagged_covariance_hand_values():
    # i.i.d. gaussian: Cov(X0^2, X0^2) = 2, Cov(X0 X1, X0 X1) = 1, other pairs vanish
    c, law = MACoefficients.iid(), inn.gaussian()
    assert lagged_product_covariance(c, law, 0, 0, 0) == pytest.approx(2.0)
    assert lagged_product_covariance(c, law, 1, 1, 0) == pytest.approx(1.0)
    assert lagged_product_covariance(c, law, 1, 1, 1) == pytest.approx(0.0)
    # rademacher: X0^2 is constant
    assert lagged_product_covariance(c, inn.rademacher(), 0, 0, 0) == pytest.approx(0.0)


def test_covariance_matrix_psd_and_csv():
    S = sigma_matrix(F, inn.uniform_symmetric().kappa4, 3)
    assert S.is_psd() and S.order == 4
    assert S.to_csv().count("\n") == 4
    with pytest.raises(NotSymmetricError):
        CovarianceMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_rate_quadratic_oracles():
    assert value(rate_quadratic([1.0], [[2.0]])) == pytest.approx(0.25)
    assert value(rate_quadratic([0.0, 0.0], np.eye(2))) == 0.0
    ev = rate_quadratic([1.0], [[0.0]])
    assert ev.value.is_infinite and ev.branch is Branch.NOT_ABSOLUTELY_CONTINUOUS
    with pytest.raises(ValueError):
        rate_quadratic([1.0, 2.0], [[1.0]])


def test_rate_quadratic_in_range_of_singular_matrix():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    # z = S (1, 1): <lambda, z> - lambda' S lambda / 2 = 4 - 2
    assert value(rate_quadratic([2.0, 2.0], S)) == pytest.approx(2.0)
    assert rate_quadratic([1.0, -1.0], S).value.is_infinite


def test_legendre_duality_random():
    rng = np.random.default_rng(8)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        Q = rng.normal(size=(d, d))
        S = Q @ Q.T + 0.5 * np.eye(d)
        z = rng.normal(size=d)
        box = max(10.0, 2 * np.max(np.abs(np.linalg.solve(S, z))))
        assert legendre_numeric(z, S, box=box) == pytest.approx(value(rate_quadratic(z, S)), abs=1e-6)


def test_rate_scalar_oracles():
    assert value(rate_scalar(1.0, ONE, 0.0, 0)) == pytest.approx(0.25)
    assert value(rate_scalar(1.0, ONE, 0.0, 1)) == pytest.approx(0.5)
    assert value(rate_scalar(2.0, ONE, -1.2, 0)) == pytest.approx(2.5)
    assert value(rate_scalar(1.0, F, 0.0, 0)) == pytest.approx(1 / 8.25)
    ev = rate_scalar(1.0, ONE, -2.0, 0)
    assert ev.value.is_infinite and ev.branch is Branch.DEGENERATE_KAPPA


def test_scalar_denominator_uses_double_lag():
    # 1 + cos(2 l theta) weighting: D = r0(f^2) + r_{2l}(f^2) for gaussian
    f = TorusFunction.from_cosine_series([1.0, 0.0, 0.6])
    D = (f * f).coefficient(0) + (f * f).coefficient(2)
    assert value(rate_scalar(1.0, f, 0.0, 1)) == pytest.approx(1 / (2 * D))


def test_clt_variance_oracles():
    assert clt_variance(ONE, ONE, 0.0) == pytest.approx(2.0)
    for k4 in (-1.2, 0.0, 3.0):
        assert clt_variance(ONE, TorusFunction.cosine(1), k4) == pytest.approx(1.0)
    assert clt_variance(ONE, ONE, -2.0) == pytest.approx(0.0)
    assert clt_variance(F, ONE, 0.0) == pytest.approx(4.125)


def test_lambda_functional_oracles_and_identity():
    assert lambda_functional(TorusFunction.constant(0.0), F, 0.7) == 0.0
    assert lambda_functional(ONE, ONE, 0.0) == pytest.approx(2.0)
    rng = np.random.default_rng(9)
    for _ in range(50):
        f = spectral_density(MACoefficients(0, rng.normal(size=3)), float(rng.uniform(0.5, 2)))
        h = TorusFunction.from_cosine_series(rng.normal(size=4))
        k4 = float(rng.uniform(-2, 5))
        assert abs(clt_variance(f, h, k4) - lambda_functional(h, f, k4)) <= 1e-12


def test_rate_functional_oracles():
    assert value(rate_functional(TWO, ONE, 0.0)) == pytest.approx(1.0)
    ev = rate_functional(TWO, ONE, -1.2)
    assert value(ev) == pytest.approx(2.5, abs=1e-12) and ev.branch is Branch.CLOSED_FORM
    assert abs(value(ev) - value(rate_scalar(2.0, ONE, -1.2, 0))) <= 1e-9
    assert value(rate_functional(TorusFunction.constant(0.0), F, 1.0)) == 0.0


def test_rate_functional_not_absolutely_continuous():
    f = TorusFunction.from_cosine_series([0.5, 0.0, -0.5])  # sin^2, vanishes at 0 and pi
    ev = rate_functional(ONE, f, 0.0)
    assert ev.value.is_infinite and ev.branch is Branch.NOT_ABSOLUTELY_CONTINUOUS


def test_rate_functional_vanishing_eta_stays_finite():
    # f = 1 + cos vanishes at theta = pi; eta = f / 1000 makes eta / f bounded
    f = TorusFunction.from_cosine_series([1.0, 1.0])
    ev = rate_functional(f * 1e-3, f, 0.0)
    assert ev.branch is Branch.CLOSED_FORM and value(ev) == pytest.approx(0.25e-6)


def test_ratio_refinement_branch():
    # f = (cos theta - cos 1)^2 has a double zero off the grid; 1/f is not square integrable
    c1 = math.cos(1.0)
    f = TorusFunction.from_cosine_series([c1 ** 2 + 0.5, -2 * c1, 0.5])
    ev = rate_functional(ONE, f, 0.0)
    assert ev.branch is Branch.RATIO_NOT_SQUARE_INTEGRABLE and ev.value.is_infinite


def test_rate_functional_degenerate_kappa():
    ev = rate_functional(TWO, ONE, -2.0)
    assert ev.branch is Branch.DEGENERATE_KAPPA and ev.value.is_infinite
    ev = rate_functional(TorusFunction.cosine(1), ONE, -2.0)
    assert ev.branch is Branch.DEGENERATE_KAPPA and value(ev) == pytest.approx(0.125)


def test_rate_functional_rejects_odd_eta():
    with pytest.raises(NotEvenError):
        rate_functional(TorusFunction([0.0, 0.0, 1.0], -1), ONE, 0.0)


def test_gaussian_specialisation_drops_correction():
    eta = TorusFunction.from_cosine_series([0.8, 0.3, -0.2])
    main = np.mean((eta.values(4096) / F.values(4096)) ** 2) / 4
    assert value(rate_functional(eta, F, 0.0)) == pytest.approx(main, rel=1e-12)


@pytest.mark.parametrize("f", [ONE, F], ids=["iid", "ma1"])
@pytest.mark.parametrize("k4", [0.0, -1.2, 5.0])
def test_contraction_consistency(f, k4):
    for z in (0.5, 2.0, -1.0):
        eta = optimal_eta_for_mean(z, f, k4)
        assert eta.mean() == pytest.approx(z)
        assert abs(value(rate_functional(eta, f, k4)) - value(rate_scalar(z, f, k4, 0))) <= 1e-9


def test_variational_oracles():
    assert rate_functional_variational(TWO, ONE, 0.0, 0) == pytest.approx(1.0)
    assert rate_functional_variational(TWO, ONE, -1.2, 8) == pytest.approx(2.5, abs=1e-6)
    for d in (2, 4):
        assert rate_functional_variational(2 * F * F, F, 0.0, d) == pytest.approx(2.0625, abs=1e-9)
    with pytest.raises(SingularSystemError):
        rate_functional_variational(TWO, ONE, -2.0, 3)
    with pytest.raises(ValueError):
        rate_functional_variational(TWO, ONE, 0.0, 65)


def test_variational_monotone_and_below_closed_form():
    eta = TorusFunction.from_cosine_series([1.0, 0.5, 0.2])
    for k4 in (0.0, -1.2, 2.0):
        closed = value(rate_functional(eta, F, k4))
        vals = [rate_functional_variational(eta, F, k4, d) for d in range(0, 31, 3)]
        assert np.all(np.diff(vals) >= -1e-12)
        assert max(vals) <= closed + 1e-9
        assert vals[-1] == pytest.approx(closed, rel=1e-10)


def test_optimal_h_oracles():
    h = optimal_h(TWO, ONE, 0.0)
    assert np.allclose(h.values(4096), 1.0)
    h = optimal_h(TWO, ONE, -1.2)
    assert np.allclose(h.values(4096), 2.5)
    eta = TorusFunction.from_cosine_series([1.0, 0.4])
    assert np.allclose(optimal_h(eta * 2.0, F, 0.0).values(4096), 2 * optimal_h(eta, F, 0.0).values(4096))
    with pytest.raises(BranchError):
        optimal_h(TWO, ONE, -2.0)


def test_optimal_h_attains_closed_form():
    eta = TorusFunction.from_cosine_series([1.0, 0.4, -0.3])
    for k4 in (0.0, -1.2, 4.0):
        h0 = optimal_h(eta, F, k4)
        assert variational_objective(h0, eta, F, k4) == pytest.approx(value(rate_functional(eta, F, k4)),
                                                                      rel=1e-10)


def test_bias_bound_oracles():
    assert bias_bound(ONE, TorusFunction.from_cosine_series([1, 2, 3]), 50)[0] == 0.0
    assert bias_bound(F, F, 100)[0] == pytest.approx(-0.005, abs=1e-16)
    assert bias_bound(F, F, 200)[0] == pytest.approx(-0.0025, abs=1e-16)
    for n in (128, 256, 512, 1024, 2048):
        exact, bound = bias_bound(F, F, n)
        assert abs(exact * n + 0.5) <= 1e-12 and abs(exact) <= bound


def test_bias_bound_with_derivative_norm():
    # ||f'||_2^2 = integral sin^2 = pi for f = 1.25 + cos
    exact, bound = bias_bound(F, F, 64, f_derivative_l2=math.sqrt(math.pi))
    _, bound_coef = bias_bound(F, F, 64)
    assert abs(exact) <= bound
    assert bound > 0 and bound_coef > 0


@given(st.floats(-5, 5).filter(lambda z: z == 0 or abs(z) > 1e-100), st.floats(-1.9, 6))
def test_rates_nonnegative_and_zero_only_at_zero(z, k4):
    ev = rate_scalar(z, F, k4, 0)
    assert value(ev) >= 0
    assert (value(ev) == 0) == (z == 0)
