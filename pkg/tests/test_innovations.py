import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specmdp import innovations as inn
from specmdp.errors import UndefinedMomentError, UnsupportedFamilyError

LAWS = [inn.gaussian(), inn.uniform_symmetric(), inn.rademacher(), inn.scaled_mixture()]


@pytest.mark.parametrize("law, expected", [
    (inn.gaussian(), 0.0),
    (inn.uniform_symmetric(), -6 / 5),
    (inn.rademacher(), -2.0),
])
def test_excess_kurtosis_oracles(law, expected):
    assert inn.excess_kurtosis(law) == pytest.approx(expected, abs=1e-14)


def test_mixture_kurtosis_closed_form():
    # weight 0.1, ratio 3: narrow variance 1/1.8, wide 9/1.8
    v1, v2 = 1 / 1.8, 9 / 1.8
    m4 = 3 * (0.9 * v1 ** 2 + 0.1 * v2 ** 2)
    assert inn.scaled_mixture().kappa4 == pytest.approx(m4 - 3, rel=1e-14)
    assert inn.scaled_mixture().kappa4 > 0


def test_excess_kurtosis_needs_moments():
    with pytest.raises(UndefinedMomentError):
        inn.excess_kurtosis(object())


@given(st.floats(0.1, 10.0))
def test_kurtosis_scale_free(s2):
    for make in (inn.gaussian, inn.uniform_symmetric, inn.rademacher, inn.scaled_mixture):
        law = make(s2)
        assert law.kappa4 == pytest.approx(make(1.0).kappa4, abs=1e-12)
        assert law.kappa4 + 2 >= -1e-12


def test_rademacher_support(rng):
    x = inn.sample(inn.rademacher(), 4, rng)
    assert set(np.unique(x)) <= {-1.0, 1.0}


def test_gaussian_sample_variance(rng):
    x = inn.sample(inn.gaussian(), 10 ** 6, rng)
    assert abs(x.var() - 1.0) <= 0.01


def test_sampling_is_deterministic():
    for law in LAWS:
        a = inn.sample(law, 1000, np.random.default_rng(7))
        b = inn.sample(law, 1000, np.random.default_rng(7))
        assert np.array_equal(a, b)


@pytest.mark.parametrize("law", LAWS, ids=lambda l: l.family.value)
def test_sample_kurtosis_matches(law):
    x = inn.sample(law, 10 ** 6, np.random.default_rng(99))
    s2 = law.variance
    z = x * x
    m4 = np.mean(z * z)
    # delta-method standard error of the fourth-moment estimator
    se = np.std(z * z) / math.sqrt(x.size) / s2 ** 2
    if se == 0:
        assert m4 / s2 ** 2 - 3 == pytest.approx(law.kappa4)
    else:
        assert abs(m4 / s2 ** 2 - 3 - law.kappa4) <= 5 * se + 0.01


@pytest.mark.parametrize("law, K", [(inn.gaussian(), 1.0), (inn.rademacher(), 1.0),
                                    (inn.uniform_symmetric(), 1.0)])
def test_subgaussian_constant_oracles(law, K):
    assert inn.subgaussian_constant(law) == pytest.approx(K, rel=1e-12)


@pytest.mark.parametrize("law", LAWS, ids=lambda l: l.family.value)
def test_subgaussian_domination_on_grid(law):
    K = inn.subgaussian_constant(law)
    y = inn.MGF_GRID
    assert np.all(law.log_mgf(y) <= 0.5 * K * K * y * y + 1e-12)
    assert np.all(law.log_mgf(-y) <= 0.5 * K * K * y * y + 1e-12)


def test_uniform_minimal_K_oracle():
    # the minimal grid-feasible K is the sup of 2 log(sinh(x)/x) / y^2, x = sqrt(3) y,
    # which approaches 1 as y -> 0 and decreases after
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    ratio = [2 * mpmath.log(mpmath.sinh(mpmath.sqrt(3) * y) / (mpmath.sqrt(3) * y)) / y ** 2
             for y in map(mpmath.mpf, np.logspace(-3, math.log10(20), 300))]
    assert max(ratio) <= 1
    assert inn.uniform_symmetric().subgaussian_K == pytest.approx(1.0)


def test_mixture_K_is_wide_component():
    law = inn.scaled_mixture(1.0, 0.1, 3.0)
    assert law.subgaussian_K == pytest.approx(math.sqrt(9 / 1.8))


def test_log_mgf_against_quadrature():
    y = np.array([0.0, 0.3, 1.7, 6.0])
    law = inn.uniform_symmetric(2.0)
    a = math.sqrt(6.0)
    t = np.linspace(-a, a, 200001)
    for yi, got in zip(y, law.log_mgf(y)):
        expected = math.log(np.trapezoid(np.exp(yi * t), t) / (2 * a))
        assert got == pytest.approx(expected, rel=1e-8, abs=1e-12)
    assert inn.rademacher().log_mgf(2.0) == pytest.approx(math.log(math.cosh(2.0)))


def test_lsi_metadata():
    assert inn.rademacher().lsi_constant is None
    assert inn.gaussian(2.0).lsi_constant == 2.0
    assert inn.uniform_symmetric(1.0).lsi_constant == pytest.approx(12 / math.pi ** 2)


def test_dict_round_trip_and_unknown_family():
    for law in LAWS:
        assert inn.InnovationLaw.from_dict(law.as_dict()) == law
    with pytest.raises(UnsupportedFamilyError):
        inn.InnovationLaw.from_dict({"family": "cauchy"})


def test_invalid_parameters():
    with pytest.raises(ValueError):
        inn.gaussian(0.0)
    with pytest.raises(ValueError):
        inn.scaled_mixture(1.0, 1.5, 2.0)
    with pytest.raises(ValueError):
        inn.sample(inn.gaussian(), 0, np.random.default_rng(0))
