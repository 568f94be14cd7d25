"""Moderate deviations for moving-average processes: periodograms, Toeplitz
operators, rate functions and Monte Carlo checks."""
from .errors import *  # noqa: F401,F403
from .extended import ExtendedReal
from .innovations import Family, InnovationLaw, excess_kurtosis, subgaussian_constant
from .spectral import MACoefficients, TorusFunction, spectral_density, transfer_function
from .process import SamplePath, periodogram, periodogram_functional, simulate_path
from .toeplitz import ToeplitzOperator, build, operator_norm, norm_bound, trace_product
from .rates import (CovarianceMatrix, rate_functional, rate_quadratic, rate_scalar,
                    sigma_matrix)

__version__ = "0.1.0"
