"""Fractional Sobolev regularization for linear ill-posed inverse problems.

Spectral-coordinate estimators with ``H_G^s`` penalties, closed-form
expected errors, hyperparameter selectors (oracle, L-curve, GCV), the
small-lambda asymptotics of the bias/variance series, a first-kind
Fredholm testbed and noise-sweep rate experiments.
"""

__version__ = "0.1.0"

from .estimators import expected_error, observe, realized_error, regularize, sample_noise
from .fredholm import analytic_eigensystem, build_problem
from .selection import LambdaGrid, gcv_lambda, lcurve_lambda, oracle_lambda
from .series import dominating_terms, f_series, j_closed_form
from .spectrum import Spectrum, TrueFunction, build_spectrum, build_true_function, explicit_spectrum

__all__ = [
    "__version__",
    "Spectrum",
    "TrueFunction",
    "build_spectrum",
    "build_true_function",
    "explicit_spectrum",
    "build_problem",
    "analytic_eigensystem",
    "sample_noise",
    "observe",
    "regularize",
    "realized_error",
    "expected_error",
    "LambdaGrid",
    "oracle_lambda",
    "lcurve_lambda",
    "gcv_lambda",
    "f_series",
    "j_closed_form",
    "dominating_terms",
]
