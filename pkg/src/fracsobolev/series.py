"""Bias/variance series of the expected error and their small-lam asymptotics.

The expected error splits as ``e(lam; s) = sigma^2 A(lam; s) + lam^2 B(lam; s)``
and all the series involved are instances of

    F_s(lam; k, alpha) = sum_i (lambda_i^{s+1} + lam)^{-k} lambda_i^alpha.

Their leading behaviour as ``lam -> 0`` comes from replacing the sum by an
integral, which yields the three-branch closed form in :func:`j_closed_form`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .spectrum import EXPLICIT, Spectrum, TrueFunction, beta_of, decay_profile

__all__ = [
    "SeriesEstimate",
    "DominatingTerms",
    "f_series",
    "j_closed_form",
    "gamma_exponent",
    "eta_A",
    "eta_B",
    "smoothing_threshold",
    "regime",
    "dominating_terms",
    "verify_dominating_order",
    "loglog_slope",
]

OVER = "over-smoothing"
UNDER = "under-smoothing"
THRESHOLD = "threshold"
THRESHOLD_GUARD = 0.05


def _fsum_rows(terms: np.ndarray) -> np.ndarray:
    terms = np.atleast_2d(terms)
    return np.array([math.fsum(row) for row in terms])


def f_series(eigenvalues, s: float, k: float, alpha: float, lam, weights=None):
    """Direct sum ``sum_i w_i (lambda_i^{s+1} + lam)^{-k} lambda_i^alpha``.

    Accepts a :class:`Spectrum` or a plain array; ``lam`` may be an array.
    Terms are accumulated with ``math.fsum`` so the result is correctly
    rounded regardless of how widely the terms range in magnitude.
    """
    ev = eigenvalues.eigenvalues if isinstance(eigenvalues, Spectrum) else np.asarray(eigenvalues, dtype=float)
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0):
        raise ValueError("F_s is evaluated for lam > 0")
    w = 1.0 if weights is None else np.asarray(weights, dtype=float)
    terms = w * ev**alpha / (ev ** (s + 1.0) + lam_arr.reshape(-1, 1)) ** k
    out = _fsum_rows(terms)
    return float(out[0]) if lam_arr.ndim == 0 else out.reshape(lam_arr.shape)


def gamma_exponent(s: float, alpha: float, beta: float) -> float:
    return (alpha - beta + 1.0) / (s + 1.0)


def eta_A(s: float, beta: float) -> float:
    return beta / (s + 1.0)


def eta_B(s: float, r: float, beta: float) -> float:
    return (beta - 2.0 * r - 1.0) / (s + 1.0) + 2.0


def smoothing_threshold(r: float, beta: float) -> float:
    """Value of ``s`` separating the two rate regimes, ``r - (beta + 1)/2``."""
    return r - (beta + 1.0) / 2.0


def regime(s: float, r: float, beta: float, guard: float = THRESHOLD_GUARD) -> str:
    t = smoothing_threshold(r, beta)
    if abs(s - t) < guard:
        return THRESHOLD
    return OVER if s > t else UNDER


def j_closed_form(s: float, k: float, alpha: float, beta: float, lam, c: float = 1.0):
    """Leading-order value of the integral approximation of ``F_s``.

    Returns ``(value, branch)`` where ``branch`` is ``"power"`` for
    ``0 < gamma < k``, ``"log"`` for ``gamma == k`` and ``"constant"`` for
    ``gamma > k``, with ``gamma = (alpha - beta + 1)/(s + 1)``.
    """
    gam = gamma_exponent(s, alpha, beta)
    if gam <= 0:
        raise ValueError(f"gamma={gam:.6g} must be positive for the integral estimate")
    lam = np.asarray(lam, dtype=float)
    if math.isclose(gam, k, rel_tol=0.0, abs_tol=1e-12):
        value = np.log(1.0 / lam) / (s + 1.0)
        branch = "log"
    elif gam < k:
        logc = (gam - k) * math.log(c) + gammaln(gam) + gammaln(k - gam) - gammaln(k)
        value = math.exp(logc) / (s + 1.0) * lam ** (gam - k)
        branch = "power"
    else:
        value = np.full_like(lam, 1.0 / ((s + 1.0) * (gam - k)))
        branch = "constant"
    return (float(value) if value.ndim == 0 else value), branch


@dataclass
class SeriesEstimate:
    """Direct sum paired with its predicted leading-order behaviour."""

    name: str
    direct_sum: np.ndarray
    exponent: float | None
    asymptotic: np.ndarray | None = None
    branch: str = ""
    constants: dict = field(default_factory=dict)


@dataclass
class DominatingTerms:
    lam: np.ndarray
    A: np.ndarray
    neg_half_A_prime: np.ndarray
    B: np.ndarray
    B1: np.ndarray
    regime: str
    estimates: dict[str, SeriesEstimate]

    @property
    def A_prime(self) -> np.ndarray:
        return -2.0 * self.neg_half_A_prime


def _prediction(spectrum, s, k, alpha, beta, lam, exponent):
    """Leading term ``(1/theta) J(lam)`` for an unperturbed parametric spectrum."""
    if spectrum.family == EXPLICIT or exponent is None:
        return None
    try:
        J, _ = j_closed_form(s, k, alpha, beta, lam)
    except ValueError:
        return None
    return np.asarray(J) / spectrum.theta


def dominating_terms(
    spectrum: Spectrum,
    true_function: TrueFunction,
    s: float,
    lam,
    beta: float | None = None,
    r: float | None = None,
) -> DominatingTerms:
    """Evaluate ``A``, ``-A'/2``, ``B`` and ``B1`` by direct summation.

    ``B`` and ``B1`` weight each mode by ``c_i^2``, which equals
    ``pt_i^2 lambda_i^{2r}`` for an ``r``-smooth true function. Predicted
    exponents follow the regime of ``s`` relative to ``r - (beta+1)/2``;
    inside the threshold guard band no prediction is attached.
    """
    if true_function.null_energy > 0:
        raise ValueError("series decomposition assumes no null-space components")
    beta = beta_of(spectrum) if beta is None else beta
    r = true_function.smoothness if r is None else r
    if r is None:
        raise ValueError("smoothness r is required for the bias predictions")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    c2 = true_function.coefficients**2
    ev = spectrum.eigenvalues

    A = f_series(ev, s, 2, 2 * s + 1, lam)
    A3 = f_series(ev, s, 3, 2 * s + 1, lam)
    B = f_series(ev, s, 2, 0.0, lam, weights=c2)
    B1 = f_series(ev, s, 3, s + 1.0, lam, weights=c2)

    reg = regime(s, r, beta)
    eA = eta_A(s, beta)
    eB = eta_B(s, r, beta)
    if reg == OVER:
        exp_B = -eB
    elif reg == UNDER:
        exp_B = 0.0
    else:
        exp_B = None
    consts = {"beta": beta, "s": s, "r": r, "eta_A": eA, "eta_B": eB}
    est = {
        "A": SeriesEstimate("A", A, -eA, _prediction(spectrum, s, 2, 2 * s + 1, beta, lam, -eA),
                            "power", dict(consts, k=2, alpha=2 * s + 1)),
        "neg_half_A_prime": SeriesEstimate(
            "neg_half_A_prime", A3, -eA - 1.0,
            _prediction(spectrum, s, 3, 2 * s + 1, beta, lam, -eA - 1.0),
            "power", dict(consts, k=3, alpha=2 * s + 1)),
        "B": SeriesEstimate("B", B, exp_B,
                            _prediction(spectrum, s, 2, 2 * r, beta, lam, exp_B),
                            reg, dict(consts, k=2, alpha=2 * r)),
        "B1": SeriesEstimate("B1", B1, exp_B,
                             _prediction(spectrum, s, 3, s + 1 + 2 * r, beta, lam, exp_B),
                             reg, dict(consts, k=3, alpha=s + 1 + 2 * r)),
    }
    return DominatingTerms(lam, A, A3, B, B1, reg, est)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class OrderCheck:
    name: str
    fitted_slope: float
    predicted_slope: float | None

    @property
    def deviation(self) -> float | None:
        if self.predicted_slope is None:
            return None
        return abs(self.fitted_slope - self.predicted_slope)


@dataclass
class OrderReport:
    regime: str
    checks: dict[str, OrderCheck]
    truncation_change: float | None

    def within(self, tol: float, names=None) -> bool:
        names = self.checks if names is None else names
        devs = [self.checks[n].deviation for n in names]
        return all(d is not None and d <= tol for d in devs)


def verify_dominating_order(
    spectrum: Spectrum,
    true_function: TrueFunction,
    s: float,
    lambda_grid,
    beta: float | None = None,
) -> OrderReport:
    """Fit log-log slopes of ``A, -A'/2, B, B1`` and compare to predictions.

    ``truncation_change`` is the relative change of ``A`` and ``B`` at the
    smallest ``lam`` when the parametric spectrum is extended to ``2N``
    unperturbed modes; it is ``None`` for explicit spectra.
    """
    lam = np.asarray(lambda_grid, dtype=float)
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise ValueError("lambda grid must lie inside (0, 1)")
    if np.log10(lam.max() / lam.min()) < 3:
        raise ValueError("lambda grid must span at least three decades")
    terms = dominating_terms(spectrum, true_function, s, lam, beta)
    checks = {}
    for name, est in terms.estimates.items():
        checks[name] = OrderCheck(name, loglog_slope(lam, est.direct_sum), est.exponent)

    trunc = None
    if spectrum.family != EXPLICIT and true_function.smoothness is not None:
        N = spectrum.N
        tail_ev = decay_profile(spectrum.family, spectrum.theta, np.arange(N + 1, 2 * N + 1))
        tail_c2 = tail_ev ** (2 * true_function.smoothness)
        i = int(np.argmin(lam))
        A_tail = f_series(tail_ev, s, 2, 2 * s + 1, lam[i])
        B_tail = f_series(tail_ev, s, 2, 0.0, lam[i], weights=tail_c2)
        trunc = max(A_tail / terms.A[i], B_tail / terms.B[i])
    return OrderReport(terms.regime, checks, trunc)
