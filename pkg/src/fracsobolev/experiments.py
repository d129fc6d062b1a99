"""Noise-level sweeps: oracle convergence rates and practical selection.

The oracle sweep needs no sampling since the expected error is available
in closed form. The practical sweep runs the Fredholm testbed with seeded
noise replicates and compares the oracle, L-curve and GCV selectors.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import estimators as est
from .fredholm import build_problem
from .selection import (
    GCV,
    LCURVE,
    ORACLE,
    LambdaGrid,
    SelectionError,
    gcv_lambda,
    lcurve_lambda,
    oracle_lambda,
)
from .series import OVER, THRESHOLD, THRESHOLD_GUARD, UNDER, regime
from .spectrum import beta_of, build_spectrum, build_true_function

__all__ = [
    "TheoreticalRates",
    "RateFit",
    "OracleRateConfig",
    "OracleRateRow",
    "PracticalConfig",
    "PracticalRow",
    "derive_seed",
    "theoretical_rates",
    "fit_rate",
    "run_oracle_rate_experiment",
    "run_practical_experiment",
    "summarize_practical",
    "PracticalSummary",
    "OVER",
    "UNDER",
    "THRESHOLD",
    "RELATIVE",
    "ABSOLUTE",
]

RELATIVE = "relative"
ABSOLUTE = "absolute"

log = logging.getLogger(__name__)


def derive_seed(master_seed: int, *key) -> int:
    """Stable 63-bit seed for a cell key; independent of other cells."""
    text = "/".join([str(int(master_seed))] + [str(k) for k in key])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class TheoreticalRates:
    regime: str
    lambda_exponent: float | None
    error_exponent: float | None


def theoretical_rates(s: float, r: float, beta: float, guard: float = 1e-9) -> TheoreticalRates:
    """Small-noise exponents of the optimal ``lam`` and of the optimal error.

    Over-smoothing (``s > r - (beta+1)/2``) gives ``lam ~ sigma^{(2s+2)/(2r+1)}``
    and error ``~ sigma^{2 - 2 beta/(2r+1)}``; under-smoothing replaces
    ``2r+1`` by ``2s+2+beta``. No exponents are given at the threshold.
    """
    if s < 0 or beta < 1 or not r > (beta - 1) / 2:
        raise ValueError("need s >= 0, beta >= 1 and r > (beta - 1)/2")
    reg = regime(s, r, beta, guard)
    if reg == THRESHOLD:
        return TheoreticalRates(THRESHOLD, None, None)
    denom = 2 * r + 1 if reg == OVER else 2 * s + 2 + beta
    return TheoreticalRates(reg, (2 * s + 2) / denom, 2 - 2 * beta / denom)


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    excluded: dict[int, str] = field(default_factory=dict)


def fit_rate(sigma_grid, values, exclusions: dict[int, str] | None = None) -> RateFit:
    """Ordinary least squares of ``log value`` on ``log sigma``."""
    x = np.asarray(sigma_grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape:
        raise ValueError("sigma grid and values differ in length")
    excluded = dict(exclusions or {})
    keep = np.ones(x.size, dtype=bool)
    keep[list(excluded)] = False
    if np.any(x[keep] <= 0) or np.any(y[keep] <= 0):
        raise ValueError("rate fit needs strictly positive sigma and values")
    if keep.sum() < 3:
        raise ValueError(f"rate fit needs at least 3 points, {keep.sum()} left after exclusions")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2, int(keep.sum()), excluded)


@dataclass
class OracleRateConfig:
    family: str = "exponential"
    theta: float = 1.5
    N: int = 200
    perturbation_bounds: tuple[float, float] = (1.0, 1.0)
    r_values: tuple[float, ...] = (0.7, 1.2, 1.7)
    s_values: tuple[float, ...] = tuple(0.25 * k for k in range(13))
    sigma_lo: float = 1e-7
    sigma_hi: float = 1e-1
    sigma_count: int = 15
    lambda_lo: float = 1e-25
    lambda_hi: float = 1e2
    lambda_count: int = 271
    master_seed: int = 0

    @property
    def sigmas(self) -> np.ndarray:
        return np.logspace(math.log10(self.sigma_lo), math.log10(self.sigma_hi), self.sigma_count)


@dataclass
class OracleRateRow:
    r: float
    s: float
    regime: str
    lambda_rate_fit: float
    lambda_rate_theory: float | None
    err_rate_fit: float
    err_rate_theory: float | None
    r2: float
    n_points: int
    excluded: dict[int, str]
    lambda_star: np.ndarray
    error_star: np.ndarray


def run_oracle_rate_experiment(config: OracleRateConfig) -> list[OracleRateRow]:
    """Fit the decay rates of the oracle ``lam*`` and ``e(lam*; s)`` in sigma.

    Points whose minimizer sits on the lambda-grid boundary are excluded
    from the fits and reported.
    """
    spec = build_spectrum(config.family, config.theta, config.N, config.perturbation_bounds,
                          seed=derive_seed(config.master_seed, "spectrum"))
    beta = beta_of(spec)
    grid = LambdaGrid(config.lambda_lo, config.lambda_hi, config.lambda_count)
    sigmas = config.sigmas
    rows = []
    for r in config.r_values:
        tf = build_true_function(spec, r, config.perturbation_bounds,
                                 seed=derive_seed(config.master_seed, "truth", r),
                                 signs=np.ones(spec.N))
        for s in config.s_values:
            lam_star = np.empty(sigmas.size)
            err_star = np.empty(sigmas.size)
            excluded = {}
            for j, sig in enumerate(sigmas):
                res = oracle_lambda(spec, tf, sig, s, grid)
                lam_star[j] = res.lambda_star
                err_star[j] = est.expected_error(spec, tf, sig, s, res.lambda_star)
                if res.at_boundary:
                    excluded[j] = "lambda* on grid boundary"
            try:
                lam_fit = fit_rate(sigmas, lam_star, excluded)
                err_fit = fit_rate(sigmas, err_star, excluded)
            except ValueError as exc:
                raise ValueError(f"cell r={r}, s={s}: {exc}") from exc
            theory = theoretical_rates(s, r, beta, guard=THRESHOLD_GUARD)
            rows.append(OracleRateRow(
                r=float(r), s=float(s), regime=theory.regime,
                lambda_rate_fit=lam_fit.slope, lambda_rate_theory=theory.lambda_exponent,
                err_rate_fit=err_fit.slope, err_rate_theory=theory.error_exponent,
                r2=min(lam_fit.r_squared, err_fit.r_squared), n_points=err_fit.points_used,
                excluded=excluded, lambda_star=lam_star, error_star=err_star,
            ))
            log.debug("r=%s s=%s err rate %.4f", r, s, err_fit.slope)
    return rows


@dataclass
class PracticalConfig:
    """Settings of the practical sweep.

    With ``noise_scaling="relative"`` a nominal level ``sigma`` means noise
    of standard deviation ``sigma * ||L phi*||`` per spectral coordinate, so
    the sigma grid reads as a noise-to-signal ratio. ``"absolute"`` uses
    ``sigma`` as is. ``sigma_grid`` overrides the log-spaced grid.
    """

    M: int = 500
    tau: float = 1e-13
    rule: str = "midpoint"
    r: float = 1.5
    beta: float = 1.25
    magnitude_band: tuple[float, float] = (0.95, 1.05)
    s_values: tuple[float, ...] = (0.0, 1.0, 2.0)
    sigma_lo: float = 1e-3
    sigma_hi: float = 10**-0.5
    sigma_count: int = 11
    methods: tuple[str, ...] = (ORACLE, LCURVE, GCV)
    replicates: int = 20
    lambda_lo: float = 1e-25
    lambda_hi: float = 1e2
    lambda_count: int = 271
    master_seed: int = 0
    jobs: int = 1
    noise_scaling: str = RELATIVE
    sigma_grid: tuple[float, ...] | None = None

    @property
    def sigmas(self) -> np.ndarray:
        if self.sigma_grid is not None:
            return np.asarray(self.sigma_grid, dtype=float)
        return np.logspace(math.log10(self.sigma_lo), math.log10(self.sigma_hi), self.sigma_count)


@dataclass
class PracticalRow:
    s: float
    sigma: float
    method: str
    replicate: int
    lam: float
    error: float
    failure: str = ""


def _practical_setup(config: PracticalConfig):
    problem = build_problem(config.M, config.tau, config.rule)
    spec = problem.spectrum
    tf = build_true_function(spec, config.r, seed=derive_seed(config.master_seed, "truth"),
                             magnitude_band=config.magnitude_band, beta=config.beta)
    return problem, spec, tf


def noise_scale(config: PracticalConfig, spec, tf) -> float:
    """Factor turning a nominal sigma into the spectral noise level."""
    if config.noise_scaling == ABSOLUTE:
        return 1.0
    if config.noise_scaling == RELATIVE:
        return float(np.sqrt(np.sum(spec.eigenvalues * tf.coefficients**2)))
    raise ValueError(f"unknown noise scaling {config.noise_scaling!r}")


def _practical_replicate(config: PracticalConfig, replicate: int, spec=None, tf=None) -> list[PracticalRow]:
    if spec is None:
        _, spec, tf = _practical_setup(config)
    grid = LambdaGrid(config.lambda_lo, config.lambda_hi, config.lambda_count)
    scale = noise_scale(config, spec, tf)
    rows = []
    for j, nominal in enumerate(config.sigmas):
        sig = float(nominal) * scale
        noise = est.sample_noise(sig, spec.N, derive_seed(config.master_seed, "noise", replicate, j))
        obs = est.observe(spec, tf, noise)
        for s in config.s_values:
            for method in config.methods:
                try:
                    if method == ORACLE:
                        lam = oracle_lambda(spec, tf, sig, s, grid).lambda_star
                    elif method == LCURVE:
                        lam = lcurve_lambda(spec, obs, s, grid).lambda_star
                    elif method == GCV:
                        lam = gcv_lambda(spec, obs, s, grid).lambda_star
                    else:
                        raise ValueError(f"unknown selector {method!r}")
                except SelectionError as exc:
                    rows.append(PracticalRow(float(s), float(nominal), method, replicate,
                                             math.nan, math.nan, str(exc)))
                    continue
                err = est.realized_error(spec, tf, noise, s, lam)
                rows.append(PracticalRow(float(s), float(nominal), method, replicate, lam, err))
    return rows


def _replicate_task(args):
    config, replicate = args
    return _practical_replicate(config, replicate)


def run_practical_experiment(config: PracticalConfig) -> list[PracticalRow]:
    """Selected ``lam`` and realized error per (replicate, sigma, s, method).

    The true function is drawn once; each (replicate, sigma) cell gets its
    own noise stream, shared by every ``s`` and selector so that methods are
    compared on identical data. Rows come back sorted by cell key whatever
    the degree of parallelism.
    """
    _, spec, tf = _practical_setup(config)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            chunks = list(pool.map(_replicate_task, [(config, k) for k in range(config.replicates)]))
    else:
        chunks = [_practical_replicate(config, k, spec, tf) for k in range(config.replicates)]
    rows = [row for chunk in chunks for row in chunk]
    order = {m: i for i, m in enumerate(config.methods)}
    rows.sort(key=lambda w: (w.s, w.sigma, order[w.method], w.replicate))
    return rows


@dataclass
class PracticalSummary:
    sigmas: np.ndarray
    s_values: tuple[float, ...]
    median_lambda: dict = field(default_factory=dict)
    median_error: dict = field(default_factory=dict)
    median_ratio: dict = field(default_factory=dict)
    lambda_spread: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_practical(rows: list[PracticalRow], config: PracticalConfig) -> PracticalSummary:
    """Medians over replicates per (s, sigma, method).

    ``median_ratio[s]`` is the per-sigma median of L-curve error over oracle
    error; ``lambda_spread[(s, method)]`` is the median over replicates of
    ``log10(max lam / min lam)`` across the sigma grid.
    """
    sigmas = config.sigmas
    out = PracticalSummary(sigmas, tuple(config.s_values))
    by_key: dict = {}
    for w in rows:
        by_key.setdefault((w.s, w.method), {}).setdefault(w.replicate, {})[w.sigma] = w
    for (s, method), reps in by_key.items():
        lam = np.array([[reps[k][sg].lam for sg in sigmas] for k in sorted(reps)])
        err = np.array([[reps[k][sg].error for sg in sigmas] for k in sorted(reps)])
        out.median_lambda[(s, method)] = np.nanmedian(lam, axis=0)
        out.median_error[(s, method)] = np.nanmedian(err, axis=0)
        with np.errstate(invalid="ignore"):
            spread = np.log10(np.nanmax(lam, axis=1) / np.nanmin(lam, axis=1))
        out.lambda_spread[(s, method)] = float(np.nanmedian(spread))
    for s in config.s_values:
        if (s, LCURVE) in by_key and (s, ORACLE) in by_key:
            lc, orc = by_key[(s, LCURVE)], by_key[(s, ORACLE)]
            ratio = np.array([[lc[k][sg].error / orc[k][sg].error for sg in sigmas] for k in sorted(lc)])
            out.median_ratio[s] = np.nanmedian(ratio, axis=0)
    return out

