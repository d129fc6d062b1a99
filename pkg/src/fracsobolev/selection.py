"""Choosing the regularization strength: oracle, L-curve and GCV.

Only the oracle reads the noise level and the true function. The L-curve
and GCV selectors see nothing but the spectrum and the observed data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import ObservationCoefficients, expected_error
from .series import f_series
from .spectrum import Spectrum, TrueFunction

__all__ = [
    "ORACLE",
    "LCURVE",
    "GCV",
    "SelectionError",
    "LambdaGrid",
    "SelectionResult",
    "golden_section",
    "golden_refine",
    "oracle_lambda",
    "critical_point_residual",
    "lcurve_points",
    "lcurve_lambda",
    "gcv_function",
    "gcv_lambda",
]

ORACLE = "oracle"
LCURVE = "lcurve"
GCV = "gcv"

GOLDEN_TOL = 1e-3
GOLDEN_MAXITER = 60


class SelectionError(ValueError):
    """A selector cannot produce a meaningful regularization parameter."""


@dataclass(frozen=True)
class LambdaGrid:
    lo: float = 1e-25
    hi: float = 1e2
    count: int = 271

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError(f"lambda grid needs 0 < lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.count < 3:
            raise ValueError(f"lambda grid needs at least 3 points, got {self.count}")

    @property
    def points(self) -> np.ndarray:
        return np.logspace(np.log10(self.lo), np.log10(self.hi), int(self.count))


@dataclass
class SelectionResult:
    lambda_star: float
    method: str
    grid: np.ndarray
    criterion_values: np.ndarray
    index: int
    at_boundary: bool
    diagnostics: dict = field(default_factory=dict)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(func, lo: float, hi: float, tol: float = GOLDEN_TOL, maxiter: int = GOLDEN_MAXITER):
    """Golden-section minimization of ``func`` on ``[lo, hi]``.

    Stops once the bracket is narrower than the absolute tolerance ``tol``.
    scipy's golden search measures its tolerance relative to ``|x|``, which
    in ``log lam`` coordinates loosens the fit by the magnitude of
    ``log lam``; hence this small loop. Returns ``(x, fx, iterations)``.
    """
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = func(c), func(d)
    it = 0
    while b - a > tol and it < maxiter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = func(d)
        it += 1
    return (c, fc, it) if fc <= fd else (d, fd, it)


def golden_refine(func, grid: np.ndarray, k: int, tol: float = GOLDEN_TOL, maxiter: int = GOLDEN_MAXITER):
    """Golden-section refinement in ``log lam`` between the neighbours of ``k``.

    Returns ``(lam, value, iterations)``. Falls back to the grid point when
    ``k`` is an endpoint, when the grid values do not bracket a minimum, or
    when refinement does not improve on the grid value.
    """
    if not 0 < k < len(grid) - 1:
        return float(grid[k]), float(func(grid[k])), 0
    vals = [func(grid[j]) for j in (k - 1, k, k + 1)]
    if not (vals[1] <= vals[0] and vals[1] <= vals[2]):
        return float(grid[k]), float(vals[1]), 0
    u, value, iters = golden_section(
        lambda x: func(math.exp(x)), math.log(grid[k - 1]), math.log(grid[k + 1]), tol, maxiter
    )
    if value > vals[1]:
        return float(grid[k]), float(vals[1]), iters
    return float(math.exp(u)), float(value), iters


def oracle_lambda(
    spectrum: Spectrum,
    true_function: TrueFunction,
    sigma: float,
    s: float,
    grid: LambdaGrid,
    refine: bool = True,
) -> SelectionResult:
    """Minimize the expected error over the grid, then refine.

    A minimizer at either end of the grid is returned with
    ``at_boundary=True``; rate fits should drop such points. Without noise
    the error is minimized by ``lam -> 0``, so ``sigma = 0`` returns
    ``lambda_star = 0`` (the least squares estimate).
    """
    if sigma < 0:
        raise ValueError("oracle selection needs sigma >= 0")
    pts = grid.points
    if sigma == 0:
        vals = expected_error(spectrum, true_function, 0.0, s, pts)
        return SelectionResult(0.0, ORACLE, pts, vals, 0, True, {"noiseless": True})
    vals = expected_error(spectrum, true_function, sigma, s, pts)
    k = int(np.argmin(vals))
    boundary = k in (0, len(pts) - 1)
    lam, iters = float(pts[k]), 0
    if refine and not boundary:
        lam, _, iters = golden_refine(
            lambda L: expected_error(spectrum, true_function, sigma, s, L), pts, k
        )
    return SelectionResult(lam, ORACLE, pts, vals, k, boundary, {"iterations": iters})


def critical_point_residual(
    spectrum: Spectrum,
    true_function: TrueFunction,
    sigma: float,
    s: float,
    lam: float,
) -> float:
    """``lam - sigma^2 (-A'/2) / B1`` at ``lam``; zero at interior critical points."""
    if not lam > 0:
        raise ValueError("critical point residual needs lam > 0")
    if true_function.null_energy > 0:
        raise ValueError("critical point equation assumes no null-space components")
    ev = spectrum.eigenvalues
    c2 = true_function.coefficients**2
    a3 = f_series(ev, s, 3, 2 * s + 1, lam)
    b1 = f_series(ev, s, 3, s + 1.0, lam, weights=c2)
    if b1 == 0:
        raise ValueError("B1 vanishes; the true function has no identifiable part")
    return float(lam - sigma**2 * a3 / b1)


def lcurve_points(spectrum: Spectrum, obs: ObservationCoefficients, s: float, lam, solution_norm: str = "hs"):
    """Residual and solution norms along ``lam``.

    The residual is the data misfit on the retained modes,
    ``sum_i (1 - f_i)^2 b_i^2 / lambda_i``; the solution norm is the
    ``H_G^s`` penalty norm (or plain L2 with ``solution_norm="l2"``).
    """
    ev = spectrum.eigenvalues
    b = obs.b
    lam = np.asarray(lam, dtype=float)[:, None]
    ls1 = ev ** (s + 1.0)
    one_minus_f = lam / (ls1 + lam)
    resid2 = np.sum(one_minus_f**2 * b**2 / ev, axis=1)
    a = ev**s * b / (ls1 + lam)
    if solution_norm == "hs":
        sol2 = np.sum(a**2 / ev**s, axis=1)
    elif solution_norm == "l2":
        sol2 = np.sum(a**2, axis=1)
    else:
        raise ValueError(f"unknown solution norm {solution_norm!r}")
    return np.sqrt(resid2), np.sqrt(sol2)


def _menger_curvature(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Signed curvature of the circle through consecutive point triples."""
    ax, ay = x[1:-1] - x[:-2], y[1:-1] - y[:-2]
    bx, by = x[2:] - x[1:-1], y[2:] - y[1:-1]
    cx, cy = x[2:] - x[:-2], y[2:] - y[:-2]
    cross = ax * by - ay * bx
    denom = np.hypot(ax, ay) * np.hypot(bx, by) * np.hypot(cx, cy)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    return kappa


def lcurve_lambda(
    spectrum: Spectrum,
    obs: ObservationCoefficients,
    s: float,
    grid: LambdaGrid,
    solution_norm: str = "hs",
) -> SelectionResult:
    """Corner of the log-log L-curve by maximum signed curvature.

    Curvature is only defined at interior grid points; selecting the first
    or last interior point is flagged as a boundary selection.
    """
    pts = grid.points
    resid, sol = lcurve_points(spectrum, obs, s, pts, solution_norm)
    usable = (resid > 0) & (sol > 0) & np.isfinite(resid) & np.isfinite(sol)
    if usable.sum() < 3:
        raise SelectionError("degenerate L-curve: fewer than 3 usable grid points")
    if np.ptp(resid[usable]) == 0:
        raise SelectionError("degenerate L-curve: residual norm is constant")
    lam_u = pts[usable]
    rho = np.log(resid[usable])
    eta = np.log(sol[usable])
    kappa = _menger_curvature(rho, eta)
    j = int(np.argmax(kappa))
    k = j + 1
    crit = np.full(pts.shape, np.nan)
    crit[np.flatnonzero(usable)[1:-1]] = kappa
    index = int(np.flatnonzero(usable)[k])
    return SelectionResult(
        float(lam_u[k]),
        LCURVE,
        pts,
        crit,
        index,
        at_boundary=k in (1, len(lam_u) - 2),
        diagnostics={
            "corner_index": index,
            "curvature": kappa,
            "residual_norm": resid,
            "solution_norm": sol,
        },
    )


def gcv_function(spectrum: Spectrum, obs: ObservationCoefficients, s: float, lam):
    """``sum_i (1 - f_i)^2 b_i^2 / lambda_i / (sum_i (1 - f_i))^2``, vectorized."""
    ev = spectrum.eigenvalues
    lam = np.atleast_1d(np.asarray(lam, dtype=float))[:, None]
    one_minus_f = lam / (ev ** (s + 1.0) + lam)
    num = np.sum(one_minus_f**2 * obs.b**2 / ev, axis=1)
    den = np.sum(one_minus_f, axis=1) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den, den


def gcv_lambda(
    spectrum: Spectrum,
    obs: ObservationCoefficients,
    s: float,
    grid: LambdaGrid,
) -> SelectionResult:
    """Minimize generalized cross-validation over the grid, then refine."""
    if spectrum.N < 2:
        raise SelectionError("GCV is constant for a single mode; selection undefined")
    pts = grid.points
    G, den = gcv_function(spectrum, obs, s, pts)
    tiny = np.finfo(float).tiny
    underflow = ~(den > tiny) | ~np.isfinite(G)
    if underflow.all():
        raise SelectionError("GCV denominator underflows on the whole grid")
    vals = np.where(underflow, np.inf, G)
    k = int(np.argmin(vals))
    boundary = k in (0, len(pts) - 1)
    lam, iters = float(pts[k]), 0
    if not boundary:
        lam, _, iters = golden_refine(lambda L: float(gcv_function(spectrum, obs, s, L)[0][0]), pts, k)
    return SelectionResult(
        lam, GCV, pts, G, k, boundary,
        {"iterations": iters, "underflow_points": int(underflow.sum())},
    )
