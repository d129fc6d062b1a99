"""Synthetic spectra and true functions with controlled decay and smoothness.

Eigenvalues follow ``lambda_i = p_i^{-1} f(i)`` with ``f`` exponential
(``exp(-theta (i - 1))``) or polynomial (``i^{-theta}``), and the true
function has spectral coefficients ``|c_i| = pt_i lambda_i^r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EXPONENTIAL",
    "POLYNOMIAL",
    "EXPLICIT",
    "Spectrum",
    "TrueFunction",
    "build_spectrum",
    "explicit_spectrum",
    "build_true_function",
    "beta_of",
    "decay_profile",
]

EXPONENTIAL = "exponential"
POLYNOMIAL = "polynomial"
EXPLICIT = "explicit"

_FAMILY_ALIASES = {
    "exp": EXPONENTIAL,
    "exponential": EXPONENTIAL,
    "poly": POLYNOMIAL,
    "polynomial": POLYNOMIAL,
    "explicit": EXPLICIT,
}


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def normalize_family(family: str) -> str:
    try:
        return _FAMILY_ALIASES[family.lower()]
    except KeyError:
        raise ValueError(
            f"unknown spectrum family {family!r}; expected one of "
            f"{sorted(set(_FAMILY_ALIASES))}"
        ) from None


def decay_profile(family: str, theta: float, n) -> np.ndarray:
    """Evaluate the unperturbed decay ``f`` at (1-based) indices ``n``."""
    family = normalize_family(family)
    x = np.asarray(n, dtype=float)
    if family == EXPONENTIAL:
        return np.exp(-theta * (x - 1.0))
    if family == POLYNOMIAL:
        return x ** (-theta)
    raise ValueError("explicit spectra have no decay profile")


@dataclass(frozen=True)
class Spectrum:
    """Descending positive eigenvalues of the normal operator.

    ``p_inv`` holds the multiplicative perturbations ``p_i^{-1}`` so that
    ``eigenvalues = p_inv * f(i)`` for the parametric families.
    """

    eigenvalues: np.ndarray
    family: str = EXPLICIT
    theta: float | None = None
    perturbation_bounds: tuple[float, float] = (1.0, 1.0)
    p_inv: np.ndarray = field(default=None)  # type: ignore[assignment]
    seed: int | None = None

    def __post_init__(self):
        lam = _frozen(self.eigenvalues)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        object.__setattr__(self, "eigenvalues", lam)
        p_inv = np.ones_like(lam) if self.p_inv is None else self.p_inv
        p_inv = _frozen(p_inv)
        if p_inv.shape != lam.shape:
            raise ValueError("p_inv must match eigenvalues in length")
        object.__setattr__(self, "p_inv", p_inv)
        object.__setattr__(self, "family", normalize_family(self.family))

    @property
    def N(self) -> int:
        return self.eigenvalues.size

    @property
    def indices(self) -> np.ndarray:
        return np.arange(1, self.N + 1)


@dataclass(frozen=True)
class TrueFunction:
    """Spectral coefficients of the true solution.

    ``coefficients`` are components along the eigenbasis of the retained
    modes; ``null_components`` along the null space of the operator.
    ``coef_p_inv`` stores ``pt_i^{-1}`` and ``signs`` the sign of each ``c_i``.
    """

    coefficients: np.ndarray
    null_components: np.ndarray = field(default_factory=lambda: np.zeros(0))
    smoothness: float | None = None
    coef_p_inv: np.ndarray = field(default=None)  # type: ignore[assignment]
    signs: np.ndarray = field(default=None)  # type: ignore[assignment]
    seed: int | None = None

    def __post_init__(self):
        c = _frozen(self.coefficients)
        d = _frozen(self.null_components)
        if c.ndim != 1 or d.ndim != 1:
            raise ValueError("coefficients must be 1-d sequences")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise ValueError("true function coefficients must be finite")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "null_components", d)
        pt = np.ones_like(c) if self.coef_p_inv is None else self.coef_p_inv
        object.__setattr__(self, "coef_p_inv", _frozen(pt))
        signs = np.sign(c) if self.signs is None else self.signs
        object.__setattr__(self, "signs", _frozen(signs))

    @property
    def null_energy(self) -> float:
        return float(np.sum(self.null_components**2))

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(self.coefficients**2)) + self.null_energy)


def _check_bounds(bounds) -> tuple[float, float]:
    a, b = (float(v) for v in bounds)
    if not a > 0:
        raise ValueError(f"perturbation lower bound must be positive, got a={a}")
    if a > b:
        raise ValueError(f"perturbation bounds need a <= b, got a={a}, b={b}")
    return a, b


def build_spectrum(
    family: str,
    theta: float,
    N: int,
    perturbation_bounds: tuple[float, float] = (1.0, 1.0),
    seed: int | None = 0,
) -> Spectrum:
    """Build ``N`` eigenvalues ``lambda_i = p_i^{-1} f(i)``.

    The perturbations ``p_i^{-1}`` are drawn uniformly on ``[a, b]`` from a
    generator seeded with ``seed``; with ``a == b`` no randomness is used.

    Raises
    ------
    ValueError
        For ``theta`` outside the family's range, invalid bounds, ``N < 1``,
        or bounds wide enough to reorder the eigenvalues.
    """
    family = normalize_family(family)
    if family == EXPLICIT:
        raise ValueError("use explicit_spectrum() for explicit eigenvalues")
    theta = float(theta)
    if family == EXPONENTIAL and not theta > 0:
        raise ValueError(f"exponential decay needs theta > 0, got {theta}")
    if family == POLYNOMIAL and not theta > 1:
        raise ValueError(f"polynomial decay needs theta > 1, got {theta}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    a, b = _check_bounds(perturbation_bounds)

    # worst case ratio lambda_{i+1}/lambda_i is (b/a) f(i+1)/f(i)
    if N > 1:
        if family == EXPONENTIAL:
            max_ratio = math.exp(theta)
        else:
            max_ratio = (N / (N - 1)) ** theta
        if b / a > max_ratio * (1 + 1e-12):
            raise ValueError(
                f"perturbation bounds b/a={b / a:.6g} exceed {max_ratio:.6g}; "
                f"eigenvalues of the {family} family could lose their ordering"
            )

    if a == b:
        p_inv = np.full(N, a)
    else:
        p_inv = np.random.default_rng(seed).uniform(a, b, N)
    lam = p_inv * decay_profile(family, theta, np.arange(1, N + 1))
    return Spectrum(lam, family, theta, (a, b), p_inv, seed)


def explicit_spectrum(eigenvalues) -> Spectrum:
    """Wrap a given descending eigenvalue sequence (no decay metadata)."""
    return Spectrum(np.asarray(eigenvalues, dtype=float), EXPLICIT)


def beta_of(spectrum: Spectrum) -> float:
    """Decay constant: 1 for exponential, ``1/theta + 1`` for polynomial."""
    if spectrum.family == EXPONENTIAL:
        return 1.0
    if spectrum.family == POLYNOMIAL:
        return 1.0 / spectrum.theta + 1.0
    raise ValueError("beta is undefined for an explicit spectrum; supply it directly")


def build_true_function(
    spectrum: Spectrum,
    r: float,
    perturbation_bounds: tuple[float, float] = (1.0, 1.0),
    seed: int | None = 0,
    null_components=(),
    *,
    signs=None,
    magnitude_band: tuple[float, float] | None = None,
    beta: float | None = None,
) -> TrueFunction:
    """Draw an ``r``-smooth true function ``c_i = v_i pt_i lambda_i^r``.

    By default ``pt_i^{-1}`` is uniform on ``perturbation_bounds`` and the
    signs ``v_i`` are independent and uniform on ``{-1, +1}``. With
    ``magnitude_band=(lo, hi)`` the magnitudes ``|v_i|`` are instead uniform
    on ``[lo, hi]`` with random sign, and ``pt_i = |v_i|``. Explicit ``signs``
    override the random signs.

    ``beta`` is only needed for explicit spectra; otherwise it is taken from
    the spectrum family. Admissibility requires ``r > (beta - 1) / 2``.
    """
    r = float(r)
    if beta is None:
        beta = beta_of(spectrum) if spectrum.family != EXPLICIT else 1.0
    bound = (beta - 1.0) / 2.0
    if not r > bound:
        raise ValueError(
            f"smoothness r={r} must exceed (beta - 1)/2 = {bound:.6g} "
            f"(beta={beta:.6g}) for the true function to be square integrable"
        )
    rng = np.random.default_rng(seed)
    N = spectrum.N
    if magnitude_band is not None:
        lo, hi = _check_bounds(magnitude_band)
        pt = rng.uniform(lo, hi, N) if lo < hi else np.full(N, lo)
        pt_inv = 1.0 / pt
    else:
        a, b = _check_bounds(perturbation_bounds)
        pt_inv = rng.uniform(a, b, N) if a < b else np.full(N, a)
    if signs is None:
        v = rng.choice(np.array([-1.0, 1.0]), size=N)
    else:
        v = np.asarray(signs, dtype=float)
        if v.shape != (N,) or not np.all(np.abs(v) == 1):
            raise ValueError("signs must be a length-N sequence of +/-1")
    c = v * spectrum.eigenvalues**r / pt_inv
    return TrueFunction(
        coefficients=c,
        null_components=np.asarray(null_components, dtype=float),
        smoothness=r,
        coef_p_inv=pt_inv,
        signs=v,
        seed=seed,
    )
