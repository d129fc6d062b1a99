"""First-kind Fredholm testbed on [0, 1] with a Green's-function kernel.

The kernel is the Green's function of ``u'' + 4u = f`` with homogeneous
Dirichlet conditions. The normal operator ``G(x, z) = int K(x, w) K(w, z) dw``
is discretized by a uniform-weight quadrature and diagonalized in the
weighted inner product ``<u, v>_w = sum_j u_j v_j w_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .spectrum import Spectrum, explicit_spectrum

__all__ = [
    "Mesh",
    "FredholmProblem",
    "AnalyticEigensystem",
    "build_mesh",
    "greens_kernel",
    "build_problem",
    "analytic_eigensystem",
    "project_to_spectral",
    "reconstruct",
]

_SIN2 = math.sin(2.0)


@dataclass(frozen=True)
class Mesh:
    points: np.ndarray
    weights: np.ndarray
    rule: str

    @property
    def M(self) -> int:
        return self.points.size


def build_mesh(M: int, rule: str = "midpoint") -> Mesh:
    """Evenly spaced mesh on [0, 1] with quadrature weights summing to one.

    ``midpoint`` uses cell centres with weights ``1/M``; ``trapezoid`` uses
    ``M`` nodes including both endpoints.
    """
    if int(M) != M or M < 2:
        raise ValueError(f"mesh needs M >= 2 points, got {M}")
    M = int(M)
    if rule == "midpoint":
        x = (np.arange(M) + 0.5) / M
        w = np.full(M, 1.0 / M)
    elif rule == "trapezoid":
        x = np.linspace(0.0, 1.0, M)
        w = np.full(M, 1.0 / (M - 1))
        w[[0, -1]] *= 0.5
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    x.setflags(write=False)
    w.setflags(write=False)
    return Mesh(x, w, rule)


def greens_kernel(x, y):
    """Kernel ``K_1(x, y)``; vectorized over broadcastable ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any((y < 0) | (y > 1)):
        raise ValueError("kernel arguments must lie in [0, 1]")
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    return -np.sin(2.0 * (1.0 - hi)) * np.sin(2.0 * lo) / (2.0 * _SIN2)


@dataclass(frozen=True)
class FredholmProblem:
    """Discretized problem with its weighted eigensystem.

    ``eigenvectors`` has one column per retained mode holding grid values
    of the eigenfunction; columns are orthonormal under the mesh weights.
    Modes whose eigenvalue falls below ``rank_threshold * max`` are
    dropped and stand in for the null space.
    """

    mesh: Mesh
    kernel_matrix: np.ndarray
    normal_matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank_threshold: float
    rank_cutoff: int
    asymmetry: float
    min_raw_eigenvalue: float

    @property
    def spectrum(self) -> Spectrum:
        return explicit_spectrum(self.eigenvalues)

    def metadata(self) -> dict:
        return {
            "M": self.mesh.M,
            "quadrature_rule": self.mesh.rule,
            "rank_threshold": self.rank_threshold,
            "retained_modes": self.rank_cutoff,
            "asymmetry": self.asymmetry,
            "min_raw_eigenvalue": self.min_raw_eigenvalue,
        }


def build_problem(M: int = 500, tau: float = 1e-13, rule: str = "midpoint") -> FredholmProblem:
    """Discretize the kernel on ``M`` points and diagonalize the normal operator."""
    if not 0 < tau < 1:
        raise ValueError(f"rank threshold must lie in (0, 1), got {tau}")
    mesh = build_mesh(M, rule)
    x, w = mesh.points, mesh.weights
    K = greens_kernel(x[:, None], x[None, :])
    G = (K * w[None, :]) @ K
    asym = float(np.max(np.abs(G - G.T)))
    G = 0.5 * (G + G.T)

    sw = np.sqrt(w)
    S = sw[:, None] * G * sw[None, :]
    try:
        vals, vecs = la.eigh(S)
    except la.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed on the {M}-point normal matrix") from exc
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    lam_max = vals[0]
    if not lam_max > 0:
        raise RuntimeError("normal matrix has no positive eigenvalue")
    keep = int(np.sum(vals >= tau * lam_max))
    if keep == 0:
        raise RuntimeError("all eigenvalues fall below the rank cutoff")

    psi = vecs[:, :keep] / sw[:, None]
    # orient each mode like sin(n pi x), positive near x = 0
    for j in range(keep):
        nz = np.flatnonzero(np.abs(psi[:, j]) > 1e-14 * np.abs(psi[:, j]).max())
        if psi[nz[0], j] < 0:
            psi[:, j] *= -1.0
    for arr in (K, G, psi):
        arr.setflags(write=False)
    ev = vals[:keep].copy()
    ev.setflags(write=False)
    return FredholmProblem(
        mesh=mesh,
        kernel_matrix=K,
        normal_matrix=G,
        eigenvalues=ev,
        eigenvectors=psi,
        rank_threshold=tau,
        rank_cutoff=keep,
        asymmetry=asym,
        min_raw_eigenvalue=float(vals[-1]),
    )


@dataclass(frozen=True)
class AnalyticEigensystem:
    eigenvalues: np.ndarray

    @property
    def N(self) -> int:
        return self.eigenvalues.size

    @staticmethod
    def eigenfunction(n: int, x) -> np.ndarray:
        """Unit-normalized ``sqrt(2) sin(n pi x)``."""
        return math.sqrt(2.0) * np.sin(n * math.pi * np.asarray(x, dtype=float))


def analytic_eigensystem(N: int) -> AnalyticEigensystem:
    """Closed-form eigenvalues ``2 (4 - n^2 pi^2)^{-2}``, ``n = 1..N``.

    Note the quadrature-discretized operator converges to
    ``(4 - n^2 pi^2)^{-2}``, half of these values; see the README.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    n = np.arange(1, int(N) + 1, dtype=float)
    ev = 2.0 / (4.0 - n**2 * math.pi**2) ** 2
    ev.setflags(write=False)
    return AnalyticEigensystem(ev)


def project_to_spectral(problem: FredholmProblem, grid_function) -> np.ndarray:
    """Weighted inner products of a grid function with the retained modes."""
    g = np.asarray(grid_function, dtype=float)
    if g.shape != (problem.mesh.M,):
        raise ValueError(
            f"grid function has shape {g.shape}, mesh has {problem.mesh.M} points"
        )
    return problem.eigenvectors.T @ (problem.mesh.weights * g)


def reconstruct(problem: FredholmProblem, coefficients) -> np.ndarray:
    """Grid values of ``sum_i coefficients[i] psi_i``."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (problem.rank_cutoff,):
        raise ValueError(
            f"expected {problem.rank_cutoff} coefficients, got shape {c.shape}"
        )
    return problem.eigenvectors @ c
