"""Fixed-potential Kohn-Sham map on the periodic interval [-1, 1)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import ConfigError, NumericalError
from .eigen import symmetric_eig
from .spectral import laplacian_matrix

N_KS = 320
LENGTH = 2.0
IMAGES = range(-2, 3)
GAP_TOL = 1e-10


def ks_grid(N: int = N_KS) -> np.ndarray:
    return -1.0 + (LENGTH / N) * np.arange(N)


@dataclass
class KsProblem:
    V: np.ndarray
    n_e: int
    rho: np.ndarray
    eigenvalues: np.ndarray
    gap: float
    meta: dict = field(default_factory=dict)


def well_separation(n_g: int, sigma: float, multiplier: float, max_fill: float | None = 0.9) -> float:
    """Minimum periodic distance between well centers.

    Nominally ``multiplier * sigma``.  When ``max_fill`` is set the distance
    is capped at ``max_fill * 2 / n_g`` so that crowded configurations stay
    samplable; with ``max_fill=None`` an infeasible request raises.
    """
    d = multiplier * sigma
    if max_fill is not None:
        d = min(d, max_fill * LENGTH / n_g)
    if n_g * d >= LENGTH:
        raise ConfigError(f"{n_g} wells cannot be {d:g} apart on a period of {LENGTH:g}")
    return d


def sample_centers(rng: np.random.Generator, n_g: int, separation: float) -> np.ndarray:
    """Uniform centers on [-1, 1) conditioned on pairwise periodic distance > ``separation``.

    Ordered spacings of i.i.d. uniform points on a circle are a scaled flat
    Dirichlet vector; conditioning every spacing to exceed ``d`` leaves
    ``d + (C - n d) * Dirichlet(1, ..., 1)``.  This samples that law directly
    instead of rejecting draws.
    """
    if n_g < 1:
        raise ConfigError("need at least one well")
    slack = LENGTH - n_g * separation
    if slack <= 0:
        raise ConfigError(f"{n_g} wells cannot be {separation:g} apart")
    gaps = separation + slack * rng.dirichlet(np.ones(n_g))
    pos = np.concatenate([[0.0], np.cumsum(gaps[:-1])]) + rng.uniform(0, LENGTH)
    return rng.permutation((pos + 1.0) % LENGTH - 1.0)


def periodic_distance(a, b) -> np.ndarray:
    d = np.abs(np.asarray(a) - np.asarray(b)) % LENGTH
    return np.minimum(d, LENGTH - d)


def gaussian_wells(x: np.ndarray, centers, depths, sigma: float) -> np.ndarray:
    """``-sum_i sum_j c_i exp(-(x - r_i - 2j)^2 / (2 sigma^2))`` over images ``|j| <= 2``."""
    x = np.asarray(x, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    V = np.zeros_like(x)
    for j in IMAGES:
        diff = x[None, :] - centers[:, None] - LENGTH * j
        V -= (depths[:, None] * np.exp(-(diff**2) / (2 * sigma**2))).sum(axis=0)
    return V


def sample_potential_ks(rng: np.random.Generator, n_g: int, sigma: float = 0.05, multiplier: float = 4.0,
                        N: int = N_KS, max_fill: float | None = 0.9):
    """Random Gaussian-well potential; returns ``(V, centers, depths)``."""
    d = well_separation(n_g, sigma, multiplier, max_fill)
    centers = sample_centers(rng, n_g, d)
    depths = rng.uniform(0.8, 1.2, n_g)
    return gaussian_wells(ks_grid(N), centers, depths, sigma), centers, depths


@lru_cache(maxsize=8)
def _kinetic(N: int) -> np.ndarray:
    T = -0.5 * laplacian_matrix(N, LENGTH)
    T.setflags(write=False)
    return T


def ks_map(V: np.ndarray, n_e: int, backend: str = "lapack") -> KsProblem:
    """Density of the lowest ``n_e`` orbitals of ``-1/2 Laplacian + V`` on [-1, 1).

    ``backend`` picks LAPACK through numpy (``"lapack"``) or the in-repo
    Householder/QL solver (``"ql"``).
    """
    V = np.asarray(V, dtype=np.float64)
    N = V.size
    if not 1 <= n_e < N:
        raise ConfigError(f"need 1 <= n_e < N, got n_e={n_e}, N={N}")
    H = _kinetic(N) + np.diag(V)
    if backend == "lapack":
        try:
            w, Z = np.linalg.eigh(H)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigensolver failed: {exc}") from exc
    elif backend == "ql":
        w, Z = symmetric_eig(H)
    else:
        raise ConfigError(f"unknown eigensolver backend {backend!r}")
    h = LENGTH / N
    psi = Z[:, :n_e] / np.sqrt(h)
    rho = np.sum(psi * psi, axis=1)
    gap = float(w[n_e] - w[n_e - 1])
    return KsProblem(V, n_e, rho, w, gap, {"degenerate": gap < GAP_TOL})
