"""Ground states of the defocusing nonlinear Schroedinger equation on [0, 1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from .spectral import fourier_interp, laplacian_apply, wavenumbers

N_NLSE = 320
N_COARSE = 40
BETA = 10.0


@dataclass
class NlseProblem:
    V: np.ndarray
    beta: float
    u: np.ndarray
    E: float
    iterations: int
    residual: float

    @property
    def N(self) -> int:
        return self.V.size


def sample_potential_nlse(rng: np.random.Generator, N: int = N_NLSE, n_coarse: int = N_COARSE) -> np.ndarray:
    """``V = -20 exp(I_F v)`` with ``v`` standard normal on ``n_coarse`` points."""
    return -20.0 * np.exp(fourier_interp(rng.standard_normal(n_coarse), N))


def _hamiltonian(u, V, beta):
    return -laplacian_apply(u, 1.0) + (V + beta * u * u) * u


def eigen_residual(u: np.ndarray, V: np.ndarray, beta: float, E: float) -> float:
    """``||-u'' + V u + beta u^3 - E u|| / ||u||``."""
    r = _hamiltonian(u, V, beta) - E * u
    return float(np.linalg.norm(r) / np.linalg.norm(u))


def energy(u: np.ndarray, V: np.ndarray, beta: float) -> float:
    """``h * sum(|u'|^2 + V u^2 + beta u^4)`` with a spectral derivative."""
    N = u.size
    du = np.fft.ifft(1j * wavenumbers(N, 1.0) * np.fft.fft(u)).real
    return float(np.sum(du * du + V * u * u + beta * u**4) / N)


def solve_nlse_ground_state(V, beta: float = BETA, tau: float = 0.01, tol: float = 1e-10,
                            max_iter: int = 100_000) -> NlseProblem:
    """Normalized gradient flow for ``-u'' + V u + beta u^3 = E u`` with ``h * sum(u^2) = 1``.

    Each step moves along the residual ``H u - mu u`` (``mu`` the current
    Rayleigh quotient) preconditioned by ``(s - Laplacian)^-1`` with
    ``s >= 1 / tau``, then renormalizes and fixes the sign so ``sum(u) > 0``.
    Starting from ``u = 1``, this converges to the ground state, and any
    fixed point solves the eigen-equation exactly.
    """
    V = np.asarray(V, dtype=np.float64)
    if beta < 0:
        raise ConfigError("beta must be non-negative")
    if tau <= 0 or tol <= 0:
        raise ConfigError("tau and tol must be positive")
    N = V.size
    h = 1.0 / N
    k2 = wavenumbers(N, 1.0) ** 2
    u = np.ones(N)
    for it in range(1, max_iter + 1):
        W = V + beta * u * u
        Hu = -laplacian_apply(u, 1.0) + W * u
        mu = h * np.dot(u, Hu)
        s = max(1.0 / tau, W.max() - mu)
        step = np.fft.ifft(np.fft.fft(Hu - mu * u) / (s + k2)).real
        new = u - step
        new /= np.sqrt(h) * np.linalg.norm(new)
        if new.sum() < 0:
            new = -new
        if not np.all(np.isfinite(new)):
            raise NumericalError(f"gradient flow produced non-finite values at iteration {it}")
        diff = np.max(np.abs(new - u))
        u = new
        if diff < tol:
            E = energy(u, V, beta)
            return NlseProblem(V, beta, u, E, it, eigen_residual(u, V, beta, E))
    raise NumericalError(f"gradient flow did not converge in {max_iter} iterations (last change {diff:.3e})")
