"""Fourier interpolation and spectral second derivatives on periodic grids."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def wavenumbers(N: int, length: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(N, d=length / N)


def fourier_interp(v: np.ndarray, N: int) -> np.ndarray:
    """Trigonometric interpolation of periodic samples ``v`` onto ``N`` points.

    The spectrum is zero-padded; for even input length the Nyquist
    coefficient is split evenly between the two modes it stands for.  Works
    on the last axis.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if N < n:
        raise ConfigError(f"target length {N} is shorter than input length {n}")
    c = np.fft.rfft(v, axis=-1)
    padded = np.zeros(v.shape[:-1] + (N // 2 + 1,), dtype=complex)
    padded[..., : n // 2 + 1] = c
    if n % 2 == 0 and N > n:
        padded[..., n // 2] *= 0.5
    return np.fft.irfft(padded, N, axis=-1) * (N / n)


def laplacian_apply(u: np.ndarray, length: float) -> np.ndarray:
    """Spectral Laplacian of periodic samples along the last axis."""
    k = wavenumbers(u.shape[-1], length)
    return np.fft.ifft(-(k**2) * np.fft.fft(u, axis=-1), axis=-1).real


def laplacian_matrix(N: int, length: float) -> np.ndarray:
    """Dense symmetric spectral Laplacian on ``N`` periodic points."""
    D = laplacian_apply(np.eye(N), length)
    return 0.5 * (D + D.T)
