"""Dense symmetric eigensolver: Householder tridiagonalization and implicit QL."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, NumericalError


def tridiagonalize(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Householder reduction ``A = Q T Q^T``; returns ``(diag, offdiag, Q)``."""
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError(f"matrix must be square, got {A.shape}")
    Q = np.eye(n)
    for k in range(n - 2):
        x = A[k + 1 :, k]
        nx = np.linalg.norm(x)
        if nx == 0:
            continue
        alpha = -math.copysign(nx, x[0])
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        A[k + 1 :, k:] -= 2 * np.outer(v, v @ A[k + 1 :, k:])
        A[k:, k + 1 :] -= 2 * np.outer(A[k:, k + 1 :] @ v, v)
        Q[:, k + 1 :] -= 2 * np.outer(Q[:, k + 1 :] @ v, v)
    return np.diag(A).copy(), np.diag(A, 1).copy(), Q


def tridiagonal_ql(d: np.ndarray, e: np.ndarray, Z: np.ndarray | None = None, max_iter: int = 60):
    """Eigenvalues (ascending) and rotated ``Z`` for the symmetric tridiagonal ``(d, e)``."""
    d = np.array(d, dtype=np.float64)
    n = d.size
    e = np.append(np.asarray(e, dtype=np.float64), 0.0)
    Z = np.eye(n) if Z is None else np.array(Z, dtype=np.float64)
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                if abs(e[m]) <= eps * (abs(d[m]) + abs(d[m + 1])):
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise NumericalError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s, c = f / r, g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = Z[:, i + 1].copy()
                Z[:, i + 1] = s * Z[:, i] + c * zi1
                Z[:, i] = c * Z[:, i] - s * zi1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    order = np.argsort(d, kind="stable")
    return d[order], Z[:, order]


def symmetric_eig(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending and orthonormal eigenvectors (columns) of symmetric ``A``."""
    A = np.asarray(A, dtype=np.float64)
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ConfigError("matrix is not symmetric")
    d, e, Q = tridiagonalize(A)
    w, Z = tridiagonal_ql(d, e, Q)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(Z))):
        raise NumericalError("eigensolver produced non-finite values")
    return w, Z
