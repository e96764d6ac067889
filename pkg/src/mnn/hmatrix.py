"""Uniform H-matrix construction and application on a dyadic partition.

A dense operator is split into far-field level matrices plus a near-field
adjacent part, every level is compressed to shared per-box bases
``U_I``, ``V_J`` and small coupling blocks ``M_IJ``, and the factored form is
applied level by level without ever forming a dense matrix.

Factor layout (``nbox`` boxes per level, ``p`` points per box, ``T`` band slots)::

    U, V : (nbox, p, r)
    M    : (nbox, T, r, r)    M[b, t] couples box b with box shift(b, offset_t)
    A_ad : (nbox_L, T_ad, p_L, p_L)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalError
from .hierarchy import DyadicPartition, band_offsets, default_bands


def _grid(N: int, dim: int) -> np.ndarray:
    x = np.arange(N) / N
    if dim == 1:
        return x[:, None]
    k1, k2 = np.meshgrid(x, x, indexing="ij")
    # column-major point order p = k1 + N*k2
    return np.stack([k1.ravel(order="F"), k2.ravel(order="F")], axis=-1)


def dense_from_kernel(g: Callable, N: int, dim: int = 1) -> np.ndarray:
    """Discretize ``u(x) = int g(x, y) v(y) dy`` on the periodic unit grid.

    ``g`` is called once with broadcastable point arrays of shape
    ``(n, 1, dim)`` and ``(1, n, dim)``; in 1D the trailing axis is dropped.
    The quadrature weight ``h**dim`` is folded into the matrix.
    """
    pts = _grid(N, dim)
    if dim == 1:
        x, y = pts[:, None, 0], pts[None, :, 0]
    else:
        x, y = pts[:, None, :], pts[None, :, :]
    A = np.broadcast_to(np.asarray(g(x, y), dtype=np.float64), (N**dim, N**dim))
    bad = ~np.isfinite(A)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NumericalError(f"kernel is not finite at entry ({i}, {j})")
    return np.array(A) * (1.0 / N) ** dim


def _periodic_dist(x, y):
    d = np.abs(x - y) % 1.0
    return np.minimum(d, 1.0 - d)


KERNELS_1D: dict[str, Callable] = {
    "ones": lambda x, y: np.ones(np.broadcast(x, y).shape),
    "expcos": lambda x, y: np.exp(np.cos(2 * np.pi * (x - y))),
    "gaussian": lambda x, y: np.exp(-_periodic_dist(x, y) ** 2 / (2 * 0.1**2)),
}

KERNELS_2D: dict[str, Callable] = {
    "ones": lambda x, y: np.ones(np.broadcast(x[..., 0], y[..., 0]).shape),
    "expcos": lambda x, y: np.exp(
        np.cos(2 * np.pi * (x[..., 0] - y[..., 0])) + np.cos(2 * np.pi * (x[..., 1] - y[..., 1]))
    ),
    "gaussian": lambda x, y: np.exp(
        -(_periodic_dist(x[..., 0], y[..., 0]) ** 2 + _periodic_dist(x[..., 1], y[..., 1]) ** 2)
        / (2 * 0.1**2)
    ),
}


def kernel_matrix(name: str, N: int, dim: int = 1) -> np.ndarray:
    table = KERNELS_1D if dim == 1 else KERNELS_2D
    if name not in table:
        raise ConfigError(f"unknown kernel {name!r}; choose from {sorted(table)}")
    return dense_from_kernel(table[name], N, dim)


@dataclass
class LevelDecomposition:
    levels: dict[int, np.ndarray]
    adjacent: np.ndarray

    def total(self) -> np.ndarray:
        out = self.adjacent.copy()
        for lev in sorted(self.levels):
            out += self.levels[lev]
        return out


def _block_mask(p: DyadicPartition, level: int, lists) -> np.ndarray:
    nbox = p.n_boxes(level)
    pts = p.box_points(level)
    owner = np.empty(p.size, dtype=np.intp)
    for b in range(nbox):
        owner[pts[b]] = b
    pair = np.zeros((nbox, nbox), dtype=bool)
    for b in range(nbox):
        pair[b, list(lists(level, b))] = True
    return pair[owner[:, None], owner[None, :]]


def decompose_levels(A: np.ndarray, p: DyadicPartition) -> LevelDecomposition:
    """Split ``A`` into interaction-list parts per level and the adjacent part."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (p.size, p.size):
        raise ConfigError(f"matrix shape {A.shape} does not match partition size {p.size}")
    levels = {
        lev: np.where(_block_mask(p, lev, p.interaction_list), A, 0.0) for lev in range(2, p.L + 1)
    }
    adjacent = np.where(_block_mask(p, p.L, p.neighbor_list), A, 0.0)
    return LevelDecomposition(levels, adjacent)


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column made non-negative; near-ties
    # (common for symmetric kernels) go to the first such entry so that
    # shifted copies of a block get the same signs
    mag = np.abs(Q)
    idx = np.argmax(mag >= (1 - 1e-8) * mag.max(axis=0), axis=0)
    s = np.sign(Q[idx, np.arange(Q.shape[1])])
    s[s == 0] = 1.0
    return Q * s


@dataclass
class LevelFactors:
    level: int
    nb: int
    U: np.ndarray
    M: np.ndarray
    V: np.ndarray
    row_tail: np.ndarray  # discarded squared singular values per box row
    col_tail: np.ndarray  # same for box columns

    @property
    def error_bound(self) -> float:
        """Upper bound on the Frobenius error of ``U M V^T`` against the level matrix."""
        return float(np.sqrt(self.row_tail.sum()) + np.sqrt(self.col_tail.sum()))


def compress_level(A_level: np.ndarray, p: DyadicPartition, level: int, r: int, nb: int | None = None):
    """Uniform rank-``r`` factors of one level matrix via block-row/column SVDs.

    Boxes with fewer than ``r`` points keep all their singular vectors and pad
    the bases with zero columns, so every level carries ``r`` channels.
    """
    if nb is None:
        nb = default_bands(p.L)[level]
    if r < 1:
        raise ConfigError(f"rank must be positive, got {r}")
    w = p.box_width(level) ** p.dim
    k = min(r, w)
    nbox = p.n_boxes(level)
    pts = p.box_points(level)
    offs = band_offsets(nb, p.dim)
    slot = {o: t for t, o in enumerate(offs)}

    def block(i, j):
        return A_level[np.ix_(pts[i], pts[j])]

    U = np.zeros((nbox, w, r))
    V = np.zeros((nbox, w, r))
    row_tail = np.empty(nbox)
    col_tail = np.empty(nbox)
    ils = [sorted(p.interaction_list(level, b)) for b in range(nbox)]
    for b in range(nbox):
        row = np.hstack([block(b, j) for j in ils[b]])
        q, s, _ = np.linalg.svd(row, full_matrices=False)
        U[b, :, :k] = _fix_signs(q[:, :k])
        row_tail[b] = np.sum(s[r:] ** 2)
        col = np.vstack([block(i, b) for i in ils[b]])  # IL is symmetric
        _, s, vt = np.linalg.svd(col, full_matrices=False)
        V[b, :, :k] = _fix_signs(vt[:k].T)
        col_tail[b] = np.sum(s[r:] ** 2)

    M = np.zeros((nbox, len(offs), r, r))
    for b in range(nbox):
        for j in ils[b]:
            t = slot[p.band_offset(level, b, j, nb)]
            M[b, t] = U[b].T @ block(b, j) @ V[j]
    return LevelFactors(level, nb, U, M, V, row_tail, col_tail)


@dataclass
class HMatrixFactors:
    partition: DyadicPartition
    r: int
    levels: dict[int, LevelFactors]
    adjacent: np.ndarray
    nb_ad: int = 1
    _shifts: dict = field(default_factory=dict, repr=False)

    @property
    def error_bound(self) -> float:
        """Bound on ``||H - A||_F`` and so on ``||(H - A) v|| / ||v||``."""
        return float(sum(f.error_bound for f in self.levels.values()))

    def shifts(self, level: int, nb: int) -> np.ndarray:
        key = (level, nb)
        if key not in self._shifts:
            self._shifts[key] = self.partition.band_shifts(level, nb)
        return self._shifts[key]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return hmatrix_apply(self, v)

    def to_dense(self) -> np.ndarray:
        """Reassemble ``sum_l U M V^T + A_ad`` (for tests and diagnostics)."""
        p = self.partition
        out = np.zeros((p.size, p.size))
        for lev in sorted(self.levels):
            f = self.levels[lev]
            pts = p.box_points(lev)
            sh = self.shifts(lev, f.nb)
            for b in range(p.n_boxes(lev)):
                for t, j in enumerate(sh[b]):
                    out[np.ix_(pts[b], pts[j])] += f.U[b] @ f.M[b, t] @ f.V[j].T
        pts = p.box_points(p.L)
        sh = self.shifts(p.L, self.nb_ad)
        for b in range(p.n_boxes(p.L)):
            for t, j in enumerate(sh[b]):
                out[np.ix_(pts[b], pts[j])] += self.adjacent[b, t]
        return out

    def weight_arrays(self) -> list[np.ndarray]:
        """Stored weight arrays in the band layout a linear network uses."""
        arrs = []
        for lev in sorted(self.levels):
            f = self.levels[lev]
            arrs += [f.V, f.M, f.U]
        return arrs + [self.adjacent]


def adjacent_blocks(A: np.ndarray, p: DyadicPartition, nb_ad: int = 1) -> np.ndarray:
    pts = p.box_points(p.L)
    sh = p.band_shifts(p.L, nb_ad)
    nbox, T = sh.shape
    out = np.empty((nbox, T, pts.shape[1], pts.shape[1]))
    for b in range(nbox):
        for t, j in enumerate(sh[b]):
            out[b, t] = A[np.ix_(pts[b], pts[j])]
    return out


def compress(A: np.ndarray, p: DyadicPartition, r: int, nb: dict[int, int] | None = None) -> HMatrixFactors:
    """Decompose and compress ``A`` into rank-``r`` uniform H-matrix factors."""
    nb = nb or default_bands(p.L)
    dec = decompose_levels(A, p)
    levels = {lev: compress_level(dec.levels[lev], p, lev, r, nb[lev]) for lev in range(2, p.L + 1)}
    return HMatrixFactors(p, r, levels, adjacent_blocks(dec.adjacent, p))


def hmatrix_apply(f: HMatrixFactors, v: np.ndarray) -> np.ndarray:
    """Apply the factored operator to ``v`` of shape ``(..., N**dim)``."""
    p = f.partition
    v = np.asarray(v)
    if v.shape[-1] != p.size:
        raise ConfigError(f"vector length {v.shape[-1]} does not match operator size {p.size}")
    u = np.zeros(v.shape, dtype=np.result_type(v, np.float64))
    for lev in sorted(f.levels):
        lf = f.levels[lev]
        pts = p.box_points(lev)
        sh = f.shifts(lev, lf.nb)
        xi = np.einsum("bpr,...bp->...br", lf.V, v[..., pts])
        zeta = np.einsum("btrs,...bts->...br", lf.M, xi[..., sh, :])
        u[..., pts] += np.einsum("bpr,...br->...bp", lf.U, zeta)
    pts = p.box_points(p.L)
    sh = f.shifts(p.L, f.nb_ad)
    vb = v[..., pts]
    u[..., pts] += np.einsum("btpq,...btq->...bp", f.adjacent, vb[..., sh, :])
    return u


def hmatrix_apply_2d(f: HMatrixFactors, v: np.ndarray) -> np.ndarray:
    if f.partition.dim != 2:
        raise ConfigError("hmatrix_apply_2d needs factors built on a 2D partition")
    return hmatrix_apply(f, v)


def param_count_h(p: DyadicPartition, r: int, nb: dict[int, int] | None = None, nb_ad: int = 1) -> int:
    """Weight count of the linear network form (biases excluded)."""
    nb = nb or default_bands(p.L)
    d = p.dim
    total = 0
    for lev in range(2, p.L + 1):
        total += 2 * p.size * r + 2 ** (lev * d) * r * r * (2 * nb[lev] + 1) ** d
    return total + 2 ** (p.L * d) * p.m ** (2 * d) * (2 * nb_ad + 1) ** d
