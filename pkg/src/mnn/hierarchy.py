"""Dyadic partition of a periodic grid with neighbor and interaction lists.

Boxes at level ``l`` are indexed in C order over their per-dimension
segment coordinates, ``b = i1 * 2**l + i2`` in 2D.  Grid points are indexed
column-major, ``p = k1 + N * k2``, which is the convention used to turn a
length ``N**2`` vector into an ``N x N`` grid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class DyadicPartition:
    N: int
    L: int
    m: int
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.L < 2:
            raise ConfigError(f"need L >= 2 for interaction lists, got L={self.L}")
        if self.m < 1 or self.N != 2**self.L * self.m:
            raise ConfigError(f"N={self.N} is not 2**L * m with L={self.L}, m={self.m}")

    @property
    def size(self) -> int:
        """Number of grid points, N**dim."""
        return self.N**self.dim

    def n_side(self, level: int) -> int:
        return 2**level

    def n_boxes(self, level: int) -> int:
        return 2 ** (level * self.dim)

    def box_width(self, level: int) -> int:
        """Points per box side at ``level``."""
        return self.N // 2**level

    def _check_level(self, level: int, lo: int = 0):
        if not lo <= level <= self.L:
            raise ConfigError(f"level {level} outside [{lo}, {self.L}]")

    def segment(self, level: int, i: int) -> tuple[int, int]:
        """1D segment ``i`` of ``level`` as a ``(start, length)`` range."""
        self._check_level(level)
        if not 0 <= i < 2**level:
            raise ConfigError(f"segment {i} outside level {level}")
        w = self.box_width(level)
        return i * w, w

    def segments(self, level: int) -> list[tuple[int, int]]:
        return [self.segment(level, i) for i in range(2**level)]

    def coords(self, level: int, b: int) -> tuple[int, ...]:
        n = 2**level
        if not 0 <= b < self.n_boxes(level):
            raise ConfigError(f"box {b} outside level {level}")
        if self.dim == 1:
            return (b,)
        return divmod(b, n)

    def index(self, level: int, coords) -> int:
        n = 2**level
        c = [int(x) % n for x in coords]
        return c[0] if self.dim == 1 else c[0] * n + c[1]

    def shift(self, level: int, b: int, offset) -> int:
        """Box reached from ``b`` by a periodic per-dimension offset."""
        c = self.coords(level, b)
        return self.index(level, [ci + oi for ci, oi in zip(c, offset)])

    def parent(self, level: int, b: int) -> int:
        return self.index(level - 1, [c // 2 for c in self.coords(level, b)])

    def children(self, level: int, b: int) -> list[int]:
        c = self.coords(level, b)
        kids = product(*[(2 * ci, 2 * ci + 1) for ci in c])
        return [self.index(level + 1, k) for k in kids]

    def neighbor_list(self, level: int, b: int) -> frozenset[int]:
        self._check_level(level, 2)
        return frozenset(
            self.shift(level, b, off) for off in product((-1, 0, 1), repeat=self.dim)
        )

    def interaction_list(self, level: int, b: int) -> frozenset[int]:
        self._check_level(level, 2)
        nl = self.neighbor_list(level, b)
        if level == 2:
            return frozenset(range(self.n_boxes(2))) - nl
        par = self.parent(level, b)
        cand = set()
        for q in self.neighbor_list(level - 1, par):
            cand.update(self.children(level - 1, q))
        return frozenset(cand) - nl

    def band_offset(self, level: int, b: int, j: int, nb: int) -> tuple[int, ...]:
        """Offset of box ``j`` relative to ``b``, folded into ``[-nb, nb]`` per dimension.

        Among periodic representatives the one with smallest magnitude is
        taken, positive on ties.
        """
        n = 2**level
        out = []
        for ci, cj in zip(self.coords(level, b), self.coords(level, j)):
            d = (cj - ci) % n
            reps = sorted({d, d - n}, key=lambda x: (abs(x), -x))
            reps = [x for x in reps if abs(x) <= nb]
            if not reps:
                raise ConfigError(f"box {j} is outside band {nb} of box {b} at level {level}")
            out.append(reps[0])
        return tuple(out)

    def box_points(self, level: int) -> np.ndarray:
        """Global point indices of every box, shape ``(n_boxes, w**dim)``.

        Inside a 2D box the local point ``(a1, a2)`` sits at column
        ``a1 * w + a2``.
        """
        return self._box_points[level]

    @cached_property
    def _box_points(self) -> dict[int, np.ndarray]:
        out = {}
        for level in range(self.L + 1):
            w = self.box_width(level)
            n = 2**level
            if self.dim == 1:
                out[level] = np.arange(self.N).reshape(n, w)
            else:
                i1, i2, a1, a2 = np.meshgrid(
                    np.arange(n), np.arange(n), np.arange(w), np.arange(w), indexing="ij"
                )
                p = (i1 * w + a1) + self.N * (i2 * w + a2)
                out[level] = p.reshape(n * n, w * w)
        return out

    def band_shifts(self, level: int, nb: int) -> np.ndarray:
        """``(n_boxes, (2nb+1)**dim)`` table of boxes reached by each band offset."""
        offs = band_offsets(nb, self.dim)
        return np.array(
            [[self.shift(level, b, o) for o in offs] for b in range(self.n_boxes(level))],
            dtype=np.intp,
        )


def band_offsets(nb: int, dim: int) -> list[tuple[int, ...]]:
    """Band offsets in the C order used by kernel-layer windows."""
    return list(product(range(-nb, nb + 1), repeat=dim))


def build_partition(N: int, L: int, m: int, dim: int = 1) -> DyadicPartition:
    return DyadicPartition(N, L, m, dim)


def neighbor_list(p: DyadicPartition, level: int, i: int) -> frozenset[int]:
    return p.neighbor_list(level, i)


def interaction_list(p: DyadicPartition, level: int, i: int) -> frozenset[int]:
    return p.interaction_list(level, i)


def default_bands(L: int) -> dict[int, int]:
    """Band size per level for strong admissibility: 2 at level 2, 3 below."""
    return {lev: 2 if lev == 2 else 3 for lev in range(2, L + 1)}
