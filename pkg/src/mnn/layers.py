"""Locally connected and convolutional layers with hand-written backward passes.

Activations are channel-major arrays ``(batch, channels, *spatial)`` with one
or two spatial axes.  A layer gathers, for every output position ``i``, the
input window starting at ``i * stride - pad`` (periodic wrap) and contracts it
with weights that either depend on ``i`` (locally connected) or not
(convolutional).

Weight shapes, with ``P`` output positions and ``T`` window entries::

    LC  : W (P, out, in, T),  b (out, P)
    CNN : W (out, in, T),     b (out,)

Window entries and positions are flattened in C order over the spatial axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .errors import ConfigError

RESTRICT, KERNEL, INTERP = "restrict", "kernel", "interp"


def _tuple(x, dim=None) -> tuple[int, ...]:
    t = (int(x),) if np.isscalar(x) else tuple(int(v) for v in x)
    if dim is not None and len(t) != dim:
        raise ConfigError(f"expected {dim} spatial sizes, got {t}")
    return t


def _gather_index(in_shape, out_shape, window, stride, pad) -> np.ndarray:
    """Flat input index for every (output position, window entry), periodic."""
    per_dim = []
    for n_in, n_out, w, s, p in zip(in_shape, out_shape, window, stride, pad):
        per_dim.append((np.arange(n_out)[:, None] * s + np.arange(w)[None, :] - p) % n_in)
    if len(per_dim) == 1:
        return per_dim[0]
    (a, b), (n1, n2) = per_dim, in_shape
    # (i1, i2, t1, t2) -> flat (i1*n2' + i2, t1*w2 + t2)
    idx = a[:, None, :, None] * n2 + b[None, :, None, :]
    P = a.shape[0] * b.shape[0]
    return idx.reshape(P, a.shape[1] * b.shape[1])


@dataclass(eq=False)
class LocalLayer:
    kind: str
    in_channels: int
    out_channels: int
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    window: tuple[int, ...]
    stride: tuple[int, ...]
    pad: tuple[int, ...]
    shared: bool = False
    activation: str = "linear"
    weight: np.ndarray = field(default=None, repr=False)
    bias: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.activation not in ("linear", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.idx = _gather_index(self.in_shape, self.out_shape, self.window, self.stride, self.pad)
        # a single scatter suffices when no input entry is read twice
        flat = self.idx.ravel()
        self._disjoint = np.unique(flat).size == flat.size
        if self.weight is None:
            self.weight = np.zeros(self.weight_shape)
        if self.bias is None:
            self.bias = np.zeros(self.bias_shape)
        if self.weight.shape != self.weight_shape or self.bias.shape != self.bias_shape:
            raise ConfigError(
                f"{self.kind} layer expects weight {self.weight_shape} and bias {self.bias_shape}, "
                f"got {self.weight.shape} and {self.bias.shape}"
            )

    @property
    def dim(self) -> int:
        return len(self.in_shape)

    @property
    def n_pos(self) -> int:
        return prod(self.out_shape)

    @property
    def n_win(self) -> int:
        return prod(self.window)

    @property
    def weight_shape(self):
        core = (self.out_channels, self.in_channels, self.n_win)
        return core if self.shared else (self.n_pos, *core)

    @property
    def bias_shape(self):
        return (self.out_channels,) if self.shared else (self.out_channels, self.n_pos)

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.n_win

    def init_normal(self, rng: np.random.Generator, dtype=np.float64):
        """He-normal weights, zero biases."""
        std = np.sqrt(2.0 / self.fan_in)
        self.weight = (rng.standard_normal(self.weight_shape) * std).astype(dtype)
        self.bias = np.zeros(self.bias_shape, dtype=dtype)
        return self

    def param_count(self) -> tuple[int, int]:
        return prod(self.weight_shape), prod(self.bias_shape)

    def _check_input(self, x):
        want = (self.in_channels, *self.in_shape)
        if x.shape[1:] != want:
            raise ConfigError(f"{self.kind} layer expects input (batch, {want}), got {x.shape}")

    def forward(self, x: np.ndarray):
        """Return ``(y, cache)``; ``cache`` feeds :meth:`backward`."""
        self._check_input(x)
        B = x.shape[0]
        a, o, P, T = self.in_channels, self.out_channels, self.n_pos, self.n_win
        patches = x.reshape(B, a, -1)[:, :, self.idx]  # (B, a, P, T)
        if self.shared:
            cols = patches.transpose(0, 2, 1, 3).reshape(B * P, a * T)
            z = (cols @ self.weight.reshape(o, a * T).T).reshape(B, P, o).transpose(0, 2, 1)
            z = z + self.bias[:, None]
        else:
            cols = patches.transpose(2, 0, 1, 3).reshape(P, B, a * T)
            w = self.weight.reshape(P, o, a * T)
            z = (cols @ w.transpose(0, 2, 1)).transpose(1, 2, 0) + self.bias
        y = np.maximum(z, 0) if self.activation == "relu" else z
        cache = (B, cols, z > 0 if self.activation == "relu" else None)
        return y.reshape(B, o, *self.out_shape), cache

    def backward(self, cache, gy: np.ndarray, input_grad: bool = True):
        """Gradients ``(dW, db, dx)`` for upstream gradient ``gy``; ``dx`` is None if not requested."""
        B, cols, mask = cache
        a, o, P, T = self.in_channels, self.out_channels, self.n_pos, self.n_win
        gz = gy.reshape(B, o, P)
        if mask is not None:
            gz = gz * mask
        if self.shared:
            g2 = gz.transpose(0, 2, 1).reshape(B * P, o)
            dW = (g2.T @ cols).reshape(self.weight_shape)
            db = gz.sum(axis=(0, 2))
            dcols = None if not input_grad else (g2 @ self.weight.reshape(o, a * T)).reshape(B, P, a, T).transpose(0, 2, 1, 3)
        else:
            g3 = gz.transpose(2, 1, 0)  # (P, o, B)
            dW = (g3 @ cols).reshape(self.weight_shape)
            db = gz.sum(axis=0)
            dcols = None
            if input_grad:
                w = self.weight.reshape(P, o, a * T)
                dcols = (g3.transpose(0, 2, 1) @ w).reshape(P, B, a, T).transpose(1, 2, 0, 3)
        if not input_grad:
            return dW, db, None
        dx = np.zeros((B, a, prod(self.in_shape)), dtype=dcols.dtype)
        if self._disjoint:
            dx[:, :, self.idx.ravel()] = dcols.reshape(B, a, P * T)
        else:
            for t in range(T):
                dx[:, :, self.idx[:, t]] += dcols[:, :, :, t]
        return dW, db, dx.reshape(B, a, *self.in_shape)

    def __call__(self, x):
        return self.forward(x)[0]


def restriction(n_in, n_out, channels: int, *, shared=False, activation="linear") -> LocalLayer:
    """LCR / CNNR: non-overlapping windows of width ``n_in / n_out`` from one channel."""
    n_in, n_out = _tuple(n_in), _tuple(n_out, len(_tuple(n_in)))
    if any(a % b for a, b in zip(n_in, n_out)):
        raise ConfigError(f"input size {n_in} is not a multiple of output size {n_out}")
    s = tuple(a // b for a, b in zip(n_in, n_out))
    return LocalLayer(RESTRICT, 1, channels, n_in, n_out, s, s, (0,) * len(s), shared, activation)


def kernel(n, in_channels: int, out_channels: int, window, *, shared=False, activation="linear") -> LocalLayer:
    """LCK / CNNK: stride 1, odd window, periodic padding of ``(w - 1) / 2`` per side."""
    n = _tuple(n)
    w = _tuple(window, len(n)) if not np.isscalar(window) else (int(window),) * len(n)
    if any(x % 2 == 0 for x in w):
        raise ConfigError(f"kernel window must be odd, got {w}")
    pad = tuple((x - 1) // 2 for x in w)
    return LocalLayer(KERNEL, in_channels, out_channels, n, n, w, (1,) * len(n), pad, shared, activation)


def interpolation(n, in_channels: int, out_channels: int, *, shared=False, activation="linear") -> LocalLayer:
    """LCI / CNNI: pointwise channel mixing (window and stride 1)."""
    n = _tuple(n)
    one = (1,) * len(n)
    return LocalLayer(INTERP, in_channels, out_channels, n, n, one, one, (0,) * len(n), shared, activation)


def lc_forward(layer: LocalLayer, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)[0]


def lc_backward(layer: LocalLayer, x: np.ndarray, gy: np.ndarray):
    _, cache = layer.forward(x)
    return layer.backward(cache, gy)


cnn_forward = lc_forward
cnn_backward = lc_backward


def param_count_layer(layer: LocalLayer) -> tuple[int, int]:
    return layer.param_count()


# Reshape conventions ------------------------------------------------------

def reshape_vec(v: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Column-major reshape of ``(..., n1*n2)`` into ``(..., n1, n2)``: ``out[i, j] = v[j*n1 + i]``."""
    v = np.asarray(v)
    if v.shape[-1] != n1 * n2:
        raise ConfigError(f"cannot reshape length {v.shape[-1]} into {n1}x{n2}")
    return np.swapaxes(v.reshape(*v.shape[:-1], n2, n1), -1, -2)


def flatten(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`reshape_vec`."""
    t = np.asarray(t)
    return np.swapaxes(t, -1, -2).reshape(*t.shape[:-2], -1)


def block_reshape_2d(T: np.ndarray, r: int, n1: int, n2: int) -> np.ndarray:
    """Split an ``(r*n1, r*n2)`` grid into ``r x r`` blocks, one channel per block entry.

    ``S[k1*r + k2, i, j] = T[i*r + k1, j*r + k2]`` (zero-based), batched over
    leading axes.
    """
    T = np.asarray(T)
    if T.shape[-2:] != (r * n1, r * n2):
        raise ConfigError(f"grid {T.shape[-2:]} is not ({r}*{n1}, {r}*{n2})")
    lead = T.shape[:-2]
    S = T.reshape(*lead, n1, r, n2, r)
    nd = len(lead)
    S = S.transpose(*range(nd), nd + 1, nd + 3, nd, nd + 2)
    return S.reshape(*lead, r * r, n1, n2)


def block_flatten_2d(S: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`block_reshape_2d`."""
    S = np.asarray(S)
    lead, (c, n1, n2) = S.shape[:-3], S.shape[-3:]
    if c != r * r:
        raise ConfigError(f"{c} channels is not {r}**2")
    nd = len(lead)
    T = S.reshape(*lead, r, r, n1, n2).transpose(*range(nd), nd + 2, nd, nd + 3, nd + 1)
    return T.reshape(*lead, n1 * r, n2 * r)
