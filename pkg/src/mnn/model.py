"""Multiscale neural networks built from restriction, kernel and interpolation layers.

For every level ``l = 2..L`` a branch restricts the input to ``r`` channels on
``2**l`` coarse cells, runs ``K`` kernel layers and interpolates back to the
fine grid; an adjacent branch runs ``K`` kernel layers on the input reshaped to
``m`` channels (``m**2`` in 2D) on ``2**L`` cells.  Branch outputs are summed
in increasing level order, adjacent branch last.  With ``K = 1`` and linear
activations this is exactly the H-matrix matvec.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import layers as ly
from .errors import ConfigError, NumericalError
from .hierarchy import default_bands
from .hmatrix import HMatrixFactors


@dataclass
class MnnConfig:
    N: int
    L: int
    m: int
    r: int
    K: int = 1
    dim: int = 1
    flavor: str = "lc"
    activation: str = "relu"
    nb: dict[int, int] | None = None
    nb_ad: int = 1
    post_correction: str = "none"
    n_e: float | None = None
    domain_length: float | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.L < 2 or self.N != 2**self.L * self.m:
            raise ConfigError(f"need N = 2**L * m with L >= 2 (N={self.N}, L={self.L}, m={self.m})")
        if self.K < 1 or self.r < 1:
            raise ConfigError("K and r must be positive")
        if self.flavor not in ("lc", "cnn"):
            raise ConfigError(f"flavor must be 'lc' or 'cnn', got {self.flavor!r}")
        if self.activation not in ("relu", "linear"):
            raise ConfigError(f"activation must be 'relu' or 'linear', got {self.activation!r}")
        if self.post_correction not in ("none", "nlse", "ks"):
            raise ConfigError(f"unknown post_correction {self.post_correction!r}")
        if self.post_correction == "ks" and not self.n_e:
            raise ConfigError("post_correction 'ks' needs n_e")
        if self.domain_length is None:
            # the Kohn-Sham problems live on [-1, 1), everything else on [0, 1)
            self.domain_length = 2.0 if self.post_correction == "ks" else 1.0
        if self.nb is None:
            self.nb = default_bands(self.L)
        else:
            self.nb = {int(k): int(v) for k, v in self.nb.items()}
            if sorted(self.nb) != list(range(2, self.L + 1)):
                raise ConfigError(f"nb must give a band for every level 2..{self.L}")

    @property
    def size(self) -> int:
        return self.N**self.dim

    @property
    def h(self) -> float:
        """Quadrature weight of one grid point."""
        return (self.domain_length / self.N) ** self.dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nb"] = {str(k): v for k, v in self.nb.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MnnConfig":
        return cls(**d)


def layer_specs(cfg: MnnConfig) -> list[tuple[str, ly.LocalLayer]]:
    """Named, uninitialized layers of the network in parameter order."""
    shared = cfg.flavor == "cnn"
    d = cfg.dim
    out = []
    for lev in range(2, cfg.L + 1):
        n = (2**lev,) * d
        w = cfg.N // 2**lev
        win = 2 * cfg.nb[lev] + 1
        out.append((f"l{lev}.restrict", ly.restriction((cfg.N,) * d, n, cfg.r, shared=shared)))
        for k in range(cfg.K):
            out.append((f"l{lev}.kernel{k}", ly.kernel(n, cfg.r, cfg.r, win, shared=shared, activation=cfg.activation)))
        out.append((f"l{lev}.interp", ly.interpolation(n, cfg.r, w**d, shared=shared)))
    n = (2**cfg.L,) * d
    c = cfg.m**d
    win = 2 * cfg.nb_ad + 1
    for k in range(cfg.K):
        act = cfg.activation if k < cfg.K - 1 else "linear"
        out.append((f"ad.kernel{k}", ly.kernel(n, c, c, win, shared=shared, activation=act)))
    return out


def post_correct_nlse(u_hat: np.ndarray, h: float) -> np.ndarray:
    """Scale to ``h * sum(u**2) = 1`` and flip sign so that ``sum(u) > 0``."""
    return _nlse_forward(np.asarray(u_hat, dtype=float), h)[0]


def _nlse_forward(u_hat, h):
    norm = np.linalg.norm(u_hat, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise NumericalError("cannot normalize a zero prediction")
    sign = np.where(u_hat.sum(axis=-1, keepdims=True) < 0, -1.0, 1.0)
    scale = sign / (norm * math.sqrt(h))
    return u_hat * scale, (u_hat, norm, scale)


def _nlse_backward(cache, g):
    u_hat, norm, scale = cache
    proj = (u_hat * g).sum(axis=-1, keepdims=True) / norm**2
    return scale * (g - u_hat * proj)


def post_correct_ks(rho_hat: np.ndarray, n_e: float, h: float) -> np.ndarray:
    """Clip negative densities to zero and rescale so that ``h * sum(rho) = n_e``."""
    return _ks_forward(np.asarray(rho_hat, dtype=float), n_e, h)[0]


def _ks_forward(rho_hat, n_e, h):
    pos = np.maximum(rho_hat, 0)
    total = h * pos.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise NumericalError("density prediction has no positive entries")
    return n_e * pos / total, (rho_hat > 0, pos, total, n_e, h)


def _ks_backward(cache, g):
    mask, pos, total, n_e, h = cache
    dpos = n_e / total * (g - h * (g * pos).sum(axis=-1, keepdims=True) / total)
    return dpos * mask


class MultiscaleNet:
    """Multiscale network; also the linear H-matrix network when ``K = 1`` and linear."""

    def __init__(self, cfg: MnnConfig, named_layers=None):
        self.cfg = cfg
        self.named_layers = named_layers if named_layers is not None else layer_specs(cfg)
        self.layers = dict(self.named_layers)

    # parameters --------------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for _, layer in self.named_layers:
            out += [layer.weight, layer.bias]
        return out

    def set_parameters(self, arrays):
        arrays = list(arrays)
        if len(arrays) != 2 * len(self.named_layers):
            raise ConfigError("parameter list does not match the network layout")
        for i, (_, layer) in enumerate(self.named_layers):
            w, b = arrays[2 * i], arrays[2 * i + 1]
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ConfigError(f"parameter shape mismatch in layer {self.named_layers[i][0]}")
            layer.weight, layer.bias = w, b

    def astype(self, dtype):
        for _, layer in self.named_layers:
            layer.weight = layer.weight.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
        return self

    @property
    def dtype(self):
        return self.named_layers[0][1].weight.dtype

    def param_count(self) -> int:
        return sum(a.size for a in self.parameters())

    # forward / backward ----------------------------------------------------

    def _to_grid(self, v):
        N = self.cfg.N
        return v[:, None, :] if self.cfg.dim == 1 else ly.reshape_vec(v, N, N)[:, None]

    def _from_interp(self, y, lev):
        # y: (B, w**d, 2**l[, 2**l]) -> (B, N**d)
        if self.cfg.dim == 1:
            return ly.flatten(y)
        return ly.flatten(ly.block_flatten_2d(y, self.cfg.N // 2**lev))

    def _to_interp(self, g, lev):
        N = self.cfg.N
        if self.cfg.dim == 1:
            return ly.reshape_vec(g, N // 2**lev, 2**lev)
        n = 2**lev
        return ly.block_reshape_2d(ly.reshape_vec(g, N, N), N // n, n, n)

    def _adjacent_in(self, v):
        c, n = self.cfg, 2**self.cfg.L
        if c.dim == 1:
            return ly.reshape_vec(v, c.m, n)
        return ly.block_reshape_2d(ly.reshape_vec(v, c.N, c.N), c.m, n, n)

    def _adjacent_out(self, y):
        c = self.cfg
        if c.dim == 1:
            return ly.flatten(y)
        return ly.flatten(ly.block_flatten_2d(y, c.m))

    def _run(self, v, keep):
        cfg = self.cfg
        v = np.asarray(v)
        single = v.ndim == 1
        if single:
            v = v[None]
        if v.ndim != 2 or v.shape[1] != cfg.size:
            raise ConfigError(f"input must have length {cfg.size}, got shape {v.shape}")
        caches = {}
        u = np.zeros_like(v, dtype=np.result_type(v, self.dtype))
        x_grid = self._to_grid(v)
        for lev in range(2, cfg.L + 1):
            names = [f"l{lev}.restrict"] + [f"l{lev}.kernel{k}" for k in range(cfg.K)] + [f"l{lev}.interp"]
            x = x_grid
            for name in names:
                x, caches[name] = self.layers[name].forward(x)
                _check_finite(x, name)
            u += self._from_interp(x, lev)
        x = self._adjacent_in(v)
        for k in range(cfg.K):
            name = f"ad.kernel{k}"
            x, caches[name] = self.layers[name].forward(x)
            _check_finite(x, name)
        u += self._adjacent_out(x)
        post = None
        if cfg.post_correction == "nlse":
            u, post = _nlse_forward(u, cfg.h)
        elif cfg.post_correction == "ks":
            u, post = _ks_forward(u, cfg.n_e, cfg.h)
        if single:
            u = u[0]
        return (u, (caches, post)) if keep else u

    def forward(self, v: np.ndarray) -> np.ndarray:
        """Evaluate on ``v`` of shape ``(N**dim,)`` or ``(batch, N**dim)``."""
        return self._run(v, keep=False)

    __call__ = forward

    def forward_train(self, v: np.ndarray):
        return self._run(v, keep=True)

    def backward(self, cache, gu: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients, in :meth:`parameters` order, for output gradient ``gu``."""
        cfg = self.cfg
        caches, post = cache
        if cfg.post_correction == "nlse":
            gu = _nlse_backward(post, gu)
        elif cfg.post_correction == "ks":
            gu = _ks_backward(post, gu)
        grads = {}
        for lev in range(2, cfg.L + 1):
            names = [f"l{lev}.restrict"] + [f"l{lev}.kernel{k}" for k in range(cfg.K)] + [f"l{lev}.interp"]
            g = self._to_interp(gu, lev)
            for i, name in enumerate(reversed(names)):
                first = i == len(names) - 1
                dW, db, g = self.layers[name].backward(caches[name], g, input_grad=not first)
                grads[name] = (dW, db)
        # the reshapes are permutations, so their adjoints are their inverses
        g = self._adjacent_in(gu)
        for k in reversed(range(cfg.K)):
            name = f"ad.kernel{k}"
            dW, db, g = self.layers[name].backward(caches[name], g, input_grad=k > 0)
            grads[name] = (dW, db)
        out = []
        for name, _ in self.named_layers:
            out += list(grads[name])
        return out


def _check_finite(x, name):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite activations after layer {name}")


def build_mnn(cfg: MnnConfig, seed: int = 0, dtype=np.float64) -> MultiscaleNet:
    """Network with He-normal weights (std ``sqrt(2 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(seed)
    net = MultiscaleNet(cfg)
    for _, layer in net.named_layers:
        layer.init_normal(rng, dtype)
    return net


def load_from_hmatrix(f: HMatrixFactors, flavor: str = "lc") -> MultiscaleNet:
    """Linear ``K = 1`` network whose weights are the H-matrix factors.

    In the CNN flavor every layer takes the weights of box 0, which is exact
    only when the factors do not depend on the box.
    """
    p = f.partition
    nb = {lev: lf.nb for lev, lf in f.levels.items()}
    cfg = MnnConfig(p.N, p.L, p.m, f.r, K=1, dim=p.dim, flavor=flavor, activation="linear", nb=nb, nb_ad=f.nb_ad)
    net = MultiscaleNet(cfg)
    pick = (lambda W: W[0]) if flavor == "cnn" else (lambda W: W)
    for lev, lf in f.levels.items():
        lay = net.layers
        lay[f"l{lev}.restrict"].weight = pick(lf.V.transpose(0, 2, 1)[:, :, None, :].copy())
        lay[f"l{lev}.kernel0"].weight = pick(lf.M.transpose(0, 2, 3, 1).copy())
        lay[f"l{lev}.interp"].weight = pick(lf.U[:, :, :, None].copy())
    net.layers["ad.kernel0"].weight = pick(f.adjacent.transpose(0, 2, 3, 1).copy())
    for name, layer in net.named_layers:
        if layer.weight.shape != layer.weight_shape:
            raise ConfigError(f"factor shapes do not fit layer {name}")
        layer.bias = np.zeros(layer.bias_shape)
    return net


# parameter accounting --------------------------------------------------------

def param_breakdown(cfg: MnnConfig) -> dict:
    """Exact stored counts plus the closed-form weight count and its upper bound."""
    weights = biases = 0
    for _, layer in layer_specs(cfg):
        w, b = layer.param_count()
        weights += w
        biases += b
    N, r, K, m, d = cfg.N, cfg.r, cfg.K, cfg.m, cfg.dim
    nbmax = max(max(cfg.nb.values()), cfg.nb_ad)
    if cfg.flavor == "lc":
        formula = sum(
            2 * N**d * r + K * 2 ** (lev * d) * r * r * (2 * cfg.nb[lev] + 1) ** d for lev in range(2, cfg.L + 1)
        ) + K * 2 ** (cfg.L * d) * m ** (2 * d) * (2 * cfg.nb_ad + 1) ** d
        bound = 2 * N**d * math.log2(N**d) * r + 3 * N**d * K * m**d * (2 * nbmax + 1) ** d
    else:
        formula = sum(
            2 * r * (N // 2**lev) ** d + K * r * r * (2 * cfg.nb[lev] + 1) ** d for lev in range(2, cfg.L + 1)
        ) + K * m ** (2 * d) * (2 * cfg.nb_ad + 1) ** d
        bound = r * N**d + (r * r * math.log2(N**d) + m ** (2 * d)) * (2 * nbmax + 1) ** d * K
    return {"total": weights + biases, "weights": weights, "biases": biases, "formula": formula, "bound": bound}


def param_count_mnn(cfg: MnnConfig) -> int:
    return param_breakdown(cfg)["total"]


# plain CNN baseline ------------------------------------------------------------

class PlainCNN:
    """Stack of periodic convolutions ``1 -> a -> ... -> a -> 1``, ReLU except the last."""

    def __init__(self, layers: list[ly.LocalLayer], N: int, spec: dict | None = None):
        self.layer_list = layers
        self.named_layers = [(f"conv{i}", l) for i, l in enumerate(layers)]
        self.N = N
        self.spec = spec or {}

    @property
    def dtype(self):
        return self.layer_list[0].weight.dtype

    def parameters(self):
        out = []
        for layer in self.layer_list:
            out += [layer.weight, layer.bias]
        return out

    def set_parameters(self, arrays):
        arrays = list(arrays)
        for i, layer in enumerate(self.layer_list):
            layer.weight, layer.bias = arrays[2 * i], arrays[2 * i + 1]

    def astype(self, dtype):
        for layer in self.layer_list:
            layer.weight = layer.weight.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
        return self

    def param_count(self) -> int:
        return sum(a.size for a in self.parameters())

    def forward_train(self, v):
        v = np.asarray(v)
        single = v.ndim == 1
        x = (v[None] if single else v)[:, None, :]
        caches = []
        for layer in self.layer_list:
            x, c = layer.forward(x)
            caches.append(c)
        u = x[:, 0]
        return (u[0] if single else u), caches

    def forward(self, v):
        return self.forward_train(v)[0]

    __call__ = forward

    def backward(self, caches, gu):
        g = gu[:, None, :]
        grads = []
        for i in reversed(range(len(self.layer_list))):
            dW, db, g = self.layer_list[i].backward(caches[i], g, input_grad=i > 0)
            grads = [dW, db] + grads
        return grads


def build_plain_cnn(layers: int, channels: int, window: int, N: int, *, seed: int = 0,
                    layer_count: str = "total", dtype=np.float64) -> PlainCNN:
    """Periodic CNN baseline.

    ``layer_count="total"`` counts every convolution; ``"hidden"`` counts only
    the ``channels -> channels`` convolutions between the lifting and the
    projection layers.
    """
    if layer_count not in ("total", "hidden"):
        raise ConfigError(f"layer_count must be 'total' or 'hidden', got {layer_count!r}")
    n = layers + 2 if layer_count == "hidden" else layers
    if n < 1 or channels < 1:
        raise ConfigError("need at least one layer and one channel")
    if window % 2 == 0:
        raise ConfigError(f"window must be odd, got {window}")
    if n == 1:
        chans = [1, 1]
    else:
        chans = [1] + [channels] * (n - 1) + [1]
    rng = np.random.default_rng(seed)
    stack = []
    for i in range(n):
        act = "relu" if i < n - 1 else "linear"
        stack.append(ly.kernel(N, chans[i], chans[i + 1], window, shared=True, activation=act).init_normal(rng, dtype))
    spec = {"layers": layers, "channels": channels, "window": window, "N": N, "layer_count": layer_count}
    return PlainCNN(stack, N, spec)


def plain_cnn_param_count(layers: int, channels: int, window: int, *, layer_count: str = "total") -> int:
    n = layers + 2 if layer_count == "hidden" else layers
    if n == 1:
        return window + 1
    first = channels * window + channels
    mid = channels * channels * window + channels
    last = channels * window + 1
    return first + (n - 2) * mid + last
