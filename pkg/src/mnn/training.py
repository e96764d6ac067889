"""Loss, relative error, NAdam and a mini-batch training loop.

Models only need ``parameters()``, ``forward(x)``, ``forward_train(x)``
returning ``(y, cache)``, ``backward(cache, gy)`` returning gradients in
parameter order, and ``astype(dtype)``.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

BATCH_FRACTION_MIN = 1 / 100
BATCH_FRACTION_MAX = 1 / 50


def relative_error(u: np.ndarray, u_nn: np.ndarray) -> np.ndarray:
    """``||u - u_nn|| / ||u||`` over the last axis."""
    u, u_nn = np.asarray(u), np.asarray(u_nn)
    ref = np.linalg.norm(u, axis=-1)
    if np.any(ref == 0):
        raise NumericalError("relative error is undefined for a zero reference vector")
    return np.linalg.norm(u - u_nn, axis=-1) / ref


def msre_loss(u: np.ndarray, u_nn: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared relative error over a batch and its gradient with respect to ``u_nn``."""
    u, u_nn = np.atleast_2d(u), np.atleast_2d(u_nn)
    sq = np.sum(u * u, axis=-1, keepdims=True)
    if np.any(sq == 0):
        raise NumericalError("loss is undefined for a zero reference vector")
    diff = u_nn - u
    B = u.shape[0]
    loss = float(np.mean(np.sum(diff * diff, axis=-1) / sq[:, 0]))
    return loss, 2 * diff / (sq * B)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_fraction: float = 1 / 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum_decay: float = 0.0
    seed: int = 0
    precision: int = 32

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if not BATCH_FRACTION_MIN - 1e-12 <= self.batch_fraction <= BATCH_FRACTION_MAX + 1e-12:
            raise ConfigError(
                f"batch_fraction {self.batch_fraction} outside [{BATCH_FRACTION_MIN}, {BATCH_FRACTION_MAX}]"
            )
        if self.lr <= 0 or self.eps <= 0 or self.momentum_decay < 0:
            raise ConfigError("lr and eps must be positive, momentum_decay non-negative")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64

    def batch_size(self, n_train: int) -> int:
        return max(1, round(n_train * self.batch_fraction))


@dataclass
class NadamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    mu_prod: float = 1.0

    @classmethod
    def zeros(cls, params) -> "NadamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def _momentum(cfg: TrainConfig, t: int) -> float:
    """Momentum coefficient at step ``t``; constant ``beta1`` unless a decay is set."""
    if cfg.momentum_decay == 0:
        return cfg.beta1
    return cfg.beta1 * (1 - 0.5 * 0.96 ** (t * cfg.momentum_decay))


def nadam_step(params, grads, state: NadamState, t: int, cfg: TrainConfig) -> NadamState:
    """One in-place NAdam update at step ``t`` (counting from 1).

    With constant momentum ``mu = beta1``::

        m <- mu m + (1 - mu) g,    v <- beta2 v + (1 - beta2) g^2
        m_hat = (mu m + (1 - mu) g) / (1 - mu^(t+1)),   v_hat = v / (1 - beta2^t)
        theta <- theta - lr m_hat / (sqrt(v_hat) + eps)

    A positive ``momentum_decay`` replaces ``mu`` by the warm-up schedule
    ``beta1 (1 - 0.5 * 0.96^(t * decay))`` and the powers by running products.
    """
    if t < 1:
        raise ConfigError("NAdam steps are counted from 1")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at optimizer step {t}")
    mu_t, mu_next = _momentum(cfg, t), _momentum(cfg, t + 1)
    prod_t = state.mu_prod * mu_t
    prod_next = prod_t * mu_next
    corr_v = 1 - cfg.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= mu_t
        m += (1 - mu_t) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        m_hat = (mu_next * m + (1 - mu_t) * g) / (1 - prod_next)
        v_hat = v / corr_v
        p -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.dtype, copy=False)
    state.t = t
    state.mu_prod = prod_t
    return state


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_err: list[float] = field(default_factory=list)
    val_err: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def append(self, loss, terr, verr, secs):
        self.train_loss.append(float(loss))
        self.train_err.append(float(terr))
        self.val_err.append(float(verr))
        self.seconds.append(float(secs))

    def rows(self):
        for i in range(len(self)):
            yield i + 1, self.train_loss[i], self.train_err[i], self.val_err[i], self.seconds[i]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_err", "val_err", "seconds"])
            for row in self.rows():
                w.writerow([row[0]] + [repr(x) for x in row[1:]])


def predict(model, X: np.ndarray, batch: int = 256) -> np.ndarray:
    """Forward pass over ``X`` in chunks."""
    out = [model.forward(X[i : i + batch]) for i in range(0, X.shape[0], batch)]
    return np.concatenate(out) if out else np.zeros((0,) + X.shape[1:], dtype=X.dtype)


def mean_relative_error(model, X, Y) -> float:
    return float(np.mean(relative_error(Y, predict(model, X))))


def _check_set(name, data, size):
    X, Y = data
    if X.shape[0] == 0:
        raise ConfigError(f"{name} set is empty")
    if X.shape != Y.shape or X.ndim != 2 or (size is not None and X.shape[1] != size):
        raise ConfigError(f"{name} set shapes {X.shape}, {Y.shape} do not match the model")


def train(model, train_set, val_set, cfg: TrainConfig, *, log=None) -> TrainHistory:
    """Shuffled mini-batch NAdam on the mean squared relative error.

    Training and validation relative errors are measured on the full sets
    after every epoch.  ``log`` is called as ``log(epoch, history)``.
    """
    size = getattr(getattr(model, "cfg", None), "size", None)
    _check_set("training", train_set, size)
    _check_set("validation", val_set, size)
    dtype = cfg.dtype
    model.astype(dtype)
    Xt, Yt = (np.ascontiguousarray(a, dtype=dtype) for a in train_set)
    Xv, Yv = (np.ascontiguousarray(a, dtype=dtype) for a in val_set)
    n = Xt.shape[0]
    bs = cfg.batch_size(n)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = NadamState.zeros(params)
    hist = TrainHistory()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        losses = []
        for bi, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            try:
                y, cache = model.forward_train(Xt[idx])
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            loss, gy = msre_loss(Yt[idx], y)
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged: loss {loss} at epoch {epoch}, batch {bi}")
            grads = model.backward(cache, gy)
            step += 1
            try:
                nadam_step(params, grads, state, step, cfg)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            losses.append(loss * len(idx))
        terr = mean_relative_error(model, Xt, Yt)
        verr = mean_relative_error(model, Xv, Yv)
        hist.append(sum(losses) / n, terr, verr, time.perf_counter() - t0)
        if log is not None:
            log(epoch, hist)
    return hist
