"""Supervised datasets of (input, output) pairs with per-sample seed streams."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..arrayfile import read_array, write_array
from ..errors import ConfigError, NumericalError
from ..hierarchy import DyadicPartition
from ..hmatrix import compress, kernel_matrix
from .ks import N_KS, ks_map, sample_potential_ks
from .nlse import BETA, N_COARSE, N_NLSE, sample_potential_nlse, solve_nlse_ground_state

KINDS = ("nlse", "ks", "linear")
SPLITS = {"train": 0, "val": 1, "test": 2}
RESIDUAL_TOL = 1e-6

DEFAULTS = {
    "nlse": {"N": N_NLSE, "n_coarse": N_COARSE, "beta": BETA, "tau": 0.01, "tol": 1e-10, "max_iter": 100_000},
    "ks": {"N": N_KS, "n_g": 2, "sigma": 0.05, "multiplier": 4.0, "max_fill": 0.9, "backend": "lapack"},
    "linear": {"kernel": "expcos", "N": 16, "L": 2, "m": 4, "r": 2},
}


@dataclass
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    meta: dict = field(default_factory=dict)
    aux: np.ndarray | None = None  # NLSE energies or KS gaps, one per sample

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_array(d / "inputs.mnn", self.inputs)
        write_array(d / "outputs.mnn", self.outputs)
        if self.aux is not None:
            write_array(d / "aux.mnn", self.aux)
        (d / "meta.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "Dataset":
        d = Path(directory)
        for name in ("inputs.mnn", "outputs.mnn", "meta.json"):
            if not (d / name).is_file():
                raise ConfigError(f"dataset file {d / name} is missing")
        aux = read_array(d / "aux.mnn") if (d / "aux.mnn").is_file() else None
        meta = json.loads((d / "meta.json").read_text())
        return cls(read_array(d / "inputs.mnn"), read_array(d / "outputs.mnn"), meta, aux)


def resolve_params(kind: str, params: dict | None) -> dict:
    if kind not in KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; choose from {KINDS}")
    params = dict(params or {})
    unknown = set(params) - set(DEFAULTS[kind])
    if unknown:
        raise ConfigError(f"unknown {kind} parameters: {sorted(unknown)}")
    return {**DEFAULTS[kind], **params}


def sample_rng(seed: int, split: str, index: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream for one sample, keyed by (seed, split, index, attempt)."""
    return np.random.default_rng(np.random.SeedSequence([seed, SPLITS[split], index, attempt]))


@lru_cache(maxsize=4)
def linear_operator(kernel: str, N: int, L: int, m: int, r: int):
    """Rank-``r`` H-matrix factors of a named kernel; targets from these are exactly representable."""
    return compress(kernel_matrix(kernel, N), DyadicPartition(N, L, m), r)


def _one(kind, p, rng):
    if kind == "nlse":
        V = sample_potential_nlse(rng, p["N"], p["n_coarse"])
        sol = solve_nlse_ground_state(V, p["beta"], p["tau"], p["tol"], p["max_iter"])
        if sol.residual > RESIDUAL_TOL:
            raise NumericalError(f"eigen-residual {sol.residual:.2e} above {RESIDUAL_TOL:g}")
        return V, sol.u, sol.E
    if kind == "ks":
        V, _, _ = sample_potential_ks(rng, p["n_g"], p["sigma"], p["multiplier"], p["N"], p["max_fill"])
        sol = ks_map(V, p["n_g"], p["backend"])
        return V, sol.rho, sol.gap
    f = linear_operator(p["kernel"], p["N"], p["L"], p["m"], p["r"])
    v = rng.standard_normal(p["N"])
    return v, f.apply(v), 0.0


def make_sample(kind: str, params: dict, seed: int, split: str, index: int, max_retries: int = 10):
    """One sample with fresh draws on solver failure; returns ``(x, y, aux, retries)``."""
    last = None
    for attempt in range(max_retries + 1):
        try:
            x, y, aux = _one(kind, params, sample_rng(seed, split, index, attempt))
            return x, y, aux, attempt
        except NumericalError as exc:
            last = exc
    raise NumericalError(f"sample {index} failed after {max_retries + 1} attempts: {last}")


def _sample_star(args):
    return make_sample(*args)


def gen_dataset(kind: str, count: int, seed: int, params: dict | None = None, split: str = "train",
                workers: int = 1, max_retries: int = 10) -> Dataset:
    """Generate ``count`` independent samples; the result does not depend on ``workers``."""
    p = resolve_params(kind, params)
    if count < 0:
        raise ConfigError("count must be non-negative")
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    jobs = [(kind, p, seed, split, i, max_retries) for i in range(count)]
    if workers > 1 and count > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sample_star, jobs, chunksize=max(1, count // (4 * workers))))
    else:
        results = [_sample_star(j) for j in jobs]
    N = p["N"]
    X = np.array([r[0] for r in results]).reshape(count, N)
    Y = np.array([r[1] for r in results]).reshape(count, N)
    aux = np.array([r[2] for r in results], dtype=np.float64)
    retries = int(sum(r[3] for r in results))
    meta = {"kind": kind, "count": count, "seed": seed, "split": split, "params": p, "retries": retries,
            "grid": {"N": N, "domain": [0.0, 1.0] if kind != "ks" else [-1.0, 1.0]}}
    if kind == "ks":
        meta["mean_gap"] = float(aux.mean()) if count else None
        meta["degenerate"] = int(np.sum(aux < 1e-10))
        meta["n_e"] = p["n_g"]
    if kind == "nlse":
        meta["mean_energy"] = float(aux.mean()) if count else None
    return Dataset(X, Y, meta, aux)
