"""Run configuration files for ``mnn train``, validated before any work starts."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .model import MnnConfig
from .training import TrainConfig

_INT = {"type": "integer"}
_NUM = {"type": "number"}

MNN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["N", "L", "m", "r"],
    "properties": {
        "type": {"const": "mnn"},
        "N": _INT, "L": _INT, "m": _INT, "r": _INT, "K": _INT,
        "dim": {"enum": [1, 2]},
        "flavor": {"enum": ["lc", "cnn"]},
        "activation": {"enum": ["relu", "linear"]},
        "nb": {"type": "object", "additionalProperties": _INT},
        "nb_ad": _INT,
        "post_correction": {"enum": ["none", "nlse", "ks"]},
        "n_e": _NUM,
        "domain_length": _NUM,
    },
}

PLAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type", "N", "layers", "channels", "window"],
    "properties": {
        "type": {"const": "plain_cnn"},
        "N": _INT, "layers": _INT, "channels": _INT, "window": _INT,
        "layer_count": {"enum": ["total", "hidden"]},
    },
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "epochs": _INT, "batch_fraction": _NUM, "lr": _NUM, "beta1": _NUM, "beta2": _NUM,
        "eps": _NUM, "momentum_decay": _NUM, "precision": {"enum": [32, 64]},
    },
}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "data", "output"],
    "properties": {
        "model": {"oneOf": [MNN_SCHEMA, PLAIN_SCHEMA]},
        "train": TRAIN_SCHEMA,
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["train", "val"],
            "properties": {"train": {"type": "string"}, "val": {"type": "string"}},
        },
        "output": {"type": "string"},
        "seed": _INT,
        "seeds": {"type": "array", "items": _INT, "minItems": 1},
    },
}


@dataclass
class RunConfig:
    model: dict
    train: TrainConfig
    train_data: Path
    val_data: Path
    output: Path
    seeds: list[int] = field(default_factory=lambda: [0])

    @property
    def is_plain(self) -> bool:
        return self.model.get("type") == "plain_cnn"

    def mnn_config(self) -> MnnConfig:
        return MnnConfig(**{k: v for k, v in self.model.items() if k != "type"})


def parse_run_config(raw: dict, base: Path | None = None) -> RunConfig:
    """Validate a decoded config; relative paths resolve against ``base``."""
    try:
        jsonschema.validate(raw, RUN_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid run config at {where}: {exc.message}") from None
    base = base or Path(".")
    train_kw = dict(raw.get("train", {}))
    seeds = raw.get("seeds") or [raw.get("seed", 0)]
    cfg = RunConfig(
        model=dict(raw["model"]),
        train=TrainConfig(**train_kw, seed=seeds[0]),
        train_data=base / raw["data"]["train"],
        val_data=base / raw["data"]["val"],
        output=base / raw["output"],
        seeds=list(seeds),
    )
    if not cfg.is_plain:
        cfg.mnn_config()  # surfaces size errors before any compute
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return parse_run_config(raw, path.parent)
