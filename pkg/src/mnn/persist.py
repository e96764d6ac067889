"""Saving and loading trained networks as a JSON manifest plus one flat array file."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .arrayfile import read_array, write_array
from .errors import ConfigError
from .model import MnnConfig, MultiscaleNet, build_plain_cnn

MANIFEST = "model.json"
PARAMS = "params.mnn"


def save_model(model, directory, *, seed: int | None = None, extra: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    if isinstance(model, MultiscaleNet):
        spec = {"type": "mnn", "config": model.cfg.to_dict()}
    else:
        spec = {"type": "plain_cnn", "config": dict(model.spec)}
    spec["layers"] = [
        {"name": name, "kind": layer.kind, "activation": layer.activation,
         "weight": list(layer.weight.shape), "bias": list(layer.bias.shape)}
        for name, layer in model.named_layers
    ]
    spec["dtype"] = str(params[0].dtype)
    spec["seed"] = seed
    spec.update(extra or {})
    flat = np.concatenate([p.ravel() for p in params])
    write_array(d / PARAMS, flat)
    (d / MANIFEST).write_text(json.dumps(spec, indent=2) + "\n")


def load_model(directory):
    d = Path(directory)
    if not (d / MANIFEST).is_file() or not (d / PARAMS).is_file():
        raise ConfigError(f"{d} does not contain a saved model")
    spec = json.loads((d / MANIFEST).read_text())
    if spec["type"] == "mnn":
        model = MultiscaleNet(MnnConfig.from_dict(spec["config"]))
    elif spec["type"] == "plain_cnn":
        model = build_plain_cnn(**spec["config"])
    else:
        raise ConfigError(f"unknown model type {spec['type']!r}")
    flat = read_array(d / PARAMS)
    need = sum(p.size for p in model.parameters())
    if need != flat.size:
        raise ConfigError(f"parameter file holds {flat.size} values, the manifest needs {need}")
    arrays, pos = [], 0
    for p in model.parameters():
        arrays.append(flat[pos : pos + p.size].reshape(p.shape).copy())
        pos += p.size
    model.set_parameters(arrays)
    return model, spec
