import json

import numpy as np
import pytest

from mnn import ConfigError, MnnConfig, build_mnn, build_plain_cnn
from mnn.config import load_run_config, parse_run_config
from mnn.persist import load_model, save_model

BASE = {
    "model": {"N": 16, "L": 2, "m": 4, "r": 2, "K": 1, "activation": "linear"},
    "train": {"epochs": 3, "lr": 1e-3},
    "data": {"train": "d/train", "val": "d/val"},
    "output": "out",
}


def test_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps(BASE))
    run = load_run_config(tmp_path / "run.json")
    assert run.train_data == tmp_path / "d/train" and run.output == tmp_path / "out"
    assert run.train.epochs == 3 and run.seeds == [0]
    assert run.mnn_config() == MnnConfig(16, 2, 4, 2, activation="linear")


@pytest.mark.parametrize("mutate", [
    lambda c: c["model"].update(extra=1),
    lambda c: c.update(extra=1),
    lambda c: c["train"].update(momentum=0.9),
    lambda c: c["model"].update(N="16"),
    lambda c: c.pop("data"),
    lambda c: c["model"].update(m=3),
    lambda c: c["train"].update(batch_fraction=0.5),
    lambda c: c.update(seeds=[]),
])
def test_invalid_configs_are_rejected(mutate):
    cfg = json.loads(json.dumps(BASE))
    mutate(cfg)
    with pytest.raises(ConfigError):
        parse_run_config(cfg)


def test_plain_cnn_config_and_seeds():
    cfg = dict(BASE, model={"type": "plain_cnn", "N": 16, "layers": 3, "channels": 4, "window": 5},
               seeds=[4, 5])
    run = parse_run_config(cfg)
    assert run.is_plain and run.seeds == [4, 5] and run.train.seed == 4


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_run_config(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(tmp_path / "bad.json")


@pytest.mark.parametrize("make", [
    lambda: build_mnn(MnnConfig(32, 3, 4, 2, K=2, post_correction="nlse"), seed=3),
    lambda: build_mnn(MnnConfig(16, 2, 4, 2, dim=2, flavor="cnn"), seed=1, dtype=np.float32),
    lambda: build_plain_cnn(3, 4, 5, 32, seed=2),
])
def test_model_round_trip(make, tmp_path, rng):
    model = make()
    for p in model.parameters():
        p[...] = rng.standard_normal(p.shape)
    save_model(model, tmp_path / "m", seed=9)
    back, spec = load_model(tmp_path / "m")
    assert spec["seed"] == 9 and back.dtype == model.dtype
    assert all(np.array_equal(a, b) for a, b in zip(model.parameters(), back.parameters()))
    size = spec["config"]["N"] ** spec["config"].get("dim", 1)
    v = rng.standard_normal((2, size)).astype(model.dtype)
    assert np.array_equal(model.forward(v), back.forward(v))
    kinds = [layer["kind"] for layer in spec["layers"]]
    assert "kernel" in kinds


def test_load_rejects_bad_directories(tmp_path):
    with pytest.raises(ConfigError):
        load_model(tmp_path)
    model = build_mnn(MnnConfig(16, 2, 4, 2))
    save_model(model, tmp_path / "m")
    spec = json.loads((tmp_path / "m/model.json").read_text())
    spec["config"]["r"] = 3
    (tmp_path / "m/model.json").write_text(json.dumps(spec))
    with pytest.raises(ConfigError):
        load_model(tmp_path / "m")


@pytest.mark.parametrize("name", ["linear", "nlse_desk", "nlse_long", "ks"])
def test_shipped_configs_validate(name):
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "configs" / f"{name}.json"
    assert load_run_config(path).output.name == name
