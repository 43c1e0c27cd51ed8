"""One JSON config document with sections, plus dot-path CLI overrides.

Every run is parameterized by a single nested dict. Files and overrides may
only touch keys that exist in the defaults; unknown paths are rejected with
the offending dotted path so typos cannot silently change an experiment.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from ..dataset import SplitConfig
from ..robustness import DefenseConfig
from .training import TrainingConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "dataset": {
        "path": "",
        "name": "default",
        "min_reviews_per_user": 1,
        "max_rating": 5,
        "seed": 0,
    },
    "model": {
        "algo": "efm",
        "efm": {
            "n_factors": 64,
            "n_hidden": 32,
            "alpha": 0.85,
            "top_k_features": 10,
            "explain_pool": 0,
            "lam_x": 1.0,
            "lam_y": 1.0,
            "lam_a": 1.0,
            "lam_reg": 1e-3,
            "lam_nn": 1.0,
        },
        "cer": {
            "hidden": [256, 64],
            "lam_reg": 1e-4,
            "top_k": 5,
            "cf_gamma": 100.0,
            "cf_steps": 200,
            "cf_lr": 0.01,
            "cf_margin_frac": 0.01,
        },
    },
    "training": {
        "batch_size": 32,
        "lr": 0.001,
        "weight_decay": 0.0,
        "max_epochs": 50,
        "patience": 5,
        "min_delta": 1e-4,
        "retries": 2,
        "val_k": 10,
        "seed": 0,
    },
    "defense": {
        "lambda": 0.0,
        "eps_d": 0.0,
    },
    "attack": {
        "eps_a_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
        "batch_size": 32,
        "seed": 0,
    },
    "eval": {
        "k_ndcg": 100,
        "k_rec": 5,
        "top_n": 1,
    },
    "sweep": {
        "algos": ["efm", "cer"],
        "lambdas": [0.0, 0.5],
        "eps_ds": [0.25],
        "seeds": [0],
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base: dict, incoming: dict, prefix: str = "") -> None:
    for key, value in incoming.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {dotted!r} "
                              f"(valid here: {sorted(base)})")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} expects a section, got {value!r}")
            _merge(base[key], value, prefix=dotted + ".")
        else:
            base[key] = _coerce(dotted, base[key], value)


def _coerce(dotted: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {dotted!r} expects a bool, got {value!r}")
        return value
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, int) and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(default, str) and isinstance(value, str):
        return value
    if isinstance(default, list) and isinstance(value, list):
        return list(value)
    # empty-string defaults act as untyped placeholders (e.g. dataset.path)
    if isinstance(default, str):
        return str(value)
    raise ConfigError(f"config key {dotted!r}: cannot assign {value!r} "
                      f"over default {default!r}")


def load_config(path: str | Path | None = None) -> dict:
    """Defaults, deep-merged with the JSON document at `path` if given."""
    cfg = default_config()
    if path is not None:
        doc = json.loads(Path(path).read_text())
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(cfg, doc)
    return cfg


def apply_override(cfg: dict, dotted: str, raw: str) -> None:
    """Set one key by dotted path; the value is parsed as JSON, falling back
    to a bare string (so `--model.algo cer` works without quotes)."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = dotted.split(".")
    node = cfg
    schema = DEFAULTS
    for part in parts[:-1]:
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError(f"unknown config key: {dotted!r}")
        node = node[part]
        schema = schema[part]
    leaf = parts[-1]
    if not isinstance(schema, dict) or leaf not in schema or isinstance(schema[leaf], dict):
        raise ConfigError(f"unknown config key: {dotted!r}")
    node[leaf] = _coerce(dotted, schema[leaf], value)


def apply_overrides(cfg: dict, pairs: list[tuple[str, str]]) -> None:
    for dotted, raw in pairs:
        apply_override(cfg, dotted, raw)


def config_hash(obj) -> str:
    """12-hex content hash of a canonical JSON rendering."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def split_config(cfg: dict) -> SplitConfig:
    return SplitConfig(seed=int(cfg["dataset"]["seed"]))


def defense_config(cfg: dict) -> DefenseConfig:
    return DefenseConfig(lam=float(cfg["defense"]["lambda"]),
                         eps_d=float(cfg["defense"]["eps_d"]))


def training_config(cfg: dict) -> TrainingConfig:
    t = cfg["training"]
    return TrainingConfig(batch_size=int(t["batch_size"]), lr=float(t["lr"]),
                          weight_decay=float(t["weight_decay"]),
                          max_epochs=int(t["max_epochs"]), patience=int(t["patience"]),
                          min_delta=float(t["min_delta"]), retries=int(t["retries"]),
                          val_k=int(t["val_k"]))
