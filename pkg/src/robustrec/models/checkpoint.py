"""Checkpoint directories: manifest.json + index.json + one <f8 blob per parameter."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_checkpoint(path: str | Path, manifest: dict, params: dict[str, np.ndarray]) -> None:
    """Write a checkpoint directory. Round-trips bit-exactly: parameters are
    stored as raw little-endian float64, shapes in index.json."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    index = {name: list(arr.shape) for name, arr in sorted(params.items())}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (root / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    for name, arr in sorted(params.items()):
        data = np.ascontiguousarray(arr, dtype="<f8")
        (root / f"{name}.f64").write_bytes(data.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    index = json.loads((root / "index.json").read_text())
    params: dict[str, np.ndarray] = {}
    for name, shape in index.items():
        raw = (root / f"{name}.f64").read_bytes()
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        expected = int(np.prod(shape)) if shape else 1
        if arr.size != expected:
            raise ValueError(f"{path}: parameter {name} has {arr.size} values, expected {expected}")
        params[name] = arr.reshape(shape)
    return manifest, params
