"""Checkpoint, CSV and manifest persistence."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .engine import ModelSpec, ParamSet
from .errors import ConfigurationError


def fmt(x: float) -> str:
    """Round-trippable scientific notation."""
    return f"{float(x):.17e}"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def params_digest(params: ParamSet) -> str:
    h = hashlib.sha256()
    for layer, ts in params.items():
        for t, a in ts.items():
            h.update(f"{layer}/{t}{a.shape}".encode())
            h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def save_params(path, params: ParamSet) -> None:
    np.savez(path, **{f"{layer}/{t}": a for layer, ts in params.items() for t, a in ts.items()})


def load_params(path) -> ParamSet:
    params: ParamSet = {}
    with np.load(path) as z:
        for key in z.files:
            layer, t = key.split("/", 1)
            params.setdefault(layer, {})[t] = z[key]
    return params


def load_checkpoint(directory):
    """Return ``(spec, params, config_dict)`` from a ``train`` output directory."""
    d = Path(directory)
    needed = [d / "checkpoint.npz", d / "model_spec.json", d / "config.json"]
    missing = [p.name for p in needed if not p.exists()]
    if missing:
        raise ConfigurationError(f"{d} is not a checkpoint directory (missing {', '.join(missing)})")
    spec = ModelSpec.from_json((d / "model_spec.json").read_text())
    params = load_params(d / "checkpoint.npz")
    if list(params) != spec.layer_names():
        raise ConfigurationError("checkpoint layers do not match model_spec.json")
    config = json.loads((d / "config.json").read_text())
    return spec, params, config
