"""JSON checkpoints: named arrays per layer, config hash and seed.

Floats are written with Python's shortest round-trip repr, so load(save(p))
reproduces every bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from safesep.errors import ConfigError
from safesep.policy_net import NetworkParams

FORMAT = "safesep-checkpoint/1"


def checkpoint_dict(params: NetworkParams, config_hash: str, seed: int, config: dict | None = None,
                    meta: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "config_hash": config_hash,
        "seed": int(seed),
        "layer_sizes": list(params.layer_sizes),
        "arrays": {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
                   for k, v in params.arrays().items()},
        "config": config,
        "meta": meta or {},
    }


def save_checkpoint(path, params: NetworkParams, config_hash: str, seed: int, config: dict | None = None,
                    meta: dict | None = None) -> str:
    """Write a checkpoint; returns the short content hash."""
    text = json.dumps(checkpoint_dict(params, config_hash, seed, config, meta), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n")
    return content_hash(path)


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from exc
    if raw.get("format") != FORMAT:
        raise ConfigError(f"{path}: not a {FORMAT} file")
    arrays = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in raw["arrays"].items()}
    return NetworkParams(**arrays), raw


def content_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]
