"""Checkpoint files: JSON header + little-endian float32 parameter blobs.

Layout: 8-byte ASCII decimal header length, the UTF-8 JSON header, then the
parameters concatenated in header order.  The header records parameter
names/shapes, a config hash, and the RNG seed of the run.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save(path, named_params: dict[str, np.ndarray], config: dict,
         seed: int | None = None) -> None:
    header = {
        "format": "kinseg-ckpt-1",
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "params": [{"name": k, "shape": list(np.asarray(v).shape)}
                   for k, v in named_params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(b"%08d" % len(blob))
        fh.write(blob)
        for v in named_params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        n = int(fh.read(8))
        header = json.loads(fh.read(n).decode())
        if header.get("format") != "kinseg-ckpt-1":
            raise ValueError(f"{path}: not a kinseg checkpoint")
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 4)
            params[entry["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return params, header
