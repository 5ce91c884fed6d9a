"""Model artifacts: ``<stem>.json`` manifest plus ``<stem>.bin`` parameter blob.

The blob is the concatenation of every tensor, C order, little-endian
float64, in the order listed under ``tensors`` in the manifest. Input
scaling (``x_mean``, ``x_std``) is stored first.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import FileError, SchemaError
from .models import ModelConfig, build_network
from .train import TrainedModel

FORMAT = "ppgmorph-model/1"
DTYPE = np.dtype("<f8")


def _paths(path):
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".json", ".bin") else p
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_model(model: TrainedModel, path, extra=None):
    """Write the manifest and blob; returns the manifest path."""
    jpath, bpath = _paths(path)
    tensors = {"x_mean": model.x_mean, "x_std": model.x_std}
    tensors.update(model.net.state_dict())
    layout, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype=DTYPE)
        layout.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        chunks.append(a.tobytes())
        offset += a.size
    blob = b"".join(chunks)
    bpath.write_bytes(blob)
    manifest = {
        "format": FORMAT,
        "config": model.cfg.to_dict(),
        "feature_names": model.feature_names,
        "dtype": "float64",
        "byte_order": "little",
        "blob": bpath.name,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "tensors": layout,
    }
    if extra:
        manifest.update(extra)
    jpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return jpath


def load_model(path) -> TrainedModel:
    jpath, _ = _paths(path)
    if not jpath.exists():
        raise FileError(f"model manifest not found: {jpath}")
    manifest = json.loads(jpath.read_text())
    if manifest.get("format") != FORMAT:
        raise SchemaError(f"{jpath}: unsupported model format {manifest.get('format')!r}")
    bpath = jpath.parent / manifest["blob"]
    if not bpath.exists():
        raise FileError(f"parameter blob not found: {bpath}")
    blob = bpath.read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise SchemaError(f"{bpath}: checksum mismatch")
    flat = np.frombuffer(blob, dtype=DTYPE)
    tensors = {}
    for t in manifest["tensors"]:
        a = flat[t["offset"] : t["offset"] + t["count"]]
        if a.size != t["count"]:
            raise SchemaError(f"{bpath}: blob too short for tensor {t['name']}")
        tensors[t["name"]] = a.reshape(t["shape"]).astype(float)
    cfg = ModelConfig.from_dict(manifest["config"])
    net = build_network(cfg, np.random.default_rng(0))
    net.load_state_dict(tensors)
    return TrainedModel(cfg, net, list(manifest["feature_names"]), tensors["x_mean"], tensors["x_std"])
