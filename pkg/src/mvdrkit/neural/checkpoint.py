"""Checkpoint container.

Byte layout (all integers little-endian)::

    offset 0   8 bytes   magic b"MVDRCKPT"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length H in bytes
    offset 20  H bytes   UTF-8 JSON header, keys sorted:
                           {"config": {...},
                            "params": [{"name", "shape", "offset", "count"}, ...]}
    offset 20+H          parameter data: each array as float64 little-endian,
                         row-major, at its "offset" (bytes from the start of
                         this section), in header order with no padding

``config`` echoes everything needed to rebuild the model: variant, M, F,
K, L, taps, layer sizes, STFT settings and the feature layout.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MVDRCKPT"
VERSION = 1

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, config: dict, params: dict) -> Path:
    """Write named arrays (numpy or torch) plus a JSON-serializable config."""
    path = Path(path)
    entries, blobs, offset = [], [], 0
    for name, value in params.items():
        arr = value.detach().cpu().numpy() if hasattr(value, "detach") else np.asarray(value)
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"config": config, "params": entries}, sort_keys=True,
                        separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)
    return path


def load_checkpoint(path):
    """Return (config, {name: float64 ndarray})."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[20:20 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    base = 20 + hlen
    params = {}
    for e in header["params"]:
        start = base + e["offset"]
        end = start + 8 * e["count"]
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated data for {e['name']}")
        params[e["name"]] = np.frombuffer(raw[start:end], dtype="<f8").reshape(e["shape"]).copy()
    return header["config"], params
