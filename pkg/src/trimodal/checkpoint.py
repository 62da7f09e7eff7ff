"""Checkpoint file format.

Layout: magic "ICODECKPT1\\n", a single-line JSON header (parameter names,
shapes, dtype, byte offsets into the data section, config snapshot, step),
the parameter arrays as little-endian IEEE-754 float32 in header order,
then a 64-bit checksum (blake2b, 8-byte digest) of all preceding bytes.

Loading verifies the magic, the shape table, and the whole-file checksum;
a mismatch names the offending entry.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np

MAGIC = b"ICODECKPT1\n"


class CheckpointError(ValueError):
    pass


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def _config_snapshot(config):
    def encode(obj):
        if dataclasses.is_dataclass(obj):
            return {k: encode(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, dict):
            return {k: encode(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [encode(v) for v in obj]
        return obj

    return encode(config)


def save(path, params: dict, step: int, config=None, extra=None):
    """Write named float arrays (insertion order preserved) to `path`."""
    entries = []
    blobs = []
    offset = 0
    for name, value in params.items():
        arr = np.asarray(value.data if hasattr(value, "data") else value, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32",
                        "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = {
        "params": entries,
        "step": int(step),
        "config": _config_snapshot(config) if config is not None else None,
        "extra": extra,
    }
    payload = MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(blobs)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(_checksum(payload))


def load(path):
    """Read a checkpoint; returns (params dict of float32 arrays, header)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or not raw.startswith(MAGIC):
        raise CheckpointError("bad magic: not a checkpoint file")
    payload, digest = raw[:-8], raw[-8:]
    if _checksum(payload) != digest:
        raise CheckpointError("checksum mismatch: file corrupt or truncated")
    newline = payload.index(b"\n", len(MAGIC))
    header = json.loads(payload[len(MAGIC):newline].decode())
    data = payload[newline + 1:]
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).copy()
    return params, header


def restore_into(model_params: dict, loaded: dict):
    """Copy loaded arrays into model parameters, verifying the shape table."""
    missing = set(model_params) - set(loaded)
    surplus = set(loaded) - set(model_params)
    if missing or surplus:
        name = sorted(missing | surplus)[0]
        raise CheckpointError(f"parameter set mismatch at {name!r}")
    for name, p in model_params.items():
        arr = loaded[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"shape mismatch for {name!r}: file {arr.shape}, model {p.data.shape}")
        p.data = arr.astype(p.data.dtype)
