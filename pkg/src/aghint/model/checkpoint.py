"""Versioned binary parameter checkpoints.

Layout::

    b"AGHINTCK"                      magic
    uint32 LE                        format version
    uint64 LE                        header length in bytes
    header                           UTF-8 JSON: config, config hash, meta, tensor table
    raw arrays                       little-endian, in tensor-table order
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .config import ModelConfig

MAGIC = b"AGHINTCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | os.PathLike, state: dict[str, np.ndarray], config: ModelConfig,
                    meta: Optional[dict[str, Any]] = None) -> Path:
    """Atomically write ``state`` (name -> array) with its config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(state)
    table = []
    for name in names:
        arr = state[name]
        table.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str.lstrip("<>=|")})
    header = json.dumps({
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "meta": meta or {},
        "tensors": table,
    }, sort_keys=True).encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for name in names:
            arr = state[name]
            fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | os.PathLike, expected: Optional[ModelConfig] = None):
    """Return ``(state, config, meta)``; rejects a config hash differing from ``expected``."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"{path}: checkpoint not found")
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not an AGHINT checkpoint")
        version, hlen = struct.unpack("<IQ", fh.read(12))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode())
        config = ModelConfig(**header["config"])
        if config.hash() != header["config_hash"]:
            raise CheckpointError(f"{path}: header config hash is inconsistent")
        if expected is not None and expected.hash() != header["config_hash"]:
            raise CheckpointError(
                f"{path}: config hash {header['config_hash']} does not match {expected.hash()}")
        state = {}
        for entry in header["tensors"]:
            dtype = np.dtype("<" + entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
            state[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(entry["shape"]).astype(
                dtype.newbyteorder("="))
    return state, config, header["meta"]
