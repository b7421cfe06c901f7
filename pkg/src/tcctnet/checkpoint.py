"""Binary checkpoints: a versioned JSON header followed by raw little-endian tensors.

Layout::

    b"TCCTNET\\0"        8 bytes
    version             uint32 LE
    header length       uint64 LE
    header              UTF-8 JSON {"model": ..., "meta": ..., "tensors": [...]}
    tensor data         concatenated, offsets relative to the end of the header
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .model import TCCTNet

MAGIC = b"TCCTNET\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_tensors(path, tensors: Dict[str, np.ndarray], model_config: Dict, meta: Optional[Dict] = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"model": model_config, "meta": meta or {}, "tensors": entries},
                        sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)


def read_tensors(path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any], Dict[str, Any]]:
    """Return ``(tensors, model_config, meta)``."""
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    try:
        version, hlen = struct.unpack_from("<IQ", data, pos)
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos += struct.calcsize("<IQ")
    try:
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    base = pos + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(data):
            raise CheckpointError(f"{path}: tensor {e['name']} extends past end of file")
        arr = np.frombuffer(data, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=start)
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
    return tensors, header["model"], header["meta"]


def save_checkpoint(path, model: TCCTNet, meta: Optional[Dict] = None) -> None:
    write_tensors(path, model.state_dict(), model.config_dict(), meta)


def load_checkpoint(path) -> Tuple[TCCTNet, Dict[str, Any]]:
    tensors, model_config, meta = read_tensors(path)
    model = TCCTNet.from_config_dict(model_config)
    try:
        model.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return model, meta
