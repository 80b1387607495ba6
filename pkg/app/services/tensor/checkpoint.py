# services/tensor/checkpoint.py
"""
Checkpoint archive:

    b"SCDCKPT1" | u64 header length | JSON header | payload | u64 checksum

The header lists (name, dtype="f64", shape) for every array in canonical
(sorted) name order plus a free-form `meta` mapping. The payload is the
little-endian float64 data of the arrays in header order; the checksum is a
64-bit BLAKE2b digest of the payload.
"""
import hashlib
import json
import os
import struct
from collections import OrderedDict
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from logzero import logger

from app.exceptions.tensor_exceptions import CheckpointError
from app.services.tensor.nn import Module

MAGIC = b"SCDCKPT1"
MOMENTUM_PREFIX = "momentum/"


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def save_arrays(path: str, arrays: Mapping[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> None:
    names = sorted(arrays)
    entries = [{"name": name, "dtype": "f64", "shape": list(np.shape(arrays[name]))} for name in names]
    header = json.dumps({"entries": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes() for name in names)
    tmp_path = f"{path}.tmp"
    try:
        with open(tmp_path, "wb") as handle:
            handle.write(MAGIC)
            handle.write(struct.pack("<Q", len(header)))
            handle.write(header)
            handle.write(payload)
            handle.write(struct.pack("<Q", _checksum(payload)))
        os.replace(tmp_path, path)
    except OSError as e:
        logger.error(f"Writing checkpoint {path} failed: {str(e)}")
        raise CheckpointError(f"cannot write checkpoint {path}: {e}")


def load_arrays(path: str) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, Any]]:
    try:
        with open(path, "rb") as handle:
            blob = handle.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")

    if blob[:8] != MAGIC or len(blob) < 24:
        raise CheckpointError(f"{path} is not a checkpoint archive")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path} has a corrupted header")
    payload = blob[16 + header_len:-8]
    (stored,) = struct.unpack("<Q", blob[-8:])
    if stored != _checksum(payload):
        raise CheckpointError(f"{path} failed its payload checksum")

    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 0
    for entry in header["entries"]:
        if entry["dtype"] != "f64":
            raise CheckpointError(f"unsupported dtype {entry['dtype']} for {entry['name']}")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = payload[offset:offset + 8 * count]
        if len(chunk) != 8 * count:
            raise CheckpointError(f"{path} is truncated at {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        offset += 8 * count
    return arrays, header.get("meta", {})


def save_model(path: str, model: Module, meta: Optional[Dict[str, Any]] = None,
               include_momentum: bool = True) -> None:
    arrays: Dict[str, np.ndarray] = dict(model.state_dict())
    if include_momentum:
        for name, param in model.named_parameters():
            arrays[MOMENTUM_PREFIX + name] = param.momentum_buffer
    save_arrays(path, arrays, meta)
    logger.info(f"Saved checkpoint {path} ({len(arrays)} arrays)")


def load_model(path: str, model: Module) -> Dict[str, Any]:
    arrays, meta = load_arrays(path)
    state = {name: array for name, array in arrays.items() if not name.startswith(MOMENTUM_PREFIX)}
    model.load_state_dict(state)
    for name, param in model.named_parameters():
        buffer = arrays.get(MOMENTUM_PREFIX + name)
        param.momentum_buffer = np.zeros_like(param.data) if buffer is None else buffer.copy()
    logger.info(f"Loaded checkpoint {path}")
    return meta


def read_meta(path: str) -> Dict[str, Any]:
    return load_arrays(path)[1]
