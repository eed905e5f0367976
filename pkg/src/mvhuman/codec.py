"""Text (JSON) and binary encodings for nested documents holding float arrays.

Binary layout (all little-endian):
    magic  b"MVHB"
    u16    format version (1)
    u32    header length in bytes
    header UTF-8 JSON; every array is replaced by {"$blob": k, "shape": [...]}
    blobs  float64 arrays in order k = 0, 1, ... , C order, no padding
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MVHB"
BINARY_VERSION = 1


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def dumps_text(doc):
    return json.dumps(_to_jsonable(doc), indent=1, allow_nan=False) + "\n"


def loads_text(text):
    return json.loads(text)


def dumps_binary(doc):
    blobs = []

    def strip(obj):
        if isinstance(obj, np.ndarray):
            blobs.append(np.ascontiguousarray(obj, dtype="<f8"))
            return {"$blob": len(blobs) - 1, "shape": list(obj.shape)}
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [strip(v) for v in obj]
        return _to_jsonable(obj)

    header = json.dumps(strip(doc), separators=(",", ":"), allow_nan=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", BINARY_VERSION, len(header)), header]
    parts.extend(b.tobytes() for b in blobs)
    return b"".join(parts)


def loads_binary(buf):
    if buf[:4] != MAGIC:
        raise ValueError("not a binary document (bad magic)")
    version, hlen = struct.unpack_from("<HI", buf, 4)
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported binary version {version}")
    start = 10
    header = json.loads(buf[start:start + hlen].decode("utf-8"))
    offset = start + hlen
    shapes = []

    def collect(obj):
        if isinstance(obj, dict):
            if "$blob" in obj:
                shapes.append((obj["$blob"], tuple(obj["shape"])))
            else:
                for v in obj.values():
                    collect(v)
        elif isinstance(obj, list):
            for v in obj:
                collect(v)

    collect(header)
    arrays = {}
    for k, shape in sorted(shapes):
        n = int(np.prod(shape)) if shape else 1
        arrays[k] = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n

    def restore(obj):
        if isinstance(obj, dict):
            if "$blob" in obj:
                return arrays[obj["$blob"]]
            return {k: restore(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [restore(v) for v in obj]
        return obj

    return restore(header)


def save(doc, path):
    path = Path(path)
    data = dumps_binary(doc) if path.suffix == ".bin" else dumps_text(doc).encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        return loads_binary(raw)
    return loads_text(raw.decode("utf-8"))


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
