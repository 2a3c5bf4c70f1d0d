"""Checkpoint container: JSON header followed by little-endian float32 blobs.

Layout::

    b"FLCK" | uint64 LE header length | header JSON (UTF-8) | blob 0 | blob 1 | ...

The header's ``tensors`` list gives name, shape and byte offset (relative to
the first blob) for each array, in blob order.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"FLCK"


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    manifest = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = dict(meta)
    header["tensors"] = manifest
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(blobs)


def loads(raw: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    if len(raw) < 12:
        raise CheckpointError("truncated checkpoint header")
    (size,) = struct.unpack("<Q", raw[4:12])
    try:
        header = json.loads(raw[12:12 + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    entries = header.pop("tensors", None) if isinstance(header, dict) else None
    if not isinstance(entries, list):
        raise CheckpointError("corrupt checkpoint header: no tensor table")
    body = raw[12 + size:]
    tensors = {}
    for entry in entries:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        end = start + 4 * count
        if end > len(body):
            raise CheckpointError(f"tensor {entry['name']!r} runs past end of file")
        arr = np.frombuffer(body[start:end], dtype="<f4").reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(np.float32)
    return tensors, header


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    atomic_write(path, dumps(tensors, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
