"""Binary tensor container and checkpoint archives.

Layout of one tensor file::

    b"SWTENSR0"                      8-byte magic
    uint64 little-endian             header length in bytes
    UTF-8 JSON                       {"dtype": "f32"|"f64", "shape": [...]}
    raw little-endian row-major payload

A checkpoint is a zip archive holding ``manifest.json`` plus one tensor file
per named array.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
import zipfile
from typing import BinaryIO, Dict, Mapping, Tuple

import numpy as np

MAGIC = b"SWTENSR0"
_LE = {"f32": "<f4", "f64": "<f8"}


class ContainerError(ValueError):
    pass


def write_tensor(fh: BinaryIO, array: np.ndarray) -> None:
    a = np.asarray(array)
    if a.dtype == np.float32:
        tag = "f32"
    elif a.dtype == np.float64:
        tag = "f64"
    else:
        raise ContainerError(f"unsupported dtype {a.dtype}")
    header = json.dumps({"dtype": tag, "shape": list(a.shape)}, separators=(",", ":")).encode("utf-8")
    fh.write(MAGIC)
    fh.write(struct.pack("<Q", len(header)))
    fh.write(header)
    fh.write(np.ascontiguousarray(a, dtype=_LE[tag]).tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> np.ndarray:
    if fh.read(8) != MAGIC:
        raise ContainerError("bad magic")
    raw = fh.read(8)
    if len(raw) != 8:
        raise ContainerError("truncated header length")
    (n,) = struct.unpack("<Q", raw)
    header = json.loads(fh.read(n).decode("utf-8"))
    tag, shape = header["dtype"], tuple(int(s) for s in header["shape"])
    if tag not in _LE:
        raise ContainerError(f"unknown dtype {tag!r}")
    count = int(np.prod(shape, dtype=np.int64))
    itemsize = 4 if tag == "f32" else 8
    payload = fh.read(count * itemsize)
    if len(payload) != count * itemsize:
        raise ContainerError("truncated payload")
    out = np.frombuffer(payload, dtype=_LE[tag]).reshape(shape)
    return out.astype(np.float32 if tag == "f32" else np.float64)


def tensor_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, array)
    return buf.getvalue()


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_tensor(path: str, array: np.ndarray) -> None:
    atomic_write_bytes(path, tensor_bytes(array))


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def save_archive(path: str, tensors: Mapping[str, np.ndarray], manifest: Mapping) -> None:
    """Store named tensors plus a JSON manifest in one zip file."""
    manifest = dict(manifest)
    manifest["entries"] = sorted(tensors)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True, indent=1))
        for name in sorted(tensors):
            zf.writestr(f"{name}.swt", tensor_bytes(tensors[name]))
    atomic_write_bytes(path, buf.getvalue())


def load_archive(path: str) -> Tuple[Dict[str, np.ndarray], dict]:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
        tensors = {}
        for name in manifest["entries"]:
            tensors[name] = read_tensor(io.BytesIO(zf.read(f"{name}.swt")))
    return tensors, manifest
