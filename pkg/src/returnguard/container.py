"""Versioned single-file model container.

Layout: ``RGMC`` magic, little-endian u32 header length, UTF-8 JSON header,
then the raw little-endian bytes of every array in header order. Output is
byte-for-byte reproducible for identical inputs.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RGMC"
FORMAT_VERSION = 1
_DTYPES = {"float64": "<f8", "int64": "<i8"}


class ContainerError(ValueError):
    pass


def save(path: str | Path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        key = "float64" if a.dtype.kind == "f" else "int64"
        data = np.ascontiguousarray(a, dtype=_DTYPES[key]).tobytes()
        entries.append({"name": name, "dtype": key, "shape": list(a.shape), "nbytes": len(data)})
        blobs.append(data)
    header = {"format_version": FORMAT_VERSION, "kind": kind, "meta": meta, "arrays": entries}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def load(path: str | Path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ContainerError(f"{path}: not a model container")
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + n])
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format_version {header.get('format_version')}")
    if kind is not None and header["kind"] != kind:
        raise ContainerError(f"{path}: expected kind {kind!r}, found {header['kind']!r}")
    arrays = {}
    pos = 8 + n
    for e in header["arrays"]:
        buf = data[pos:pos + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"]).copy()
        pos += e["nbytes"]
    return header["meta"], arrays


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
