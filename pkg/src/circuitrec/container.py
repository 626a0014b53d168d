"""Binary container for named arrays.

Layout::

    magic      8 bytes (identifies the payload kind)
    version    uint32 little-endian
    hlen       uint32 little-endian
    header     hlen bytes of UTF-8 JSON: {"meta": ..., "tensors": [...], "sha256": ...}
    payload    tensors back to back, little-endian IEEE-754, C order

Each tensor entry lists ``name``, ``dtype`` (``"<f4"`` or ``"<f8"``) and
``shape``. ``sha256`` is the digest of the payload bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DTYPES = {"<f4": np.float32, "<f8": np.float64}


def write_container(path: str | Path, magic: bytes, meta: dict,
                    tensors: dict[str, np.ndarray]) -> str:
    """Write tensors and metadata; returns the payload digest."""
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    entries = []
    chunks = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype == np.float64:
            code = "<f8"
        elif arr.dtype == np.float32:
            code = "<f4"
        else:
            raise ValueError(f"{name}: unsupported dtype {arr.dtype}")
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        chunks.append(np.ascontiguousarray(arr, dtype=code).tobytes())
    payload = b"".join(chunks)
    digest = hashlib.sha256(payload).hexdigest()
    header = json.dumps(
        {"meta": meta, "tensors": entries, "sha256": digest}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(magic, VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
    return digest


def read_container(path: str | Path, magic: bytes) -> tuple[dict, dict[str, np.ndarray], str]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise FormatError(f"{path}: truncated header")
    got_magic, version, hlen = _PREFIX.unpack_from(data)
    if got_magic != magic:
        raise FormatError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from exc
    payload = data[start + hlen :]
    tensors = {}
    offset = 0
    if not isinstance(header, dict) or not isinstance(header.get("tensors"), list):
        raise FormatError(f"{path}: header lacks a tensor table")
    for entry in header["tensors"]:
        try:
            code, shape, name = entry["dtype"], [int(v) for v in entry["shape"]], entry["name"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad tensor entry {entry!r}") from exc
        if code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype {code}")
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * np.dtype(code).itemsize
        if offset + nbytes > len(payload):
            raise FormatError(f"{path}: truncated payload")
        arr = np.frombuffer(payload, dtype=code, count=count, offset=offset)
        tensors[name] = arr.reshape(shape).astype(_DTYPES[code])
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("sha256"):
        raise FormatError(f"{path}: payload digest mismatch")
    return header.get("meta", {}), tensors, digest
