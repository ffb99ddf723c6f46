"""Parameter checkpoint file, format "flightpatch-ckpt-v1".

Layout (all integers little-endian):

    magic           b"flightpatch-ckpt-v1\\n"
    header_len      u32
    header          UTF-8 JSON, canonical key order
    header_sha      32 raw bytes, sha256 of the header
    n_entries       u32
    entry*          u16 name_len | name | u8 ndim | u32 dims... | f64 payload
    payload_sha     32 raw bytes, sha256 over all entry bytes

The header records the model configuration, the run seed, the earth
radius and the longitude sign convention, so a checkpoint is
self-describing and refuses to load against a mismatched setup.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"flightpatch-ckpt-v1\n"


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path: str | Path, state: dict[str, np.ndarray], header: dict) -> None:
    """Write parameters (name -> float64 array) with a JSON header."""
    header_bytes = _canonical_json(header)
    body = bytearray()
    body += struct.pack("<I", len(state))
    for name in state:  # insertion order = model definition order
        arr = np.ascontiguousarray(state[name], dtype=np.float64)
        name_b = name.encode("utf-8")
        body += struct.pack("<H", len(name_b))
        body += name_b
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes(order="C")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    blob += hashlib.sha256(header_bytes).digest()
    blob += bytes(body)
    blob += hashlib.sha256(bytes(body)).digest()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; raises CheckpointError on any corruption."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a flightpatch-ckpt-v1 file")
    off = len(MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    header_bytes = raw[off:off + header_len]
    off += header_len
    digest = raw[off:off + 32]
    off += 32
    if hashlib.sha256(header_bytes).digest() != digest:
        raise CheckpointError(f"{path}: header checksum mismatch (file tampered?)")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: header is not valid JSON: {exc}") from exc
    body = raw[off:-32]
    if hashlib.sha256(body).digest() != raw[-32:]:
        raise CheckpointError(f"{path}: payload checksum mismatch (file tampered?)")
    off = 0
    (n_entries,) = struct.unpack_from("<I", body, off)
    off += 4
    state: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", body, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        state[name] = arr.astype(np.float64)
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes after last entry")
    return header, state
