"""Binary checkpoint container.

Layout: magic "F3D1", uint32 record count, then per record a
length-prefixed UTF-8 name, uint32 ndim, uint64 dims, and the raw
little-endian float64 buffer; then a length-prefixed config snapshot and
a trailing SHA-256 digest of everything before it. Round trips are
bit-identical and the digest is verified on load.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["MAGIC", "save_checkpoint", "load_checkpoint",
           "pack_rng_state", "unpack_rng_state", "CheckpointError"]

MAGIC = b"F3D1"


class CheckpointError(RuntimeError):
    pass


def _pack_record(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode("utf-8")
    parts = [struct.pack("<I", len(nb)), nb,
             struct.pack("<I", data.ndim)]
    parts += [struct.pack("<Q", d) for d in data.shape]
    parts.append(data.tobytes())
    return b"".join(parts)


def save_checkpoint(path, arrays: dict, config_text: str = ""):
    """Write named float64 arrays plus a config snapshot; keys are stored
    sorted so identical contents always produce identical bytes."""
    chunks = [MAGIC, struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        chunks.append(_pack_record(name, np.asarray(arrays[name])))
    cb = config_text.encode("utf-8")
    chunks.append(struct.pack("<I", len(cb)))
    chunks.append(cb)
    body = b"".join(chunks)
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(digest)


def load_checkpoint(path):
    """Returns (arrays dict, config snapshot text). Verifies magic and hash."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 + 32:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: content hash mismatch")
    if body[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {body[:4]!r}")
    off = 4
    (n_records,) = struct.unpack_from("<I", body, off)
    off += 4
    arrays = {}
    for _ in range(n_records):
        (name_len,) = struct.unpack_from("<I", body, off)
        off += 4
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", body, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", body, off)
        off += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        arrays[name] = arr.reshape(shape)
    (cfg_len,) = struct.unpack_from("<I", body, off)
    off += 4
    config_text = body[off:off + cfg_len].decode("utf-8")
    off += cfg_len
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes after records")
    return arrays, config_text


def pack_rng_state(values) -> np.ndarray:
    """Bit-cast a tuple of uint64 words into a float64 record payload."""
    return np.asarray(values, dtype=np.uint64).view(np.float64)


def unpack_rng_state(arr: np.ndarray):
    return tuple(int(v) for v in np.asarray(arr, dtype=np.float64).view(np.uint64))
