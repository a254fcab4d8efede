"""Weight checkpoint files.

Layout::

    EMOCUE-CKPT 1\n
    <one-line JSON header>\n
    <payload: raw little-endian float64 arrays, back to back>

The header lists every array as ``{"name", "shape", "offset", "nbytes"}``
(offsets relative to the payload start), carries free-form ``meta`` and the
SHA-256 of the payload. Loading recomputes the hash and refuses mismatches.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import ChecksumError

MAGIC = b"EMOCUE-CKPT 1\n"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> str:
    """Write ``arrays`` (sorted by name) and return the payload hash."""
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = a.tobytes()
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    digest = hashlib.sha256(payload).hexdigest()
    header = {"dtype": "<f8", "tensors": entries, "sha256": digest, "meta": meta or {}}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)
    return digest


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ChecksumError(f"{path}: not a checkpoint file (bad magic)")
    end = blob.find(b"\n", len(MAGIC))
    try:
        header = json.loads(blob[len(MAGIC) : end])
        entries = header["tensors"]
        digest = header["sha256"]
    except (ValueError, KeyError) as exc:
        raise ChecksumError(f"{path}: unreadable checkpoint header ({exc})") from None
    payload = blob[end + 1 :]
    if hashlib.sha256(payload).hexdigest() != digest:
        raise ChecksumError(f"{path}: payload hash mismatch, file is corrupt")
    arrays = {}
    for e in entries:
        raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).copy()
    return arrays, header.get("meta", {})


def checkpoint_hash(path) -> str:
    """Payload hash of a checkpoint, verified against its content."""
    arrays, _ = load_checkpoint(path)
    blob = Path(path).read_bytes()
    end = blob.find(b"\n", len(MAGIC))
    return json.loads(blob[len(MAGIC) : end])["sha256"]
