"""Binary checkpoint format.

Layout: 5-byte magic ``SRTC1``, a little-endian u64 manifest length, the
manifest as UTF-8 JSON, then the raw tensor payload.  The manifest lists
every tensor's name, shape, dtype, byte offset (into the payload) and
size, plus free-form metadata and the config digest of the producing
run.  Offsets must be non-overlapping and in-bounds; loads are all-or-
nothing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SRTC1"
_ALLOWED_DTYPES = ("<f8", "<f4")


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


def save_checkpoint(tensors: dict[str, np.ndarray], path,
                    meta: dict | None = None, config_digest: str = "",
                    dtype: str = "<f8") -> None:
    """Write named tensors; ``dtype='<f4'`` downcasts the payload."""
    if dtype not in _ALLOWED_DTYPES:
        raise CheckpointError(f"unsupported dtype {dtype!r}")
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        # astype(order="C") keeps 0-d shapes, unlike ascontiguousarray
        arr = np.asarray(tensors[name]).astype(dtype, order="C")
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": dtype,
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "version": 1,
        "config_digest": config_digest,
        "meta": meta or {},
        "tensors": entries,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True,
                                separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, str]:
    """Read a checkpoint; returns (tensors, meta, config_digest).

    Tensors come back as float64 regardless of stored precision.  Any
    inconsistency (bad magic, truncation, overlapping or out-of-bounds
    offsets) raises CheckpointError naming the offending field.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: file shorter than header")
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(
            f"{path}: bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    (manifest_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    header_end = len(MAGIC) + 8 + manifest_len
    if header_end > len(blob):
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[len(MAGIC) + 8:header_end])
    except json.JSONDecodeError as err:
        raise CheckpointError(f"{path}: manifest is not valid JSON: {err}") \
            from None
    for key in ("version", "config_digest", "meta", "tensors"):
        if key not in manifest:
            raise CheckpointError(f"{path}: manifest missing field {key!r}")
    payload = blob[header_end:]
    tensors: dict[str, np.ndarray] = {}
    spans = []
    for entry in manifest["tensors"]:
        for key in ("name", "shape", "dtype", "offset", "nbytes"):
            if key not in entry:
                raise CheckpointError(
                    f"{path}: tensor entry missing field {key!r}")
        name = entry["name"]
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        if entry["dtype"] not in _ALLOWED_DTYPES:
            raise CheckpointError(
                f"{path}: tensor {name!r} has unsupported dtype "
                f"{entry['dtype']!r}")
        shape = tuple(int(s) for s in entry["shape"])
        itemsize = np.dtype(entry["dtype"]).itemsize
        expected = int(np.prod(shape, dtype=np.int64)) * itemsize
        off, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if nbytes != expected:
            raise CheckpointError(
                f"{path}: tensor {name!r} nbytes {nbytes} != shape "
                f"{shape} x {itemsize}")
        if off < 0 or off + nbytes > len(payload):
            raise CheckpointError(
                f"{path}: tensor {name!r} offset out of bounds "
                f"(payload has {len(payload)} bytes)")
        spans.append((off, off + nbytes, name))
        arr = np.frombuffer(payload, dtype=entry["dtype"],
                            count=nbytes // itemsize, offset=off)
        tensors[name] = arr.reshape(shape).astype(np.float64)
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise CheckpointError(
                f"{path}: tensors {n0!r} and {n1!r} overlap in the payload")
    return tensors, manifest["meta"], manifest["config_digest"]
