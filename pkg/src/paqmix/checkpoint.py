"""Versioned flat parameter file.

Layout: 8-byte magic, little-endian uint32 format version, uint32 header
length, UTF-8 JSON header, then the float64 payloads of every entry in header
order. The header lists ``name`` and ``shape`` per entry plus model metadata
(``w``, ``d_model``, ``n_heads``, ``n_actions`` and any extras).
"""
import json
import struct

import numpy as np

MAGIC = b"PAQMIXCK"
VERSION = 1
REQUIRED = ("w", "d_model", "n_heads", "n_actions")


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, arrays, meta):
    missing = [k for k in REQUIRED if k not in meta]
    if missing:
        raise CheckpointError(f"checkpoint header lacks {missing}")
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    header = json.dumps({"meta": meta, "entries": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(meta, arrays)``; raises :class:`CheckpointError` on any format problem."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode())
    offset = 16 + hlen
    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"truncated payload for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError("trailing bytes after last payload")
    return header["meta"], arrays
