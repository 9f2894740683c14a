"""Flat binary checkpoints: named little-endian float64 arrays + JSON manifest.

Binary layout, repeated per array after the 8-byte magic ``NFCK0001``::

    u32 name_len | name (utf-8) | u32 ndim | u64 dims[ndim] | f64le data[prod(dims)]

The manifest (``<stem>.json``) lists name, shape and byte offset of every
array's data plus free-form metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NFCK0001"
FORMAT = "nasforge-f64le"


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> tuple[Path, Path]:
    path = Path(path)
    bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
    entries = []
    with open(bin_path, "wb") as fh:
        fh.write(MAGIC)
        for name in sorted(arrays):
            a = np.ascontiguousarray(arrays[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            entries.append({"name": name, "shape": list(a.shape), "offset": fh.tell()})
            fh.write(a.tobytes())
    manifest = {"schema": "v1", "format": FORMAT, "file": bin_path.name,
                "arrays": entries, "meta": meta or {}}
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return bin_path, json_path


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
    arrays = {}
    with open(bin_path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{bin_path} is not a nasforge checkpoint")
        while True:
            head = fh.read(4)
            if not head:
                break
            (n,) = struct.unpack("<I", head)
            name = fh.read(n).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            arrays[name] = data.reshape(shape).astype(np.float64)
    manifest = json.loads(json_path.read_text()) if json_path.exists() else {}
    return arrays, manifest.get("meta", {})
