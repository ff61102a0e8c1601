"""Self-describing binary container used for checkpoints and batch dumps.

Layout (all integers little endian):

    offset 0   8 bytes   magic b"ATRASBIN"
    offset 8   1 byte    format version (currently 1)
    offset 9   4 bytes   uint32 header length H
    offset 13  H bytes   UTF-8 JSON header
    offset 13+H          float64 LE payload arrays, concatenated

The JSON header carries a ``kind`` tag, free-form metadata, and an
``arrays`` list of ``{"name": ..., "shape": [...]}`` entries describing
the payload in order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"ATRASBIN"
VERSION = 1


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_container(path, expect_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 13 or raw[:8] != MAGIC:
        raise FormatError(f"{path}: not an ATRAS container")
    if raw[8] != VERSION:
        raise FormatError(f"{path}: unsupported container version {raw[8]}")
    (hlen,) = struct.unpack("<I", raw[9:13])
    try:
        header = json.loads(raw[13 : 13 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt container header: {e}") from e
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise FormatError(f"{path}: container kind {header.get('kind')!r}, expected {expect_kind!r}")

    arrays = {}
    offset = 13 + hlen
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        end = offset + 8 * count
        if end > len(raw):
            raise FormatError(f"{path}: payload truncated at array {entry['name']!r}")
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(entry["shape"]).copy()
        )
        offset = end
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after declared payload")
    return header, arrays
