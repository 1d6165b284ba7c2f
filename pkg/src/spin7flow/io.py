"""Serialization of grid fields.

Binary layout: the 4-byte magic ``S7GF``, then three little-endian int32
``rank, active_dims, n``, then the values as row-major little-endian
float64.  JSON carries the same header fields plus nested value lists and is
meant for small grids.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fields import Grid, GridField

MAGIC = b"S7GF"
_HEADER = struct.Struct("<4s3i")
JSON_MAX_VALUES = 1_000_000


class FieldFormatError(ValueError):
    pass


def to_bytes(field: GridField) -> bytes:
    g = field.grid
    header = _HEADER.pack(MAGIC, field.rank, g.active_dims, g.n)
    return header + np.ascontiguousarray(field.values, dtype="<f8").tobytes()


def from_bytes(data: bytes, scheme: str = "spectral") -> GridField:
    if len(data) < _HEADER.size:
        raise FieldFormatError("truncated header")
    magic, rank, active_dims, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError("bad magic")
    grid = Grid(active_dims, n, scheme)
    shape = grid.shape + (8,) * rank
    payload = data[_HEADER.size:]
    if len(payload) != 8 * int(np.prod(shape)):
        raise FieldFormatError("payload size does not match header")
    values = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(float)
    return GridField(grid, values)


def save_binary(field: GridField, path) -> None:
    Path(path).write_bytes(to_bytes(field))


def load_binary(path, scheme: str = "spectral") -> GridField:
    return from_bytes(Path(path).read_bytes(), scheme)


def to_json(field: GridField) -> str:
    if field.values.size > JSON_MAX_VALUES:
        raise FieldFormatError("field too large for JSON; use the binary format")
    g = field.grid
    return json.dumps({"rank": field.rank, "active_dims": g.active_dims, "n": g.n,
                       "scheme": g.scheme, "values": field.values.tolist()})


def from_json(text: str) -> GridField:
    d = json.loads(text)
    try:
        grid = Grid(d["active_dims"], d["n"], d.get("scheme", "spectral"))
        values = np.asarray(d["values"], dtype=float)
        rank = d["rank"]
    except KeyError as e:
        raise FieldFormatError(f"missing key {e}") from None
    if values.shape != grid.shape + (8,) * rank:
        raise FieldFormatError("values do not match header")
    return GridField(grid, values)
