#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Codec for the bit-exact ``.snap`` field snapshot format.

Layout (little-endian): magic ``NSCHF1\\0``, u32 nx, u32 ny, u32 field count, then per field
u8 kind (0 cell, 1 x-face, 2 y-face), 16-byte zero-padded ASCII name and the f64 array in
row-major order; a trailing u32 CRC32 covers everything after the magic.
"""

import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from common.exceptions import CorruptSnapshotError, FormatVersionMismatchError
from literals import SNAPSHOT_MAGIC, SNAPSHOT_NAME_LENGTH, FieldKind

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<III")
_FIELD = struct.Struct(f"<B{SNAPSHOT_NAME_LENGTH}s")
_CRC = struct.Struct("<I")


def _shape(kind: FieldKind, nx: int, ny: int) -> tuple[int, int]:
    return {
        FieldKind.CELL: (nx, ny),
        FieldKind.X_FACE: (nx + 1, ny),
        FieldKind.Y_FACE: (nx, ny + 1),
    }[kind]


def kind_of(shape: tuple[int, ...], nx: int, ny: int) -> FieldKind:
    """Storage location matching an array shape."""
    for kind in FieldKind:
        if _shape(kind, nx, ny) == tuple(shape):
            return kind
    raise ValueError(f"array of shape {shape} does not live on a {nx}x{ny} grid")


def encode(nx: int, ny: int, fields: dict[str, np.ndarray]) -> bytes:
    """Serialize named arrays; their kinds are inferred from the shapes."""
    parts = [_HEADER.pack(nx, ny, len(fields))]
    for name, values in fields.items():
        encoded = name.encode("ascii")
        if len(encoded) > SNAPSHOT_NAME_LENGTH:
            raise ValueError(f"field name '{name}' longer than {SNAPSHOT_NAME_LENGTH} bytes")
        kind = kind_of(values.shape, nx, ny)
        parts.append(_FIELD.pack(kind.value, encoded))
        parts.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    payload = b"".join(parts)
    return SNAPSHOT_MAGIC + payload + _CRC.pack(zlib.crc32(payload))


def decode(data: bytes) -> tuple[int, int, dict[str, np.ndarray]]:
    """Parse a snapshot into (nx, ny, fields).

    Raises:
        FormatVersionMismatchError: if the magic bytes are not recognized.
        CorruptSnapshotError: on truncation, trailing bytes or checksum mismatch.
    """
    if len(data) < len(SNAPSHOT_MAGIC) + _HEADER.size + _CRC.size:
        raise CorruptSnapshotError(
            f"snapshot of {len(data)} bytes is truncated before its header"
        )
    if not data.startswith(SNAPSHOT_MAGIC):
        raise FormatVersionMismatchError(f"unknown snapshot magic {data[: len(SNAPSHOT_MAGIC)]!r}")
    body = data[len(SNAPSHOT_MAGIC) :]
    payload, (crc,) = body[: -_CRC.size], _CRC.unpack(body[-_CRC.size :])

    nx, ny, count = _HEADER.unpack_from(payload)
    offset = _HEADER.size
    fields = {}
    for _ in range(count):
        if offset + _FIELD.size > len(payload):
            raise CorruptSnapshotError("snapshot truncated inside a field header")
        code, raw_name = _FIELD.unpack_from(payload, offset)
        offset += _FIELD.size
        try:
            kind = FieldKind(code)
        except ValueError:
            raise CorruptSnapshotError(f"unknown field kind {code}")
        shape = _shape(kind, nx, ny)
        size = 8 * shape[0] * shape[1]
        if offset + size > len(payload):
            raise CorruptSnapshotError("snapshot truncated inside field data")
        name = raw_name.rstrip(b"\x00").decode("ascii")
        values = np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset)
        fields[name] = values.reshape(shape).copy()
        offset += size

    if offset != len(payload):
        raise CorruptSnapshotError(
            f"{len(payload) - offset} unexpected bytes after the last field"
        )
    if zlib.crc32(payload) != crc:
        raise CorruptSnapshotError("snapshot checksum mismatch")
    return nx, ny, fields


def write_snapshot(path: Path | str, nx: int, ny: int, fields: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(nx, ny, fields))


def read_snapshot(path: Path | str) -> tuple[int, int, dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes())
