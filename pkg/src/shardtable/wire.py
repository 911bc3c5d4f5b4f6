"""Binary table serialization for the shuffle exchange.

Layout (all integers little-endian):

  header    u32 column count, u64 row count
  per column, in schema order:
    u8  dtype code (0=Int64, 1=Float64, 2=Utf8, 3=Bool)
    u8  has-validity flag
    [validity bitmap]  ceil(rows/8) bytes, LSB-first, bit set = present
    Int64/Float64      rows * 8 value bytes
    Bool               rows * 1 value bytes (0/1)
    Utf8               u64 offset count (= rows+1), offsets as u64 each,
                       then the byte buffer (length = last offset)

Field names are not serialized; the receiver supplies the schema. Any
truncation, dtype disagreement, or offset inconsistency raises
:class:`WireFormatError`.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import WireFormatError
from .table import Column, DataType, Schema, Table

DTYPE_CODES = {
    DataType.INT64: 0,
    DataType.FLOAT64: 1,
    DataType.UTF8: 2,
    DataType.BOOL: 3,
}
_CODE_TO_DTYPE = {v: k for k, v in DTYPE_CODES.items()}


def serialize_table(table: Table) -> bytes:
    parts = [struct.pack("<IQ", len(table.columns), table.num_rows)]
    n = table.num_rows
    for col in table.columns:
        has_validity = col.validity is not None
        parts.append(struct.pack("<BB", DTYPE_CODES[col.dtype], int(has_validity)))
        if has_validity:
            parts.append(np.packbits(col.validity, bitorder="little").tobytes())
        if col.dtype is DataType.UTF8:
            parts.append(struct.pack("<Q", n + 1))
            parts.append(col.offsets.astype("<u8").tobytes())
            parts.append(col.data)
        elif col.dtype is DataType.BOOL:
            parts.append(col.values.astype(np.uint8).tobytes())
        else:
            parts.append(col.values.astype("<i8" if col.dtype is DataType.INT64 else "<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise WireFormatError(
                f"truncated buffer: need {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def deserialize_table(wire: bytes, schema: Schema) -> Table:
    """Reconstruct a table from ``wire`` under a pre-agreed schema."""
    r = _Reader(wire)
    ncols, nrows = r.unpack("<IQ")
    if ncols != len(schema.fields):
        raise WireFormatError(f"{ncols} columns on the wire, schema has {len(schema.fields)}")
    columns = []
    for field in schema.fields:
        code, has_validity = r.unpack("<BB")
        dtype = _CODE_TO_DTYPE.get(code)
        if dtype is None:
            raise WireFormatError(f"unknown dtype code {code}")
        if dtype is not field.dtype:
            raise WireFormatError(f"column {field.name!r}: wire says {dtype}, schema says {field.dtype}")
        validity = None
        if has_validity:
            bitmap = r.take((nrows + 7) // 8)
            validity = np.unpackbits(
                np.frombuffer(bitmap, dtype=np.uint8), count=nrows, bitorder="little"
            ).astype(bool)
        if dtype is DataType.UTF8:
            (offcount,) = r.unpack("<Q")
            if offcount != nrows + 1:
                raise WireFormatError(f"expected {nrows + 1} offsets, wire has {offcount}")
            offsets = np.frombuffer(r.take(8 * offcount), dtype="<u8").astype(np.int64)
            if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
                raise WireFormatError("utf8 offsets must start at 0 and be non-decreasing")
            data = r.take(int(offsets[-1]))
            columns.append(Column(dtype, offsets=offsets, data=data, validity=validity))
        elif dtype is DataType.BOOL:
            raw = np.frombuffer(r.take(nrows), dtype=np.uint8)
            if raw.size and raw.max() > 1:
                raise WireFormatError("bool buffer contains values other than 0/1")
            columns.append(Column(dtype, values=raw.astype(bool), validity=validity))
        else:
            npdt = "<i8" if dtype is DataType.INT64 else "<f8"
            vals = np.frombuffer(r.take(8 * nrows), dtype=npdt).copy()
            columns.append(Column(dtype, values=vals, validity=validity))
    if r.pos != len(wire):
        raise WireFormatError(f"{len(wire) - r.pos} trailing bytes after table")
    return Table(schema, columns)
