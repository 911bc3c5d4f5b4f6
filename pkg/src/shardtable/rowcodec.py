"""Canonical row encoding, hashing, and test ordering.

Every cross-worker agreement in the engine (partitioning, key equality,
deduplication, canonical ordering) reduces to one byte encoding:

  per cell: 1 tag byte (0 = null, 1 = present), then for present cells
    Int64   8 bytes little-endian two's complement
    Float64 8 bytes little-endian bit pattern; every NaN collapses to one
            quiet-NaN pattern and -0.0 collapses to +0.0
    Bool    1 byte
    Utf8    4-byte little-endian length, then the UTF-8 bytes

Cells are concatenated in the requested column order. The encoding is
deterministic across platforms and injective over distinct cell tuples.

Row hashes are FNV-1a (64-bit) over those bytes. Hot paths use a padded
fixed-width "encoding matrix" for vectorized grouping: zero-padding cells to
a per-column fixed width preserves both equality and lexicographic order of
the true encodings (no encoding is ever a strict prefix of a different one),
so grouping and sorting on the matrix agree with the byte definition.
"""

from __future__ import annotations

import struct

import numpy as np

from .table import Column, DataType, Table, take_rows

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1

_QNAN = struct.unpack("<d", struct.pack("<Q", 0x7FF8000000000000))[0]

_FIXED_PAYLOAD = {DataType.INT64: 8, DataType.FLOAT64: 8, DataType.BOOL: 1}


def _check_cols(table: Table, cols) -> list[int]:
    out = []
    for c in cols:
        c = int(c)
        if not 0 <= c < len(table.columns):
            raise IndexError(f"column index {c} out of range")
        out.append(c)
    return out


def encode_cell(col: Column, row: int) -> bytes:
    if col.validity is not None and not col.validity[row]:
        return b"\x00"
    if col.dtype is DataType.INT64:
        return b"\x01" + struct.pack("<q", int(col.values[row]))
    if col.dtype is DataType.FLOAT64:
        v = float(col.values[row])
        if v != v:
            v = _QNAN
        elif v == 0.0:
            v = 0.0
        return b"\x01" + struct.pack("<d", v)
    if col.dtype is DataType.BOOL:
        return b"\x01\x01" if col.values[row] else b"\x01\x00"
    lo, hi = int(col.offsets[row]), int(col.offsets[row + 1])
    raw = col.data[lo:hi]
    return b"\x01" + struct.pack("<I", len(raw)) + raw


def encode_row(table: Table, row: int, cols) -> bytes:
    """Canonical byte encoding of the given cells of one row."""
    cols = _check_cols(table, cols)
    if not 0 <= row < table.num_rows:
        raise IndexError(f"row {row} out of range")
    return b"".join(encode_cell(table.columns[c], row) for c in cols)


def hash_row(encoding: bytes) -> int:
    """FNV-1a 64-bit hash of a row encoding; stable across workers."""
    h = FNV_OFFSET
    for b in encoding:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def row_encodings(table: Table, cols) -> list[bytes]:
    """Per-row canonical encodings (python path; fine for small tables)."""
    cols = _check_cols(table, cols)
    columns = [table.columns[c] for c in cols]
    return [
        b"".join(encode_cell(col, i) for col in columns) for i in range(table.num_rows)
    ]


def _canonical_floats(vals: np.ndarray) -> np.ndarray:
    out = vals.astype("<f8", copy=True)
    nan = np.isnan(out)
    if nan.any():
        out[nan] = _QNAN
    zero = out == 0.0
    if zero.any():
        out[zero] = 0.0
    return out


def encode_matrix(table: Table, cols) -> np.ndarray | None:
    """Padded fixed-width encoding matrix (n rows x total width bytes).

    Returns None when any requested column is Utf8 (variable width). Rows of
    the matrix compare (equality and lexicographic order) exactly like the
    true encodings; the bytes themselves differ where nulls are zero-padded.
    """
    cols = _check_cols(table, cols)
    columns = [table.columns[c] for c in cols]
    if any(c.dtype is DataType.UTF8 for c in columns):
        return None
    n = table.num_rows
    width = sum(1 + _FIXED_PAYLOAD[c.dtype] for c in columns)
    mat = np.zeros((n, width), dtype=np.uint8)
    off = 0
    for col in columns:
        valid = col.validity if col.validity is not None else None
        if valid is None:
            mat[:, off] = 1
        else:
            mat[:, off] = valid
        w = _FIXED_PAYLOAD[col.dtype]
        if col.dtype is DataType.BOOL:
            payload = col.values.astype(np.uint8).reshape(n, 1)
        else:
            vals = (
                _canonical_floats(col.values)
                if col.dtype is DataType.FLOAT64
                else col.values.astype("<i8", copy=False)
            )
            payload = vals.view(np.uint8).reshape(n, 8)
        if valid is not None:
            payload = payload.copy()
            payload[~valid] = 0
        mat[:, off + 1 : off + 1 + w] = payload
        off += 1 + w
    return mat


def matrix_as_void(mat: np.ndarray) -> np.ndarray:
    """View each matrix row as one opaque comparable scalar (memcmp order)."""
    mat = np.ascontiguousarray(mat)
    return mat.view(np.dtype((np.void, mat.shape[1]))).ravel()


def _all_valid(table: Table, cols) -> bool:
    return all(
        table.columns[c].validity is None or bool(table.columns[c].validity.all())
        for c in cols
    )


def hash_rows(table: Table, cols) -> np.ndarray:
    """Vector of FNV-1a hashes of the rows' key encodings (uint64).

    Vectorized when every key column is fixed-width and fully valid (then the
    padded matrix rows are bit-identical to the true encodings); otherwise
    falls back to per-row hashing.
    """
    cols = _check_cols(table, cols)
    mat = encode_matrix(table, cols)
    if mat is not None and _all_valid(table, cols):
        h = np.full(table.num_rows, FNV_OFFSET, dtype=np.uint64)
        prime = np.uint64(FNV_PRIME)
        for j in range(mat.shape[1]):
            h ^= mat[:, j].astype(np.uint64)
            h *= prime
        return h
    return np.array([hash_row(e) for e in row_encodings(table, cols)], dtype=np.uint64)


def sort_order(table: Table, cols) -> np.ndarray:
    """Stable permutation ordering rows by their encodings over ``cols``."""
    mat = encode_matrix(table, cols)
    if mat is not None:
        return np.argsort(matrix_as_void(mat), kind="stable")
    encs = row_encodings(table, cols)
    return np.array(
        sorted(range(table.num_rows), key=encs.__getitem__), dtype=np.int64
    )


def canonical_sort(table: Table) -> Table:
    """Rows reordered by the canonical encoding over all columns.

    A test-side normalization: operators never call this implicitly.
    """
    if table.num_rows <= 1:
        return table
    return take_rows(table, sort_order(table, range(len(table.columns))))


def tables_value_equal(a: Table, b: Table) -> bool:
    """Value-wise equality: schemas match (names and types) and every row's
    canonical encoding matches. NaNs compare equal; -0.0 equals +0.0."""
    if a.schema.names != b.schema.names or a.dtypes != b.dtypes:
        return False
    if a.num_rows != b.num_rows:
        return False
    cols = range(len(a.columns))
    ma, mb = encode_matrix(a, cols), encode_matrix(b, cols)
    if ma is not None and mb is not None:
        return ma.shape == mb.shape and bool(np.array_equal(ma, mb))
    return row_encodings(a, cols) == row_encodings(b, cols)
