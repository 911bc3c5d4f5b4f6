"""In-memory columnar tables.

A :class:`Table` is an immutable relation: an ordered :class:`Schema` plus one
equal-length :class:`Column` per field. Fixed-width columns (Int64, Float64,
Bool) are numpy buffers; Utf8 columns are an offsets array plus a contiguous
UTF-8 byte buffer. A column may carry a validity mask (True = value present);
null cells only ever arise from outer joins, never from ingestion.

All operations return new tables. Underlying numpy arrays are marked
read-only so accidental mutation fails loudly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaMismatchError

# Characters that would break the CSV writer if they appeared in a field name,
# for any supported delimiter.
_NAME_FORBIDDEN = set(',\t;"\n\r')


class DataType(enum.Enum):
    INT64 = "int64"
    FLOAT64 = "float64"
    UTF8 = "utf8"
    BOOL = "bool"

    def __str__(self) -> str:
        return self.value

    @property
    def is_fixed_width(self) -> bool:
        return self is not DataType.UTF8

    @classmethod
    def parse(cls, text: str) -> "DataType":
        for dt in cls:
            if dt.value == text.lower():
                return dt
        raise ValueError(f"unknown dtype {text!r}")


_NUMPY_DTYPE = {
    DataType.INT64: np.dtype("<i8"),
    DataType.FLOAT64: np.dtype("<f8"),
    DataType.BOOL: np.dtype(bool),
}


@dataclass(frozen=True)
class Field:
    name: str
    dtype: DataType

    def __post_init__(self):
        if not self.name:
            raise ValueError("field name must be non-empty")
        bad = _NAME_FORBIDDEN.intersection(self.name)
        if bad:
            raise ValueError(f"field name {self.name!r} contains CSV-unsafe {sorted(bad)}")


@dataclass(frozen=True)
class Schema:
    fields: tuple[Field, ...]

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate field names in schema: {names}")

    @classmethod
    def of(cls, *pairs: tuple[str, DataType]) -> "Schema":
        return cls(tuple(Field(n, d) for n, d in pairs))

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    @property
    def dtypes(self) -> list[DataType]:
        return [f.dtype for f in self.fields]

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)


def _lock(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Column:
    """A typed value buffer with an optional validity mask.

    Fixed-width columns store ``values`` (numpy array). Utf8 columns store
    ``offsets`` (int64, length n+1, starting at 0, non-decreasing) and
    ``data`` (the concatenated UTF-8 bytes). ``validity`` is a boolean array
    (True = present) or None meaning everything is present. Cells that are
    null hold a zero/empty placeholder in the value buffer.
    """

    __slots__ = ("dtype", "length", "values", "offsets", "data", "validity")

    def __init__(
        self,
        dtype: DataType,
        *,
        values: np.ndarray | None = None,
        offsets: np.ndarray | None = None,
        data: bytes | None = None,
        validity: np.ndarray | None = None,
    ):
        self.dtype = dtype
        if dtype is DataType.UTF8:
            if values is not None or offsets is None or data is None:
                raise ValueError("utf8 column needs offsets + data")
            offsets = np.ascontiguousarray(offsets, dtype=np.int64)
            if offsets.ndim != 1 or len(offsets) < 1 or offsets[0] != 0:
                raise ValueError("utf8 offsets must be 1-d and start at 0")
            if np.any(np.diff(offsets) < 0):
                raise ValueError("utf8 offsets must be non-decreasing")
            if int(offsets[-1]) != len(data):
                raise ValueError("last utf8 offset must equal data length")
            self.offsets = _lock(offsets)
            self.data = bytes(data)
            self.values = None
            self.length = len(offsets) - 1
        else:
            if values is None or offsets is not None or data is not None:
                raise ValueError(f"{dtype} column needs a value array")
            values = np.ascontiguousarray(values, dtype=_NUMPY_DTYPE[dtype])
            if values.ndim != 1:
                raise ValueError("column values must be 1-d")
            self.values = _lock(values)
            self.offsets = None
            self.data = None
            self.length = len(values)
        if validity is not None:
            validity = np.ascontiguousarray(validity, dtype=bool)
            if len(validity) != self.length:
                raise ValueError("validity length must match column length")
            validity = _lock(validity)
        self.validity = validity

    @classmethod
    def from_values(cls, dtype: DataType, values: Iterable, validity=None) -> "Column":
        """Build a column from python values; ``None`` entries become nulls."""
        vals = list(values)
        nulls = [v is None for v in vals]
        if validity is None and any(nulls):
            validity = np.array([not n for n in nulls], dtype=bool)
        if dtype is DataType.UTF8:
            chunks = [b"" if v is None else str(v).encode("utf-8") for v in vals]
            offsets = np.zeros(len(chunks) + 1, dtype=np.int64)
            np.cumsum([len(c) for c in chunks], out=offsets[1:])
            return cls(dtype, offsets=offsets, data=b"".join(chunks), validity=validity)
        fill = 0 if dtype is not DataType.BOOL else False
        arr = np.array([fill if v is None else v for v in vals], dtype=_NUMPY_DTYPE[dtype])
        return cls(dtype, values=arr, validity=validity)

    def is_valid(self, i: int) -> bool:
        if not 0 <= i < self.length:
            raise IndexError(f"row {i} out of range for column of length {self.length}")
        return self.validity is None or bool(self.validity[i])

    def value(self, i: int):
        """Python value at row i, or None when the cell is null."""
        if not self.is_valid(i):
            return None
        if self.dtype is DataType.UTF8:
            lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
            return self.data[lo:hi].decode("utf-8")
        v = self.values[i]
        if self.dtype is DataType.INT64:
            return int(v)
        if self.dtype is DataType.FLOAT64:
            return float(v)
        return bool(v)

    def to_pylist(self) -> list:
        return [self.value(i) for i in range(self.length)]

    def __len__(self) -> int:
        return self.length

    def __repr__(self) -> str:
        return f"Column({self.dtype}, n={self.length})"


class Table:
    """Immutable columnar relation: schema + equal-length columns."""

    __slots__ = ("schema", "columns", "num_rows")

    def __init__(self, schema: Schema, columns: Sequence[Column]):
        columns = tuple(columns)
        if len(columns) != len(schema.fields):
            raise ValueError(f"{len(columns)} columns for {len(schema.fields)} fields")
        rows = columns[0].length if columns else 0
        for field, col in zip(schema.fields, columns):
            if col.dtype is not field.dtype:
                raise ValueError(f"column {field.name!r}: dtype {col.dtype} != {field.dtype}")
            if col.length != rows:
                raise ValueError(f"column {field.name!r}: length {col.length} != {rows}")
        self.schema = schema
        self.columns = columns
        self.num_rows = rows

    @classmethod
    def from_columns(cls, schema: Schema, column_values: Sequence[Iterable]) -> "Table":
        cols = [
            Column.from_values(f.dtype, vals) for f, vals in zip(schema.fields, column_values)
        ]
        if len(column_values) != len(schema.fields):
            raise ValueError("one value sequence per field required")
        return cls(schema, cols)

    @classmethod
    def from_rows(cls, schema: Schema, rows: Sequence[Sequence]) -> "Table":
        for i, r in enumerate(rows):
            if len(r) != len(schema.fields):
                raise ValueError(f"row {i} has {len(r)} cells, schema has {len(schema.fields)}")
        return cls.from_columns(schema, list(zip(*rows)) if rows else [[] for _ in schema.fields])

    @classmethod
    def empty(cls, schema: Schema) -> "Table":
        return cls.from_columns(schema, [[] for _ in schema.fields])

    def column(self, i: int) -> Column:
        return self.columns[i]

    def row(self, i: int) -> tuple:
        return tuple(c.value(i) for c in self.columns)

    def to_rows(self) -> list[tuple]:
        return [self.row(i) for i in range(self.num_rows)]

    @property
    def field_names(self) -> list[str]:
        return self.schema.names

    @property
    def dtypes(self) -> list[DataType]:
        return self.schema.dtypes

    def __repr__(self) -> str:
        cols = ", ".join(f"{f.name}:{f.dtype}" for f in self.schema.fields)
        return f"Table[{self.num_rows} x ({cols})]"


def _cumsum0(lengths: np.ndarray) -> np.ndarray:
    out = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=out[1:])
    return out


def _take_column(col: Column, idx: np.ndarray, null_out: np.ndarray | None) -> Column:
    """Gather rows of one column. Positions where ``null_out`` is True become
    null cells regardless of ``idx`` (used with a clamped index)."""
    validity = None
    if col.validity is not None:
        validity = col.validity[idx]
    if null_out is not None and null_out.any():
        if validity is None:
            validity = np.ones(len(idx), dtype=bool)
        else:
            validity = validity.copy()
        validity[null_out] = False
    if col.dtype is DataType.UTF8:
        starts = col.offsets[idx]
        lens = (col.offsets[idx + 1] - starts).astype(np.int64)
        if null_out is not None:
            lens = np.where(null_out, 0, lens)
        offsets = _cumsum0(lens)
        total = int(offsets[-1])
        if total:
            buf = np.frombuffer(col.data, dtype=np.uint8)
            flat = np.repeat(starts - offsets[:-1], lens) + np.arange(total, dtype=np.int64)
            data = buf[flat].tobytes()
        else:
            data = b""
        return Column(col.dtype, offsets=offsets, data=data, validity=validity)
    vals = col.values[idx]
    if null_out is not None and null_out.any():
        vals = vals.copy()
        vals[null_out] = False if col.dtype is DataType.BOOL else 0
    return Column(col.dtype, values=vals, validity=validity)


def take_rows(table: Table, indices) -> Table:
    """New table holding ``table``'s rows at ``indices``, in that order."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.num_rows):
        raise IndexError("row index out of range")
    return Table(table.schema, [_take_column(c, idx, None) for c in table.columns])


def take_rows_or_null(table: Table, indices) -> Table:
    """Like :func:`take_rows` but an index of -1 yields an all-null row.

    Outer joins use this to materialize the unmatched side.
    """
    idx = np.asarray(indices, dtype=np.int64)
    null_out = idx < 0
    if idx.size and idx.max() >= table.num_rows:
        raise IndexError("row index out of range")
    if not null_out.any():
        return Table(table.schema, [_take_column(c, idx, None) for c in table.columns])
    safe = np.where(null_out, 0, idx)
    if table.num_rows == 0:
        # Only all-null gathers are possible from an empty table.
        if not null_out.all():
            raise IndexError("row index out of range")
        cols = [
            Column.from_values(f.dtype, [None] * len(idx)) for f in table.schema.fields
        ]
        return Table(table.schema, cols)
    return Table(table.schema, [_take_column(c, safe, null_out) for c in table.columns])


def concat_tables(tables: Sequence[Table]) -> Table:
    """Row-wise concatenation. Schemas must be type-identical; names come
    from the first table."""
    if not tables:
        raise ValueError("need at least one table")
    first = tables[0]
    for t in tables[1:]:
        if t.dtypes != first.dtypes:
            raise SchemaMismatchError(
                f"cannot concatenate {t.dtypes} with {first.dtypes}"
            )
    if len(tables) == 1:
        return first
    out_cols = []
    for ci, field in enumerate(first.schema.fields):
        parts = [t.columns[ci] for t in tables]
        has_validity = any(p.validity is not None for p in parts)
        validity = None
        if has_validity:
            validity = np.concatenate(
                [
                    p.validity if p.validity is not None else np.ones(p.length, dtype=bool)
                    for p in parts
                ]
            )
        if field.dtype is DataType.UTF8:
            data = b"".join(p.data for p in parts)
            offs = [np.asarray(parts[0].offsets)]
            shift = int(parts[0].offsets[-1])
            for p in parts[1:]:
                offs.append(np.asarray(p.offsets[1:]) + shift)
                shift += int(p.offsets[-1])
            out_cols.append(
                Column(field.dtype, offsets=np.concatenate(offs), data=data, validity=validity)
            )
        else:
            out_cols.append(
                Column(
                    field.dtype,
                    values=np.concatenate([p.values for p in parts]),
                    validity=validity,
                )
            )
    return Table(first.schema, out_cols)
