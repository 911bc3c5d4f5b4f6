"""CSV ingestion and egress.

Dialect: one record per line, configurable single-character delimiter,
RFC-4180-style double quoting. Quoted fields may contain the delimiter and
doubled quotes; embedded newlines are not supported and raise
:class:`ParseError`. An unquoted empty field is an error (ingestion never
produces nulls); an explicitly quoted empty field ``""`` is the empty
string. The writer emits null cells as truly empty fields, so only
null-free tables round-trip.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

from .errors import IoError, ParseError
from .table import Column, DataType, Field, Schema, Table

# Rows examined when inferring column types.
INFERENCE_WINDOW = 100

_INT_RE = re.compile(r"[+-]?[0-9]+\Z")
_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1


def _split_record(line: str, delimiter: str, row: int) -> tuple[list[str], list[bool] | None]:
    """Split one record into field texts plus per-field quoted flags.

    The flags list is None when no field was quoted (the overwhelmingly
    common case), letting the hot path be a plain split.
    """
    if '"' not in line:
        return line.split(delimiter), None
    cells: list[str] = []
    quoted: list[bool] = []
    i, n = 0, len(line)
    while True:
        if i < n and line[i] == '"':
            # Quoted field; doubled quotes escape a literal quote.
            i += 1
            parts: list[str] = []
            while True:
                j = line.find('"', i)
                if j < 0:
                    raise ParseError(
                        "unterminated quoted field (embedded newlines are unsupported)",
                        row=row,
                        col=len(cells),
                    )
                parts.append(line[i:j])
                if j + 1 < n and line[j + 1] == '"':
                    parts.append('"')
                    i = j + 2
                else:
                    i = j + 1
                    break
            if i < n and line[i] != delimiter:
                raise ParseError("garbage after closing quote", row=row, col=len(cells))
            cells.append("".join(parts))
            quoted.append(True)
        else:
            j = line.find(delimiter, i)
            end = n if j < 0 else j
            text = line[i:end]
            if '"' in text:
                raise ParseError("bare quote in unquoted field", row=row, col=len(cells))
            cells.append(text)
            quoted.append(False)
            i = end
        if i >= n:
            return cells, quoted
        i += 1  # consume delimiter; a trailing delimiter yields an empty last field


def _parse_int(s: str):
    if not _INT_RE.match(s):
        return None
    v = int(s)
    return v if _INT64_MIN <= v <= _INT64_MAX else None


def _parse_float(s: str):
    if not s or s != s.strip() or "_" in s:
        return None
    try:
        return float(s)
    except ValueError:
        return None


def _parse_bool(s: str):
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    return None


def _infer_dtype(sample: list[tuple[str, bool]]) -> DataType:
    # Fallback order: Int64, Float64, Bool, Utf8. A quoted field always
    # infers as Utf8; explicit dtypes override inference entirely.
    if all(not q and _parse_int(s) is not None for s, q in sample):
        return DataType.INT64
    if all(not q and _parse_float(s) is not None for s, q in sample):
        return DataType.FLOAT64
    if all(not q and _parse_bool(s) is not None for s, q in sample):
        return DataType.BOOL
    return DataType.UTF8


def _build_values(records, quoted_rows, c: int, dtype: DataType) -> list:
    """Convert column ``c`` of every record, with located errors.

    An unquoted empty field is always an error; a quoted empty field is the
    empty string for Utf8 and an error elsewhere.
    """
    parse = {
        DataType.INT64: _parse_int,
        DataType.FLOAT64: _parse_float,
        DataType.BOOL: _parse_bool,
    }.get(dtype)
    values = []
    append = values.append
    for i, cells in enumerate(records):
        s = cells[c]
        if not s:
            q = quoted_rows.get(i)
            if q is not None and q[c]:
                if dtype is DataType.UTF8:
                    append("")
                    continue
                raise ParseError(f"empty field for {dtype} column", row=i, col=c)
            raise ParseError("empty field", row=i, col=c)
        if parse is None:
            append(s)
            continue
        v = parse(s)
        if v is None:
            raise ParseError(f"cannot parse {s!r} as {dtype}", row=i, col=c)
        append(v)
    return values


def read_csv(
    path,
    *,
    delimiter: str = ",",
    has_header: bool = True,
    dtypes: list[DataType] | None = None,
) -> Table:
    """Read a CSV file into a table.

    Types are taken from ``dtypes`` when given, otherwise inferred from the
    first 100 data rows. Without a header, columns are named c0, c1, ...
    """
    if len(delimiter) != 1 or delimiter in '"\n\r':
        raise ValueError(f"invalid delimiter {delimiter!r}")
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not valid UTF-8: {exc}") from exc

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    if not lines:
        raise ParseError(f"no records in {path}")

    names = None
    if has_header:
        names, _ = _split_record(lines[0], delimiter, row=-1)
        lines = lines[1:]

    records: list[list[str]] = []
    quoted_rows: dict[int, list[bool]] = {}
    ncols = len(names) if names is not None else None
    for i, ln in enumerate(lines):
        cells, quoted = _split_record(ln, delimiter, row=i)
        if ncols is None:
            ncols = len(cells)
        elif len(cells) != ncols:
            raise ParseError(f"expected {ncols} fields, found {len(cells)}", row=i)
        records.append(cells)
        if quoted is not None:
            quoted_rows[i] = quoted

    if ncols is None:
        raise ParseError(f"no records in {path}")
    if has_header and not records and dtypes is None:
        # Header only: nothing to infer from; default everything to text.
        dtypes = [DataType.UTF8] * ncols

    if dtypes is not None:
        if len(dtypes) != ncols:
            raise ValueError(f"{len(dtypes)} dtypes for {ncols} columns")
        col_types = list(dtypes)
    else:
        window = range(min(INFERENCE_WINDOW, len(records)))
        col_types = [
            _infer_dtype(
                [
                    (records[i][c], quoted_rows.get(i) is not None and quoted_rows[i][c])
                    for i in window
                ]
            )
            for c in range(ncols)
        ]

    if names is None:
        names = [f"c{i}" for i in range(ncols)]
    try:
        schema = Schema(tuple(Field(n, d) for n, d in zip(names, col_types)))
    except ValueError as exc:
        raise ParseError(f"bad header: {exc}") from exc

    columns = []
    for c in range(ncols):
        values = _build_values(records, quoted_rows, c, col_types[c])
        columns.append(Column.from_values(col_types[c], values))
    return Table(schema, columns)


def _format_float(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return repr(v)


def _needs_quoting(s: str, delimiter: str) -> bool:
    return s == "" or delimiter in s or '"' in s or "\n" in s or "\r" in s


def _format_cell(col, i: int, delimiter: str) -> str:
    v = col.value(i)
    if v is None:
        return ""
    if col.dtype is DataType.UTF8:
        if _needs_quoting(v, delimiter):
            return '"' + v.replace('"', '""') + '"'
        return v
    if col.dtype is DataType.FLOAT64:
        return _format_float(v)
    if col.dtype is DataType.BOOL:
        return "true" if v else "false"
    return str(v)


def write_csv(table: Table, path, *, delimiter: str = ",", write_header: bool = True) -> None:
    """Write a table as CSV. Null cells become empty fields; strings are
    quoted when they contain the delimiter, quotes, newlines, or are empty."""
    if len(delimiter) != 1 or delimiter in '"\n\r':
        raise ValueError(f"invalid delimiter {delimiter!r}")
    out: list[str] = []
    if write_header:
        out.append(delimiter.join(table.field_names))
    cols = table.columns
    for i in range(table.num_rows):
        out.append(delimiter.join(_format_cell(c, i, delimiter) for c in cols))
    try:
        Path(path).write_text("\n".join(out), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
