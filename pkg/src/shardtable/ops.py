"""Local relational operators: select, project, join, union, intersect,
difference.

All operators are pure functions over immutable tables and return new
tables. Row equality everywhere is byte equality of the canonical row
encoding, so nulls compare equal to nulls and float keys are well-defined
(NaN == NaN, -0.0 == +0.0).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import PredicateError, SchemaMismatchError
from .joins import (
    JoinAlgorithm,
    JoinConfig,
    JoinType,
    check_no_null_keys,
    join_indices,
    validate_join_config,
)
from .rowcodec import encode_matrix, matrix_as_void, row_encodings
from .table import Field, Schema, Table, concat_tables, take_rows, take_rows_or_null

Predicate = Callable[[Table, int], bool]

__all__ = [
    "JoinAlgorithm",
    "JoinConfig",
    "JoinType",
    "Predicate",
    "select",
    "project",
    "join",
    "union",
    "intersect",
    "difference",
]


def select(table: Table, predicate: Predicate) -> Table:
    """Rows of ``table`` where ``predicate(table, row)`` holds, in order."""
    keep = []
    for i in range(table.num_rows):
        try:
            ok = bool(predicate(table, i))
        except Exception as exc:
            raise PredicateError(f"predicate failed on row {i}: {exc}") from exc
        if ok:
            keep.append(i)
    return take_rows(table, np.array(keep, dtype=np.int64))


def _uniquify(name: str, seen: set[str]) -> str:
    if name not in seen:
        return name
    k = 1
    while f"{name}_{k}" in seen:
        k += 1
    return f"{name}_{k}"


def project(table: Table, cols: Sequence[int]) -> Table:
    """Columns of ``table`` at ``cols``, in that order. Duplicate indices are
    allowed; repeated names get a ``_1``, ``_2``, ... suffix."""
    cols = [int(c) for c in cols]
    if not cols:
        raise ValueError("projection column list must be non-empty")
    for c in cols:
        if not 0 <= c < len(table.columns):
            raise IndexError(f"column index {c} out of range")
    seen: set[str] = set()
    fields = []
    for c in cols:
        name = _uniquify(table.schema.fields[c].name, seen)
        seen.add(name)
        fields.append(Field(name, table.schema.fields[c].dtype))
    return Table(Schema(tuple(fields)), [table.columns[c] for c in cols])


def _joined_schema(left: Schema, right: Schema) -> Schema:
    fields = list(left.fields)
    seen = {f.name for f in fields}
    for f in right.fields:
        name = _uniquify(f.name, seen)
        seen.add(name)
        fields.append(Field(name, f.dtype))
    return Schema(tuple(fields))


def join(left: Table, right: Table, cfg: JoinConfig) -> Table:
    """Join two tables on byte-equal key encodings.

    Output schema is all left fields then all right fields (collisions get a
    numeric suffix on the right-side name). Hash output is grouped by left
    probe order; sort output is in key order. Both yield the same multiset.
    """
    validate_join_config(left, right, cfg)
    check_no_null_keys(left, cfg.left_keys)
    check_no_null_keys(right, cfg.right_keys)
    left_idx, right_idx = join_indices(left, right, cfg)
    out_left = take_rows_or_null(left, left_idx)
    out_right = take_rows_or_null(right, right_idx)
    return Table(_joined_schema(left.schema, right.schema), out_left.columns + out_right.columns)


def _check_set_compatible(a: Table, b: Table) -> None:
    if len(a.columns) != len(b.columns):
        raise SchemaMismatchError(
            f"column count mismatch: {len(a.columns)} vs {len(b.columns)}"
        )
    if a.dtypes != b.dtypes:
        raise SchemaMismatchError(f"dtype mismatch: {a.dtypes} vs {b.dtypes}")


def _whole_row_group_ids(a: Table, b: Table):
    """Group ids over the concatenated rows of both tables (all columns)."""
    cols = range(len(a.columns))
    ma, mb = encode_matrix(a, cols), encode_matrix(b, cols)
    if ma is not None and mb is not None:
        both = np.concatenate([matrix_as_void(ma), matrix_as_void(mb)])
        uniq, inv = np.unique(both, return_inverse=True)
        inv = inv.astype(np.int64, copy=False)
        return inv[: a.num_rows], inv[a.num_rows :], len(uniq)
    ids: dict[bytes, int] = {}
    encs = row_encodings(a, cols) + row_encodings(b, cols)
    for e in encs:
        if e not in ids:
            ids[e] = len(ids)
    inv = np.array([ids[e] for e in encs], dtype=np.int64)
    return inv[: a.num_rows], inv[a.num_rows :], len(ids)


def union(a: Table, b: Table) -> Table:
    """Distinct rows of a and b, in first-occurrence order scanning a then b.

    Column names come from ``a``; dtypes must match pairwise.
    """
    _check_set_compatible(a, b)
    ga, gb, _ = _whole_row_group_ids(a, b)
    combined = concat_tables([a, b])
    _, first = np.unique(np.concatenate([ga, gb]), return_index=True)
    return take_rows(combined, np.sort(first))


def intersect(a: Table, b: Table) -> Table:
    """Distinct rows present in both tables, in first-occurrence order from a."""
    _check_set_compatible(a, b)
    ga, gb, ngroups = _whole_row_group_ids(a, b)
    in_b = np.bincount(gb, minlength=ngroups) > 0
    vals, first = np.unique(ga, return_index=True)
    return take_rows(a, np.sort(first[in_b[vals]]))


def difference(a: Table, b: Table) -> Table:
    """Distinct rows of a that do not appear in b (set difference a \\ b),
    in first-occurrence order from a."""
    _check_set_compatible(a, b)
    ga, gb, ngroups = _whole_row_group_ids(a, b)
    in_b = np.bincount(gb, minlength=ngroups) > 0
    vals, first = np.unique(ga, return_index=True)
    return take_rows(a, np.sort(first[~in_b[vals]]))
