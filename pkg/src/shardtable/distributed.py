"""Distributed operators: shuffle composed with the local operator.

Every function is a collective call: all workers of a context invoke it with
their own partition of the global relations and matching configuration. The
guiding contract is global equivalence: concatenating all workers' outputs
(canonically sorted) equals the local operator applied to the concatenated
global inputs. Join shuffles each side by its key columns; the set operators
shuffle both tables on all columns (whole-row key), which also guarantees no
duplicate row survives on two different workers. Select and project are
row-local, so they run without any communication.

Results stay partitioned; gathering is an explicit step
(:func:`gather_to_root`) used by verification.
"""

from __future__ import annotations

from typing import Sequence

from .errors import SchemaMismatchError
from .ops import (
    JoinConfig,
    Predicate,
    difference,
    intersect,
    join,
    project,
    select,
    union,
)
from .table import Table, concat_tables
from .transport import Context
from .shuffle import shuffle
from .wire import deserialize_table, serialize_table


def distributed_join(ctx: Context, left: Table, right: Table, cfg: JoinConfig) -> Table:
    """Shuffle both sides by their join keys, then join locally."""
    if ctx.world_size == 1:
        return join(left, right, cfg)
    left_sh = shuffle(ctx, left, cfg.left_keys)
    right_sh = shuffle(ctx, right, cfg.right_keys)
    return join(left_sh, right_sh, cfg)


def _shuffled_pair(ctx: Context, a: Table, b: Table) -> tuple[Table, Table]:
    if a.dtypes != b.dtypes or len(a.columns) != len(b.columns):
        raise SchemaMismatchError(f"dtype mismatch: {a.dtypes} vs {b.dtypes}")
    all_cols = range(len(a.columns))
    return shuffle(ctx, a, all_cols), shuffle(ctx, b, all_cols)


def distributed_union(ctx: Context, a: Table, b: Table) -> Table:
    if ctx.world_size == 1:
        return union(a, b)
    a_sh, b_sh = _shuffled_pair(ctx, a, b)
    return union(a_sh, b_sh)


def distributed_intersect(ctx: Context, a: Table, b: Table) -> Table:
    if ctx.world_size == 1:
        return intersect(a, b)
    a_sh, b_sh = _shuffled_pair(ctx, a, b)
    return intersect(a_sh, b_sh)


def distributed_difference(ctx: Context, a: Table, b: Table) -> Table:
    if ctx.world_size == 1:
        return difference(a, b)
    a_sh, b_sh = _shuffled_pair(ctx, a, b)
    return difference(a_sh, b_sh)


def distributed_select(ctx: Context, table: Table, predicate: Predicate) -> Table:
    """Row-local: applies per worker with no communication."""
    return select(table, predicate)


def distributed_project(ctx: Context, table: Table, cols: Sequence[int]) -> Table:
    """Row-local: applies per worker with no communication."""
    return project(table, cols)


def gather_to_root(ctx: Context, table: Table) -> Table | None:
    """Collect every worker's table on rank 0 (concatenated in rank order).

    Returns the gathered table on rank 0 and None elsewhere.
    """
    if ctx.world_size == 1:
        return table
    tag = ctx.next_collective_tag()
    if ctx.rank == 0:
        parts = [table]
        for source in range(1, ctx.world_size):
            parts.append(deserialize_table(ctx._receive_raw(source, tag), table.schema))
        return concat_tables(parts)
    ctx._send_raw(0, tag, serialize_table(table))
    return None
