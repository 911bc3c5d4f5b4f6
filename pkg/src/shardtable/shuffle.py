"""Hash partitioning and the all-to-all shuffle.

Rows are assigned to partition ``fnv1a64(key encoding) mod num_parts``; the
shuffle then exchanges partitions so that every row lands on the worker
owning its key. All workers must call :func:`shuffle` collectively, the same
number of times, with type-identical schemas and the same key columns.

The exchange follows a deterministic schedule to stay deadlock-free with
blocking receives: at step s (1..world_size-1) a worker sends its partition
for rank (rank+s) mod world_size and then receives from (rank-s) mod
world_size; sends are asynchronous underneath. Empty partitions still travel
as zero-row tables so the receive count is statically known.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SchemaMismatchError, WireFormatError
from .joins import check_no_null_keys
from .rowcodec import hash_rows
from .table import Table, concat_tables, take_rows
from .transport import Context
from .wire import deserialize_table, serialize_table


@dataclass(frozen=True)
class PartitionSet:
    """world_size tables, one per destination rank, sharing one schema."""

    parts: tuple[Table, ...]
    key_cols: tuple[int, ...]


def hash_partition(table: Table, key_cols: Sequence[int], num_parts: int) -> PartitionSet:
    """Split ``table`` into ``num_parts`` tables by key hash, preserving the
    source row order inside every part. Key cells must be non-null."""
    if num_parts < 1:
        raise ValueError(f"num_parts must be >= 1, got {num_parts}")
    key_cols = tuple(int(c) for c in key_cols)
    for c in key_cols:
        if not 0 <= c < len(table.columns):
            raise IndexError(f"key column {c} out of range")
    check_no_null_keys(table, key_cols, what="partition key")
    if num_parts == 1:
        return PartitionSet((table,), key_cols)
    part_of = hash_rows(table, key_cols) % np.uint64(num_parts)
    parts = tuple(
        take_rows(table, np.flatnonzero(part_of == p)) for p in range(num_parts)
    )
    return PartitionSet(parts, key_cols)


def shuffle(ctx: Context, table: Table, key_cols: Sequence[int]) -> Table:
    """Exchange rows so each lands on worker ``hash(key) mod world_size``.

    Returns the concatenation of the partitions destined to this rank, in
    origin-rank order (own part included without any network transfer).
    """
    parts = hash_partition(table, key_cols, ctx.world_size).parts
    if ctx.world_size == 1:
        return parts[0]
    tag = ctx.next_collective_tag()
    received: list[Table | None] = [None] * ctx.world_size
    received[ctx.rank] = parts[ctx.rank]
    for step in range(1, ctx.world_size):
        dest = (ctx.rank + step) % ctx.world_size
        source = (ctx.rank - step) % ctx.world_size
        ctx._send_raw(dest, tag, serialize_table(parts[dest]))
        payload = ctx._receive_raw(source, tag)
        try:
            received[source] = deserialize_table(payload, table.schema)
        except WireFormatError as exc:
            raise SchemaMismatchError(
                f"rank {source} sent an incompatible partition: {exc}"
            ) from exc
    return concat_tables([t for t in received if t is not None])
