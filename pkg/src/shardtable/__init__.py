"""shardtable: a distributed-memory columnar table engine.

Immutable columnar tables with the six relational operators (select,
project, join, union, intersect, difference) in local and distributed form.
Distributed execution hash-partitions rows by key and shuffles them
all-to-all so equal keys meet on one worker; workers stay single-threaded
and exchange messages through an in-process or TCP transport.
"""

from .errors import (
    ConfigError,
    ConnectError,
    DeadlockTimeout,
    EngineError,
    IoError,
    KeyNullError,
    ParseError,
    PredicateError,
    SchemaMismatchError,
    TransportError,
    UnsupportedDtypeError,
    WireFormatError,
    WorkerPanicError,
)
from .table import (
    Column,
    DataType,
    Field,
    Schema,
    Table,
    concat_tables,
    take_rows,
    take_rows_or_null,
)
from .rowcodec import (
    canonical_sort,
    encode_row,
    hash_row,
    hash_rows,
    row_encodings,
    tables_value_equal,
)
from .csvio import read_csv, write_csv
from .ops import (
    JoinAlgorithm,
    JoinConfig,
    JoinType,
    difference,
    intersect,
    join,
    project,
    select,
    union,
)
from .wire import deserialize_table, serialize_table
from .transport import Context, init_in_process, init_tcp, init_tcp_from_env
from .shuffle import PartitionSet, hash_partition, shuffle
from .distributed import (
    distributed_difference,
    distributed_intersect,
    distributed_join,
    distributed_project,
    distributed_select,
    distributed_union,
    gather_to_root,
)

__version__ = "0.1.0"

__all__ = [
    "Column",
    "ConfigError",
    "ConnectError",
    "Context",
    "DataType",
    "DeadlockTimeout",
    "EngineError",
    "Field",
    "IoError",
    "JoinAlgorithm",
    "JoinConfig",
    "JoinType",
    "KeyNullError",
    "ParseError",
    "PartitionSet",
    "PredicateError",
    "Schema",
    "SchemaMismatchError",
    "Table",
    "TransportError",
    "UnsupportedDtypeError",
    "WireFormatError",
    "WorkerPanicError",
    "canonical_sort",
    "concat_tables",
    "deserialize_table",
    "difference",
    "distributed_difference",
    "distributed_intersect",
    "distributed_join",
    "distributed_project",
    "distributed_select",
    "distributed_union",
    "encode_row",
    "gather_to_root",
    "hash_partition",
    "hash_row",
    "hash_rows",
    "init_in_process",
    "init_tcp",
    "init_tcp_from_env",
    "intersect",
    "join",
    "project",
    "read_csv",
    "row_encodings",
    "select",
    "serialize_table",
    "shuffle",
    "take_rows",
    "take_rows_or_null",
    "tables_value_equal",
    "union",
    "write_csv",
]
