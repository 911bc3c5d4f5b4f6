"""Exception hierarchy for the engine.

Every error carries a stable ``code`` string so foreign-language clients can
map failures without parsing messages. Out-of-range row/column indices raise
the builtin :class:`IndexError` rather than a custom class.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "engine_error"


class IoError(EngineError):
    """A file could not be read or written."""

    code = "io_error"


class ParseError(EngineError):
    """CSV input is malformed; carries the offending location when known.

    ``row`` is the 0-based data-row index (header excluded), ``col`` the
    0-based column index. Either may be None for file-level problems.
    """

    code = "parse_error"

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        loc = ""
        if row is not None:
            loc = f" at row {row}" + (f", column {col}" if col is not None else "")
        super().__init__(message + loc)
        self.row = row
        self.col = col


class ConfigError(EngineError):
    """Invalid operator configuration (key arity or type mismatch, bad flags)."""

    code = "config_error"


class KeyNullError(EngineError):
    """A null cell appeared in a key column where keys must be non-null."""

    code = "key_null"


class SchemaMismatchError(EngineError):
    """Two tables that must be type-compatible are not."""

    code = "schema_mismatch"


class PredicateError(EngineError):
    """A user predicate raised while being evaluated on a row."""

    code = "predicate_error"


class WireFormatError(EngineError):
    """A serialized table buffer is truncated or inconsistent with its schema."""

    code = "wire_format"


class UnsupportedDtypeError(EngineError):
    """A conversion was asked to handle a dtype outside the supported set."""

    code = "unsupported_dtype"


class TransportError(EngineError):
    """Message transport failure (peer unreachable, context finalized, ...)."""

    code = "transport_error"


class ConnectError(TransportError):
    """Mesh establishment failed; message names the unreachable peer."""

    code = "connect_error"


class DeadlockTimeout(TransportError):
    """A blocking receive or barrier stayed idle past the configured limit."""

    code = "deadlock_timeout"


class WorkerPanicError(EngineError):
    """One worker of a collective run failed; the run is torn down."""

    code = "worker_panic"

    def __init__(self, rank: int, message: str):
        super().__init__(f"worker {rank}: {message}")
        self.rank = rank
