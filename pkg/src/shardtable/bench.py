"""Synthetic data generation, the benchmark runner, and result verification.

Benchmarks mirror the strong-scaling shape: fixed total work split across
workers, the operator timed per repeat between a barrier and local
completion. Data loading is never timed. The reported collective time per
repeat is the max over workers; the headline number is the median over
repeats with the first repeat treated as warm-up and excluded (when there
is more than one repeat).

Verification runs the distributed operator, gathers all outputs to rank 0,
and compares them (canonically sorted) against the local operator applied
to the concatenated inputs.
"""

from __future__ import annotations

import operator
import os
import socket
import statistics
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distributed as dist
from .csvio import read_csv, write_csv
from .errors import ConfigError, EngineError
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
from .rowcodec import canonical_sort, row_encodings
from .table import Column, DataType, Field, Schema, Table, concat_tables, take_rows
from .wire import serialize_table
from .transport import (
    ENV_PEERS,
    ENV_RANK,
    ENV_WORLD_SIZE,
    Context,
    init_in_process,
)

OPS = ("join", "union", "intersect", "difference", "select", "project")
TWO_RELATION_OPS = ("join", "union", "intersect", "difference")

LAYOUTS = {
    # name -> (header names, payload double-column count)
    "4col": (["id", "d1", "d2", "d3"], 3),
    "2col": (["id", "d1"], 1),
}

_COMPARATORS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def gen(
    rows: int,
    layout: str,
    seed: int,
    out_prefix: str,
    parts: int,
    key_domain: int | None = None,
    delimiter: str = ",",
) -> list[Path]:
    """Write ``parts`` CSV files named ``<prefix>_<rank>.csv``.

    The id column is uniform over [0, key_domain); payload doubles are
    uniform over [0, 1). Output is byte-deterministic for a given seed. Rows
    split evenly with the remainder going to the lowest ranks.
    """
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; choose from {sorted(LAYOUTS)}")
    if key_domain is None:
        key_domain = max(1, rows // 4)
    if key_domain < 1:
        raise ValueError("key_domain must be >= 1")
    names, payload_cols = LAYOUTS[layout]
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, key_domain, size=rows, dtype=np.int64)
    payload = rng.random((rows, payload_cols))
    schema = Schema(
        tuple(
            [Field(names[0], DataType.INT64)]
            + [Field(n, DataType.FLOAT64) for n in names[1:]]
        )
    )
    paths = []
    start = 0
    for rank in range(parts):
        size = rows // parts + (1 if rank < rows % parts else 0)
        chunk = slice(start, start + size)
        start += size
        cols = [Column(DataType.INT64, values=ids[chunk])]
        cols += [
            Column(DataType.FLOAT64, values=payload[chunk, j].copy())
            for j in range(payload_cols)
        ]
        path = Path(f"{out_prefix}_{rank}.csv")
        write_csv(Table(schema, cols), path, delimiter=delimiter)
        paths.append(path)
    return paths


@dataclass(frozen=True)
class BenchSpec:
    """One benchmark/verification configuration, echoed into every report row."""

    op: str
    rows_per_relation: int
    world_size: int
    join_type: JoinType = JoinType.INNER
    algorithm: JoinAlgorithm = JoinAlgorithm.HASH
    key_domain: int = 1
    seed: int = 0
    repeats: int = 1
    predicate: tuple[int, str, str] | None = None
    project_cols: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.op not in OPS:
            raise ConfigError(f"unknown op {self.op!r}; choose from {OPS}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.key_domain < 1:
            raise ConfigError("key_domain must be >= 1")
        if self.world_size < 1:
            raise ConfigError("world_size must be >= 1")

    def join_config(self) -> JoinConfig:
        return JoinConfig(self.join_type, self.algorithm, (0,), (0,))

    def spec_fields(self) -> list[str]:
        return [
            self.op,
            str(self.rows_per_relation),
            str(self.world_size),
            self.join_type.value,
            self.algorithm.value,
            str(self.key_domain),
            str(self.seed),
            str(self.repeats),
        ]


REPORT_HEADER = (
    "op,rows_per_relation,world_size,join_type,algorithm,"
    "key_domain,seed,repeats,repeat,worker,seconds,output_rows"
)


@dataclass
class BenchReport:
    spec: BenchSpec
    # (repeat, worker, seconds, output_rows)
    timings: list[tuple[int, int, float, int]] = field(default_factory=list)

    def max_seconds(self, repeat: int) -> float:
        return max(t[2] for t in self.timings if t[0] == repeat)

    def median_seconds(self) -> float:
        """Median of per-repeat max-over-workers, excluding the warm-up
        repeat 0 whenever more than one repeat ran."""
        repeats = sorted({t[0] for t in self.timings})
        if len(repeats) > 1:
            repeats = repeats[1:]
        return statistics.median(self.max_seconds(r) for r in repeats)

    def output_rows(self, repeat: int = 0) -> int:
        return sum(t[3] for t in self.timings if t[0] == repeat)

    def csv_lines(self, include_header: bool = True) -> list[str]:
        lines = [REPORT_HEADER] if include_header else []
        prefix = ",".join(self.spec.spec_fields())
        for repeat, worker, seconds, out_rows in sorted(self.timings):
            lines.append(f"{prefix},{repeat},{worker},{seconds:.6f},{out_rows}")
        return lines

    def summary_lines(self) -> list[str]:
        lines = [
            f"# per-repeat max-over-workers seconds: "
            + " ".join(
                f"r{r}={self.max_seconds(r):.4f}" for r in sorted({t[0] for t in self.timings})
            ),
            f"# median seconds (warm-up excluded): {self.median_seconds():.4f}",
            f"# global output rows: {self.output_rows()}",
        ]
        return lines


def predicate_from_triple(table: Table, col: int, cmp: str, literal: str):
    """Build a row predicate from a (column, comparator, literal) triple.

    The literal is parsed at the column's dtype; null cells never match.
    """
    if cmp not in _COMPARATORS:
        raise ConfigError(f"unknown comparator {cmp!r}; choose from {sorted(_COMPARATORS)}")
    if not 0 <= col < len(table.columns):
        raise IndexError(f"predicate column {col} out of range")
    dtype = table.dtypes[col]
    try:
        if dtype is DataType.INT64:
            value = int(literal)
        elif dtype is DataType.FLOAT64:
            value = float(literal)
        elif dtype is DataType.BOOL:
            value = {"true": True, "false": False}[literal.lower()]
        else:
            value = literal
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot parse literal {literal!r} as {dtype}") from exc
    op = _COMPARATORS[cmp]

    def pred(t: Table, i: int) -> bool:
        v = t.columns[col].value(i)
        return False if v is None else bool(op(v, value))

    return pred


def relation_paths(prefix: str, rank: int, op: str) -> list[Path]:
    paths = [Path(f"{prefix}_1_{rank}.csv")]
    if op in TWO_RELATION_OPS:
        paths.append(Path(f"{prefix}_2_{rank}.csv"))
    return paths


def _load_relations(spec: BenchSpec, prefix: str, rank: int):
    paths = relation_paths(prefix, rank, spec.op)
    left = read_csv(paths[0])
    right = read_csv(paths[1]) if len(paths) > 1 else None
    return left, right


def _run_distributed(ctx: Context, spec: BenchSpec, left: Table, right: Table | None) -> Table:
    if spec.op == "join":
        return dist.distributed_join(ctx, left, right, spec.join_config())
    if spec.op == "union":
        return dist.distributed_union(ctx, left, right)
    if spec.op == "intersect":
        return dist.distributed_intersect(ctx, left, right)
    if spec.op == "difference":
        return dist.distributed_difference(ctx, left, right)
    if spec.op == "select":
        col, cmp, lit = spec.predicate or (0, ">=", "0")
        return dist.distributed_select(ctx, left, predicate_from_triple(left, col, cmp, lit))
    return dist.distributed_project(ctx, left, spec.project_cols)


def run_local_op(spec: BenchSpec, left: Table, right: Table | None) -> Table:
    if spec.op == "join":
        return join(left, right, spec.join_config())
    if spec.op == "union":
        return union(left, right)
    if spec.op == "intersect":
        return intersect(left, right)
    if spec.op == "difference":
        return difference(left, right)
    if spec.op == "select":
        col, cmp, lit = spec.predicate or (0, ">=", "0")
        return select(left, predicate_from_triple(left, col, cmp, lit))
    return project(left, spec.project_cols)


def bench_worker_body(ctx: Context, spec: BenchSpec, prefix: str):
    """One rank of a benchmark run: load (untimed), then barrier + timed op
    per repeat."""
    left, right = _load_relations(spec, prefix, ctx.rank)
    records = []
    for repeat in range(spec.repeats):
        ctx.barrier()
        t0 = time.perf_counter()
        out = _run_distributed(ctx, spec, left, right)
        seconds = time.perf_counter() - t0
        records.append((repeat, ctx.rank, seconds, out.num_rows))
    return records


def run_bench_in_process(spec: BenchSpec, prefix: str, timeout: float = 300.0) -> BenchReport:
    results = init_in_process(
        spec.world_size, lambda ctx: bench_worker_body(ctx, spec, prefix), timeout=timeout
    )
    report = BenchReport(spec)
    for recs in results:
        report.timings.extend(recs)
    return report


@dataclass
class VerifyResult:
    ok: bool
    worker_rows: list[int]
    global_rows: int
    oracle_rows: int
    first_diff: int | None

    def lines(self) -> list[str]:
        out = [f"worker {r}: {n} output rows" for r, n in enumerate(self.worker_rows)]
        out.append(f"global output rows: {self.global_rows}")
        out.append(f"local oracle rows: {self.oracle_rows}")
        if self.ok:
            out.append("VERIFY PASS")
        else:
            out.append(f"VERIFY FAIL: first differing row index {self.first_diff}")
        return out


def _first_difference(a: Table, b: Table) -> int | None:
    """Index of the first differing row of two canonically sorted tables."""
    if a.num_rows == b.num_rows and serialize_table(a) == serialize_table(b):
        return None  # buffer-level equality; skips the per-row walk entirely
    ea = row_encodings(a, range(len(a.columns)))
    eb = row_encodings(b, range(len(b.columns)))
    for i, (x, y) in enumerate(zip(ea, eb)):
        if x != y:
            return i
    if len(ea) != len(eb):
        return min(len(ea), len(eb))
    return None


def verify_worker_body(
    ctx: Context, spec: BenchSpec, prefix: str, inject_fault: int | None = None
):
    """One rank of a verification run. Returns (rank rows, VerifyResult on
    rank 0 / None elsewhere)."""
    left, right = _load_relations(spec, prefix, ctx.rank)
    out = _run_distributed(ctx, spec, left, right)
    if inject_fault is not None and ctx.rank == inject_fault and out.num_rows > 0:
        out = take_rows(out, np.arange(1, out.num_rows))  # drop one row: poisoned result
    my_rows = out.num_rows
    counts = _gather_counts(ctx, my_rows)
    gathered = dist.gather_to_root(ctx, out)
    if ctx.rank != 0:
        return my_rows, None
    lefts, rights = [], []
    for r in range(ctx.world_size):
        l, rt = _load_relations(spec, prefix, r)
        lefts.append(l)
        if rt is not None:
            rights.append(rt)
    oracle = run_local_op(spec, concat_tables(lefts), concat_tables(rights) if rights else None)
    got, want = canonical_sort(gathered), canonical_sort(oracle)
    diff = _first_difference(got, want)
    result = VerifyResult(
        ok=diff is None,
        worker_rows=counts,
        global_rows=gathered.num_rows,
        oracle_rows=oracle.num_rows,
        first_diff=diff,
    )
    return my_rows, result


def _gather_counts(ctx: Context, rows: int) -> list[int]:
    tag = ctx.next_collective_tag()
    if ctx.rank == 0:
        counts = [rows]
        for r in range(1, ctx.world_size):
            counts.append(int.from_bytes(ctx._receive_raw(r, tag), "little"))
        return counts
    ctx._send_raw(0, tag, rows.to_bytes(8, "little"))
    return []


def run_verify_in_process(
    spec: BenchSpec, prefix: str, inject_fault: int | None = None, timeout: float = 300.0
) -> VerifyResult:
    results = init_in_process(
        spec.world_size,
        lambda ctx: verify_worker_body(ctx, spec, prefix, inject_fault),
        timeout=timeout,
    )
    return results[0][1]


# --- multi-process (tcp) orchestration --------------------------------------


def _free_ports(n: int) -> list[int]:
    socks, ports = [], []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


def spawn_tcp_workers(
    spec: BenchSpec,
    prefix: str,
    mode: str,
    inject_fault: int | None = None,
    timeout: float = 300.0,
) -> tuple[int, str, str]:
    """Launch one ``worker`` subprocess per rank on loopback and collect
    their output. Returns (exit_code, stdout, stderr)."""
    ports = _free_ports(spec.world_size)
    peers = ",".join(f"127.0.0.1:{p}" for p in ports)
    argv = [
        sys.executable,
        "-m",
        "shardtable",
        "worker",
        "--mode",
        mode,
        "--prefix",
        prefix,
        "--op",
        spec.op,
        "--rows",
        str(spec.rows_per_relation),
        "--world-size",
        str(spec.world_size),
        "--join-type",
        spec.join_type.value,
        "--algorithm",
        spec.algorithm.value,
        "--key-domain",
        str(spec.key_domain),
        "--seed",
        str(spec.seed),
        "--repeats",
        str(spec.repeats),
    ]
    if spec.predicate is not None:
        col, cmp, lit = spec.predicate
        argv += ["--predicate", str(col), cmp, lit]
    if spec.op == "project":
        argv += ["--cols", ",".join(str(c) for c in spec.project_cols)]
    if inject_fault is not None:
        argv += ["--inject-fault", str(inject_fault)]
    procs = []
    for rank in range(spec.world_size):
        env = dict(os.environ)
        env[ENV_RANK] = str(rank)
        env[ENV_WORLD_SIZE] = str(spec.world_size)
        env[ENV_PEERS] = peers
        procs.append(
            subprocess.Popen(
                argv, env=env, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True
            )
        )
    outs, errs, code = [], [], 0
    for p in procs:
        try:
            out, err = p.communicate(timeout=timeout)
        except subprocess.TimeoutExpired:
            p.kill()
            out, err = p.communicate()
            code = code or 124
        outs.append(out)
        errs.append(err)
        code = code or p.returncode
    return code, "".join(outs), "".join(errs)


def run_bench_tcp(spec: BenchSpec, prefix: str, timeout: float = 300.0) -> BenchReport:
    code, out, err = spawn_tcp_workers(spec, prefix, "bench", timeout=timeout)
    if code != 0:
        raise EngineError(f"tcp bench workers failed (exit {code}):\n{err}")
    report = BenchReport(spec)
    for line in out.splitlines():
        if not line or line.startswith("op,") or line.startswith("#"):
            continue
        cells = line.split(",")
        repeat, worker = int(cells[8]), int(cells[9])
        report.timings.append((repeat, worker, float(cells[10]), int(cells[11])))
    if len(report.timings) != spec.repeats * spec.world_size:
        raise EngineError(
            f"expected {spec.repeats * spec.world_size} report rows, "
            f"parsed {len(report.timings)}"
        )
    return report
