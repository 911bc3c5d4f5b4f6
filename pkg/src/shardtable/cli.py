"""Command-line front end: data generation, benchmarking, verification.

Subcommands:

  gen      write synthetic per-rank CSV inputs
  bench    time a (possibly distributed) operator; report CSV on stdout,
           human summary on stderr
  verify   run the distributed operator and compare against the local
           operator on the concatenated inputs; exit 0 iff they match
  worker   run one rank of a tcp bench/verify; transport configuration
           comes from SHARD_RANK / SHARD_WORLD_SIZE / SHARD_PEERS
"""

from __future__ import annotations

import argparse
import sys

from .bench import (
    OPS,
    LAYOUTS,
    BenchReport,
    BenchSpec,
    bench_worker_body,
    gen,
    run_bench_in_process,
    run_bench_tcp,
    run_verify_in_process,
    spawn_tcp_workers,
    verify_worker_body,
)
from .errors import EngineError
from .ops import JoinAlgorithm, JoinType
from .transport import init_tcp_from_env


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--op", choices=OPS, default="join")
    p.add_argument("--rows", type=int, required=True, help="total rows per relation")
    p.add_argument("--world-size", type=int, default=1)
    p.add_argument("--join-type", default="inner")
    p.add_argument("--algorithm", choices=["hash", "sort"], default="hash")
    p.add_argument("--key-domain", type=int, default=None, help="default: rows/4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument(
        "--predicate",
        nargs=3,
        metavar=("COL", "CMP", "LITERAL"),
        help="row filter for --op select, e.g. --predicate 1 '>' 0.5",
    )
    p.add_argument("--cols", help="comma-separated column indices for --op project")
    p.add_argument("--prefix", required=True, help="input files are <prefix>_1_<rank>.csv (+ _2_)")


def _spec_from_args(args) -> BenchSpec:
    return BenchSpec(
        op=args.op,
        rows_per_relation=args.rows,
        world_size=args.world_size,
        join_type=JoinType.parse(args.join_type),
        algorithm=JoinAlgorithm.parse(args.algorithm),
        key_domain=args.key_domain if args.key_domain else max(1, args.rows // 4),
        seed=args.seed,
        repeats=args.repeats,
        predicate=(
            (int(args.predicate[0]), args.predicate[1], args.predicate[2])
            if args.predicate
            else None
        ),
        project_cols=tuple(int(c) for c in args.cols.split(",")) if args.cols else (0,),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shardtable", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate synthetic per-rank CSV files")
    p_gen.add_argument("--rows", type=int, required=True, help="total rows across all parts")
    p_gen.add_argument("--layout", choices=sorted(LAYOUTS), default="4col")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--prefix", required=True, help="files are written as <prefix>_<rank>.csv")
    p_gen.add_argument("--parts", type=int, default=1)
    p_gen.add_argument("--key-domain", type=int, default=None)
    p_gen.add_argument("--delimiter", default=",")

    p_bench = sub.add_parser("bench", help="time an operator; CSV report on stdout")
    _add_spec_flags(p_bench)
    p_bench.add_argument("--transport", choices=["inprocess", "tcp"], default="inprocess")

    p_verify = sub.add_parser("verify", help="check distributed output against the local oracle")
    _add_spec_flags(p_verify)
    p_verify.add_argument("--transport", choices=["inprocess", "tcp"], default="inprocess")
    p_verify.add_argument(
        "--inject-fault",
        type=int,
        default=None,
        metavar="RANK",
        help="testing aid: corrupt RANK's output so verification must fail",
    )

    p_worker = sub.add_parser("worker", help="run one tcp rank (reads SHARD_* env)")
    _add_spec_flags(p_worker)
    p_worker.add_argument("--mode", choices=["bench", "verify"], required=True)
    p_worker.add_argument("--inject-fault", type=int, default=None)
    return parser


def _cmd_gen(args) -> int:
    paths = gen(
        rows=args.rows,
        layout=args.layout,
        seed=args.seed,
        out_prefix=args.prefix,
        parts=args.parts,
        key_domain=args.key_domain,
        delimiter=args.delimiter,
    )
    for p in paths:
        print(p)
    return 0


def _cmd_bench(args) -> int:
    spec = _spec_from_args(args)
    if args.transport == "tcp":
        report = run_bench_tcp(spec, args.prefix)
    else:
        report = run_bench_in_process(spec, args.prefix)
    print("\n".join(report.csv_lines()))
    print("\n".join(report.summary_lines()), file=sys.stderr)
    return 0


def _cmd_verify(args) -> int:
    spec = _spec_from_args(args)
    if args.transport == "tcp":
        code, out, err = spawn_tcp_workers(spec, args.prefix, "verify", args.inject_fault)
        sys.stdout.write(out)
        sys.stderr.write(err)
        return code
    result = run_verify_in_process(spec, args.prefix, args.inject_fault)
    print("\n".join(result.lines()))
    return 0 if result.ok else 1


def _cmd_worker(args) -> int:
    spec = _spec_from_args(args)
    ctx = init_tcp_from_env()
    try:
        if args.mode == "bench":
            records = bench_worker_body(ctx, spec, args.prefix)
            report = BenchReport(spec, list(records))
            print("\n".join(report.csv_lines(include_header=ctx.rank == 0)))
            return 0
        _, result = verify_worker_body(ctx, spec, args.prefix, args.inject_fault)
        if ctx.rank == 0:
            print("\n".join(result.lines()))
            return 0 if result.ok else 1
        return 0
    finally:
        ctx.finalize()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "bench": _cmd_bench,
        "verify": _cmd_verify,
        "worker": _cmd_worker,
    }
    try:
        return handlers[args.command](args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
