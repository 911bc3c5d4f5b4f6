#!/usr/bin/env python3
"""Parity-test helper: run one operator natively on serialized table files.

Inputs and output are table buffers in the engine wire layout, each with a
JSON sidecar ("<file>.schema.json": {"names": [...], "dtypes": [...]}). The
result is canonically sorted before writing so callers can compare
order-free.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import shardtable as st
from shardtable.bench import predicate_from_triple


def load(path: str) -> st.Table:
    meta = json.loads(Path(path + ".schema.json").read_text())
    schema = st.Schema.of(
        *zip(meta["names"], [st.DataType.parse(d) for d in meta["dtypes"]])
    )
    return st.deserialize_table(Path(path).read_bytes(), schema)


def store(table: st.Table, path: str) -> None:
    Path(path).write_bytes(st.serialize_table(table))
    Path(path + ".schema.json").write_text(
        json.dumps({"names": table.field_names, "dtypes": [str(d) for d in table.dtypes]})
    )


def main() -> int:
    p = argparse.ArgumentParser()
    p.add_argument("--op", required=True)
    p.add_argument("--left", required=True)
    p.add_argument("--right")
    p.add_argument("--out", required=True)
    p.add_argument("--join-type", default="inner")
    p.add_argument("--algorithm", default="hash")
    p.add_argument("--left-col", default="0")
    p.add_argument("--right-col", default="0")
    p.add_argument("--predicate", nargs=3, metavar=("COL", "CMP", "LITERAL"))
    p.add_argument("--cols")
    args = p.parse_args()

    left = load(args.left)
    right = load(args.right) if args.right else None
    if args.op == "join":
        cfg = st.JoinConfig.from_dict(
            {
                "join_type": args.join_type,
                "algorithm": args.algorithm,
                "left_col": [int(c) for c in args.left_col.split(",")],
                "right_col": [int(c) for c in args.right_col.split(",")],
            }
        )
        out = st.join(left, right, cfg)
    elif args.op == "union":
        out = st.union(left, right)
    elif args.op == "intersect":
        out = st.intersect(left, right)
    elif args.op == "difference":
        out = st.difference(left, right)
    elif args.op == "select":
        col, cmp, lit = args.predicate
        out = st.select(left, predicate_from_triple(left, int(col), cmp, lit))
    elif args.op == "project":
        out = st.project(left, [int(c) for c in args.cols.split(",")])
    else:
        raise SystemExit(f"unknown op {args.op}")
    store(st.canonical_sort(out), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
