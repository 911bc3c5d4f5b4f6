#!/usr/bin/env python3
"""Engine server: exposes the table engine to one foreign-language client.

The client connects to a loopback TCP port and exchanges frames in the
engine's documented format (u32 tag | u32 source rank | u64 payload length,
little-endian). The tag is the request id and is echoed on the response;
source is 0 for the client, 1 for the server. A payload is a u32 JSON
length, the JSON command/response, then an optional binary section holding
a serialized table in the engine's wire layout.

Tables live in this process and are referred to by integer handles, so
operator calls move no row data across the boundary; only to_columns /
from_columns transfer buffers. Distributed commands require a context first
(init_context reads SHARD_RANK / SHARD_WORLD_SIZE / SHARD_PEERS).
"""

from __future__ import annotations

import argparse
import json
import socket
import struct
import sys

import shardtable as st
from shardtable.bench import predicate_from_triple

FRAME = struct.Struct("<IIQ")
SOURCE_SERVER = 1


class Session:
    def __init__(self):
        self.tables: dict[int, st.Table] = {}
        self.next_handle = 1
        self.ctx = None

    def put(self, table: st.Table) -> int:
        handle = self.next_handle
        self.next_handle += 1
        self.tables[handle] = table
        return handle

    def get(self, handle) -> st.Table:
        table = self.tables.get(handle)
        if table is None:
            raise st.EngineError(f"unknown table handle {handle}")
        return table

    def context(self) -> st.Context:
        if self.ctx is None:
            raise st.ConfigError("no context: call init_context first")
        return self.ctx


def _parse_dtypes(names) -> list[st.DataType]:
    out = []
    for n in names:
        try:
            out.append(st.DataType.parse(n))
        except ValueError as exc:
            raise st.UnsupportedDtypeError(str(exc)) from exc
    return out


def _schema(cmd) -> st.Schema:
    dtypes = _parse_dtypes(cmd["dtypes"])
    return st.Schema.of(*zip(cmd["names"], dtypes))


def _info(sess: Session, table: st.Table) -> dict:
    return {
        "handle": sess.put(table),
        "names": table.field_names,
        "dtypes": [str(d) for d in table.dtypes],
        "rows": table.num_rows,
    }


def _join_config(cmd) -> st.JoinConfig:
    return st.JoinConfig.from_dict(
        {
            "join_type": cmd["join_type"],
            "algorithm": cmd["algorithm"],
            "left_col": cmd["left_col"],
            "right_col": cmd["right_col"],
        }
    )


def handle_command(sess: Session, cmd: dict, binary: bytes) -> tuple[dict, bytes]:
    op = cmd["op"]
    if op == "ping":
        return {}, b""
    if op == "read_csv":
        dtypes = _parse_dtypes(cmd["dtypes"]) if cmd.get("dtypes") else None
        table = st.read_csv(
            cmd["path"],
            delimiter=cmd.get("delimiter", ","),
            has_header=cmd.get("has_header", True),
            dtypes=dtypes,
        )
        return _info(sess, table), b""
    if op == "write_csv":
        st.write_csv(
            sess.get(cmd["table"]),
            cmd["path"],
            delimiter=cmd.get("delimiter", ","),
            write_header=cmd.get("write_header", True),
        )
        return {}, b""
    if op == "from_columns":
        table = st.deserialize_table(binary, _schema(cmd))
        return _info(sess, table), b""
    if op == "to_columns":
        table = sess.get(cmd["table"])
        meta = {
            "names": table.field_names,
            "dtypes": [str(d) for d in table.dtypes],
            "rows": table.num_rows,
        }
        return meta, st.serialize_table(table)
    if op == "join":
        out = st.join(sess.get(cmd["left"]), sess.get(cmd["right"]), _join_config(cmd))
        return _info(sess, out), b""
    if op == "union":
        return _info(sess, st.union(sess.get(cmd["a"]), sess.get(cmd["b"]))), b""
    if op == "intersect":
        return _info(sess, st.intersect(sess.get(cmd["a"]), sess.get(cmd["b"]))), b""
    if op == "difference":
        return _info(sess, st.difference(sess.get(cmd["a"]), sess.get(cmd["b"]))), b""
    if op == "select":
        table = sess.get(cmd["table"])
        pred = predicate_from_triple(table, int(cmd["col"]), cmd["cmp"], str(cmd["literal"]))
        return _info(sess, st.select(table, pred)), b""
    if op == "project":
        return _info(sess, st.project(sess.get(cmd["table"]), cmd["cols"])), b""
    if op == "canonical_sort":
        return _info(sess, st.canonical_sort(sess.get(cmd["table"]))), b""
    if op == "free":
        sess.tables.pop(cmd["table"], None)
        return {}, b""
    if op == "init_context":
        if sess.ctx is not None:
            raise st.ConfigError("context already initialized")
        sess.ctx = st.init_tcp_from_env()
        return {"rank": sess.ctx.rank, "world_size": sess.ctx.world_size}, b""
    if op == "finalize_context":
        if sess.ctx is not None:
            sess.ctx.finalize()
            sess.ctx = None
        return {}, b""
    if op == "barrier":
        sess.context().barrier()
        return {}, b""
    if op == "distributed_join":
        out = st.distributed_join(
            sess.context(), sess.get(cmd["left"]), sess.get(cmd["right"]), _join_config(cmd)
        )
        return _info(sess, out), b""
    if op == "distributed_union":
        out = st.distributed_union(sess.context(), sess.get(cmd["a"]), sess.get(cmd["b"]))
        return _info(sess, out), b""
    if op == "distributed_intersect":
        out = st.distributed_intersect(sess.context(), sess.get(cmd["a"]), sess.get(cmd["b"]))
        return _info(sess, out), b""
    if op == "distributed_difference":
        out = st.distributed_difference(sess.context(), sess.get(cmd["a"]), sess.get(cmd["b"]))
        return _info(sess, out), b""
    if op == "distributed_select":
        table = sess.get(cmd["table"])
        pred = predicate_from_triple(table, int(cmd["col"]), cmd["cmp"], str(cmd["literal"]))
        return _info(sess, st.distributed_select(sess.context(), table, pred)), b""
    if op == "distributed_project":
        out = st.distributed_project(sess.context(), sess.get(cmd["table"]), cmd["cols"])
        return _info(sess, out), b""
    raise st.ConfigError(f"unknown op {op!r}")


def _recv_exact(conn: socket.socket, n: int) -> bytes | None:
    chunks, got = [], 0
    while got < n:
        chunk = conn.recv(min(65536, n - got))
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def _send_frame(conn: socket.socket, tag: int, payload: bytes) -> None:
    conn.sendall(FRAME.pack(tag, SOURCE_SERVER, len(payload)) + payload)


def serve(conn: socket.socket) -> None:
    sess = Session()
    while True:
        header = _recv_exact(conn, FRAME.size)
        if header is None:
            return
        tag, _source, length = FRAME.unpack(header)
        payload = _recv_exact(conn, length)
        if payload is None:
            return
        (json_len,) = struct.unpack_from("<I", payload)
        cmd = json.loads(payload[4 : 4 + json_len])
        binary = payload[4 + json_len :]
        if cmd.get("op") == "shutdown":
            _send_frame(conn, tag, struct.pack("<I", 2) + b"{}")
            return
        try:
            result, out_binary = handle_command(sess, cmd, binary)
            result["ok"] = True
        except Exception as exc:  # noqa: BLE001 - every engine error crosses as a payload
            code = getattr(exc, "code", None) or type(exc).__name__.lower()
            result = {"ok": False, "error": {"code": code, "message": str(exc)}}
            out_binary = b""
        body = json.dumps(result).encode("utf-8")
        _send_frame(conn, tag, struct.pack("<I", len(body)) + body + out_binary)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    args = parser.parse_args()
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((args.host, args.port))
    listener.listen(1)
    print(f"PORT {listener.getsockname()[1]}", flush=True)
    conn, _ = listener.accept()
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    try:
        serve(conn)
    finally:
        conn.close()
        listener.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
