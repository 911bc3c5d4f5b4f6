import random
import threading
import time

import pytest

from shardtable import (
    ConfigError,
    ConnectError,
    DeadlockTimeout,
    TransportError,
    WorkerPanicError,
    init_in_process,
    init_tcp,
    init_tcp_from_env,
)

from conftest import free_ports, run_tcp_cluster


class TestWorldBasics:
    def test_single_worker(self, cluster):
        assert cluster(1, lambda ctx: ctx.rank) == [0]

    def test_four_workers(self, cluster):
        assert cluster(4, lambda ctx: ctx.rank) == [0, 1, 2, 3]

    def test_world_size_visible(self, cluster):
        assert cluster(3, lambda ctx: ctx.world_size) == [3, 3, 3]


def ring_body(ctx):
    dest = (ctx.rank + 1) % ctx.world_size
    source = (ctx.rank - 1) % ctx.world_size
    ctx.send(dest, 0, bytes([ctx.rank]))
    return ctx.receive(source, 0)[0]


class TestExchange:
    def test_ring(self, cluster):
        got = cluster(4, ring_body)
        assert got == [(r - 1) % 4 for r in range(4)]

    def test_self_send(self, cluster):
        def body(ctx):
            ctx.send(ctx.rank, 5, b"self")
            return ctx.receive(ctx.rank, 5)

        assert cluster(2, body) == [b"self", b"self"]

    def test_fifo_per_source_and_tag(self, cluster):
        n_msgs = 40

        def body(ctx):
            if ctx.rank == 0:
                rnd = random.Random(1)
                payloads = [bytes([i % 256, rnd.randrange(256)]) for i in range(n_msgs)]
                for i, p in enumerate(payloads):
                    ctx.send(1, i % 3, p)
                return [p for i, p in enumerate(payloads)]
            received = {tag: [] for tag in range(3)}
            for i in range(n_msgs):
                tag = i % 3
                received[tag].append(ctx.receive(0, tag))
            return received

        sent, got = cluster(2, body)
        for tag in range(3):
            expected = [p for i, p in enumerate(sent) if i % 3 == tag]
            assert got[tag] == expected

    def test_all_to_all_conservation(self, cluster):
        world = 4

        def body(ctx):
            rnd = random.Random(100 + ctx.rank)
            outgoing = {
                d: bytes(rnd.randrange(256) for _ in range(rnd.randrange(0, 64)))
                for d in range(world)
            }
            for step in range(1, world):
                ctx.send((ctx.rank + step) % world, 7, outgoing[(ctx.rank + step) % world])
            incoming = {}
            for step in range(1, world):
                src = (ctx.rank - step) % world
                incoming[src] = ctx.receive(src, 7)
            return outgoing, incoming

        results = cluster(world, body)
        for src in range(world):
            for dst in range(world):
                if src == dst:
                    continue
                assert results[src][0][dst] == results[dst][1][src]

    def test_large_payload(self, cluster):
        blob = bytes(range(256)) * 4096  # 1 MiB

        def body(ctx):
            if ctx.rank == 0:
                ctx.send(1, 0, blob)
                return None
            return ctx.receive(0, 0)

        assert cluster(2, body)[1] == blob


class TestBarrier:
    def test_barrier_orders_phases(self, cluster):
        stamps = []
        lock = threading.Lock()

        def body(ctx):
            with lock:
                stamps.append(("enter", ctx.rank, time.monotonic()))
            if ctx.rank == 0:
                time.sleep(0.15)
            ctx.barrier()
            with lock:
                stamps.append(("exit", ctx.rank, time.monotonic()))

        cluster(3, body)
        last_enter = max(t for kind, _, t in stamps if kind == "enter")
        first_exit = min(t for kind, _, t in stamps if kind == "exit")
        assert first_exit >= last_enter


class TestLifecycle:
    def test_finalize_idempotent(self, cluster):
        def body(ctx):
            ctx.finalize()
            ctx.finalize()
            return "ok"

        assert cluster(2, body) == ["ok", "ok"]

    def test_operations_after_finalize_fail(self, cluster):
        def body(ctx):
            ctx.finalize()
            try:
                ctx.send((ctx.rank + 1) % 2, 0, b"late")
            except TransportError:
                return "refused"
            return "accepted"

        assert cluster(2, body) == ["refused", "refused"]

    def test_receive_timeout(self, cluster):
        def body(ctx):
            out = "idle"
            if ctx.rank == 0:
                try:
                    ctx.receive(1, 9)
                    out = "received"
                except DeadlockTimeout:
                    out = "timeout"
            else:
                # stay alive (connection open) past rank 0's timeout window
                time.sleep(0.5)
            ctx.barrier()
            return out

        got = cluster(2, body, timeout=0.3)
        assert got[0] == "timeout"

    def test_bad_rank_rejected(self, cluster):
        def body(ctx):
            try:
                ctx.send(99, 0, b"")
            except TransportError:
                return "refused"
            return "accepted"

        assert cluster(1, body) == ["refused"]


class TestInProcessFailures:
    def test_worker_failure_cancels_blocked_peers(self):
        def body(ctx):
            if ctx.rank == 0:
                raise RuntimeError("boom")
            ctx.receive(0, 0)  # would deadlock without cancellation

        t0 = time.monotonic()
        with pytest.raises(WorkerPanicError) as err:
            init_in_process(3, body, timeout=30.0)
        assert err.value.rank == 0
        assert "boom" in str(err.value)
        assert time.monotonic() - t0 < 10.0

    def test_world_size_validated(self):
        with pytest.raises(ConfigError):
            init_in_process(0, lambda ctx: None)


class TestTcpSpecifics:
    def test_world_size_one_has_no_connections(self):
        ctx = init_tcp(0, 1, [f"127.0.0.1:{free_ports(1)[0]}"])
        ctx.send(0, 0, b"loop")
        assert ctx.receive(0, 0) == b"loop"
        ctx.finalize()

    def test_peer_count_mismatch(self):
        with pytest.raises(ConfigError):
            init_tcp(0, 2, ["127.0.0.1:1"])

    def test_bad_peer_spec(self):
        with pytest.raises(ConfigError):
            init_tcp(0, 1, ["localhost"])

    def test_connect_error_names_peer(self):
        ports = free_ports(2)
        peers = [f"127.0.0.1:{ports[0]}", f"127.0.0.1:{ports[1]}"]
        with pytest.raises(ConnectError, match="rank 1"):
            # rank 0 dials rank 1, which is never started
            init_tcp(0, 2, peers, connect_window=0.5)

    def test_env_initialization(self):
        ports = free_ports(2)
        peers = ",".join(f"127.0.0.1:{p}" for p in ports)
        results = [None, None]

        def runner(rank):
            env = {
                "SHARD_RANK": str(rank),
                "SHARD_WORLD_SIZE": "2",
                "SHARD_PEERS": peers,
            }
            ctx = init_tcp_from_env(env)
            try:
                results[rank] = ring_body(ctx)
            finally:
                ctx.finalize()

        threads = [threading.Thread(target=runner, args=(r,)) for r in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [1, 0]

    def test_env_missing_is_config_error(self):
        with pytest.raises(ConfigError):
            init_tcp_from_env({})


def test_transports_behave_identically():
    """The same scenario yields the same outcome on both transports."""

    def scenario(ctx):
        out = []
        dest = (ctx.rank + 1) % ctx.world_size
        for i in range(5):
            ctx.send(dest, 1, f"{ctx.rank}:{i}".encode())
        src = (ctx.rank - 1) % ctx.world_size
        for i in range(5):
            out.append(ctx.receive(src, 1).decode())
        ctx.barrier()
        return out

    in_proc = init_in_process(3, scenario)
    over_tcp = run_tcp_cluster(3, scenario)
    assert in_proc == over_tcp
