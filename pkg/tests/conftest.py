import random
import socket
import threading

import pytest

from shardtable import init_in_process, init_tcp


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def free_ports(n: int) -> list[int]:
    socks, ports = [], []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


def run_tcp_cluster(world_size, body, timeout=30.0):
    """Drive one rank per thread over real loopback sockets."""
    peers = [f"127.0.0.1:{p}" for p in free_ports(world_size)]
    results = [None] * world_size
    failures = []

    def runner(rank):
        try:
            ctx = init_tcp(rank, world_size, peers, timeout=timeout)
            try:
                results[rank] = body(ctx)
            finally:
                ctx.finalize()
        except BaseException as exc:  # noqa: BLE001 - surfaced to the test below
            failures.append((rank, exc))

    threads = [threading.Thread(target=runner, args=(r,)) for r in range(world_size)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0][1]
    return results


def run_in_process_cluster(world_size, body, timeout=30.0):
    return init_in_process(world_size, body, timeout=timeout)


@pytest.fixture(params=["inprocess", "tcp"])
def cluster(request):
    """Runs a worker body on every rank of either transport."""
    if request.param == "inprocess":
        return run_in_process_cluster
    return run_tcp_cluster
