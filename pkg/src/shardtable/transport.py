"""Worker identity and message exchange.

A :class:`Context` binds a worker's (rank, world_size) to a transport and
offers asynchronous sends, blocking in-order receives, a barrier, and
finalize. Message delivery is FIFO per (source, dest, tag), intact and
exactly once. Two interchangeable transports are bundled:

  in-process  world_size worker threads inside one process sharing
              lock-protected queues; deterministic, used by tests and the
              default benchmark mode.
  tcp         a full mesh of sockets (lower rank dials higher rank, both
              directions multiplexed on one connection) for multi-process
              runs, framed as  u32 tag | u32 source rank | u64 payload
              length | payload  (all little-endian).

Worker compute stays single-threaded; the TCP transport progresses I/O on
internal reader/writer threads but presents strictly serialized semantics
to its owning worker.
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import struct
import threading
import time
from collections import deque
from typing import Callable, Sequence

from .errors import (
    ConfigError,
    ConnectError,
    DeadlockTimeout,
    TransportError,
    WorkerPanicError,
)

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0

# User-visible tags live below this; collective operations allocate above it.
TAG_USER_LIMIT = 1 << 30
_TAG_COLLECTIVE_BASE = 1 << 30
_TAG_BARRIER = (1 << 32) - 1
_TAG_HELLO = (1 << 32) - 2

_FRAME_HEADER = struct.Struct("<IIQ")


class _RunCancelled(WorkerPanicError):
    """Raised inside surviving workers when a sibling already failed."""


class _Mailbox:
    """Inbound message store: FIFO queue per (source, tag)."""

    def __init__(self):
        self._cond = threading.Condition()
        self._queues: dict[tuple[int, int], deque] = {}

    def push(self, source: int, tag: int, payload: bytes) -> None:
        with self._cond:
            self._queues.setdefault((source, tag), deque()).append(payload)
            self._cond.notify_all()

    def interrupt(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def pop(
        self,
        source: int,
        tag: int,
        timeout: float,
        cancelled: Callable[[], Exception | None],
    ) -> bytes:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                q = self._queues.get((source, tag))
                if q:
                    return q.popleft()
                exc = cancelled()
                if exc is not None:
                    raise exc
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise DeadlockTimeout(
                        f"receive from rank {source} tag {tag} idle for more than {timeout}s"
                    )
                self._cond.wait(min(remaining, 0.1))

    def pending(self) -> int:
        with self._cond:
            return sum(len(q) for q in self._queues.values())


class Context:
    """One worker's handle on a collective run."""

    def __init__(self, rank: int, world_size: int, transport, timeout: float = DEFAULT_TIMEOUT):
        self.rank = rank
        self.world_size = world_size
        self._transport = transport
        self._timeout = timeout
        self._finalized = False
        self._collective_seq = 0

    def _check_open(self) -> None:
        if self._finalized:
            raise TransportError("context is finalized")

    def _check_rank(self, r: int) -> None:
        if not 0 <= r < self.world_size:
            raise TransportError(f"rank {r} out of range for world size {self.world_size}")

    def next_collective_tag(self) -> int:
        """Fresh tag for one collective operation; identical on every worker
        as long as workers issue collectives in the same order."""
        tag = _TAG_COLLECTIVE_BASE + self._collective_seq
        self._collective_seq += 1
        return tag

    def send(self, dest: int, tag: int, payload: bytes) -> None:
        """Asynchronous send: returns once the payload is accepted for
        delivery. Self-sends loop back locally."""
        self._check_open()
        self._check_rank(dest)
        if not 0 <= tag < TAG_USER_LIMIT:
            raise TransportError(f"user tags must be in [0, {TAG_USER_LIMIT})")
        self._transport.send(dest, tag, payload)

    def _send_raw(self, dest: int, tag: int, payload: bytes) -> None:
        self._check_open()
        self._transport.send(dest, tag, payload)

    def receive(self, source: int, tag: int) -> bytes:
        """Blocking receive of the next in-order message for (source, tag)."""
        self._check_open()
        self._check_rank(source)
        return self._transport.recv(source, tag, self._timeout)

    def _receive_raw(self, source: int, tag: int) -> bytes:
        self._check_open()
        return self._transport.recv(source, tag, self._timeout)

    def barrier(self) -> None:
        """No worker returns until all workers have entered."""
        self._check_open()
        if self.world_size == 1:
            return
        if self.rank == 0:
            for r in range(1, self.world_size):
                self._receive_raw(r, _TAG_BARRIER)
            for r in range(1, self.world_size):
                self._send_raw(r, _TAG_BARRIER, b"")
        else:
            self._send_raw(0, _TAG_BARRIER, b"")
            self._receive_raw(0, _TAG_BARRIER)

    def finalize(self) -> None:
        """Close the context. Calls after the first are logged no-ops."""
        if self._finalized:
            logger.debug("rank %d: finalize() called again; ignoring", self.rank)
            return
        self._finalized = True
        self._transport.close()


# --- in-process transport ----------------------------------------------------


class _InProcessCluster:
    def __init__(self, world_size: int):
        self.world_size = world_size
        self.mailboxes = [_Mailbox() for _ in range(world_size)]
        self._lock = threading.Lock()
        self.failure: tuple[int, BaseException] | None = None

    def fail(self, rank: int, exc: BaseException) -> None:
        with self._lock:
            if self.failure is None:
                self.failure = (rank, exc)
        for mb in self.mailboxes:
            mb.interrupt()


class InProcessTransport:
    def __init__(self, cluster: _InProcessCluster, rank: int):
        self._cluster = cluster
        self._rank = rank

    def send(self, dest: int, tag: int, payload: bytes) -> None:
        self._failed_check()
        self._cluster.mailboxes[dest].push(self._rank, tag, bytes(payload))

    def _failed_check(self) -> None:
        f = self._cluster.failure
        if f is not None and f[0] != self._rank:
            raise _RunCancelled(f[0], "peer worker failed; run cancelled")

    def recv(self, source: int, tag: int, timeout: float) -> bytes:
        def cancelled():
            f = self._cluster.failure
            if f is not None and f[0] != self._rank:
                return _RunCancelled(f[0], "peer worker failed; run cancelled")
            return None

        return self._cluster.mailboxes[self._rank].pop(source, tag, timeout, cancelled)

    def close(self) -> None:
        pending = self._cluster.mailboxes[self._rank].pending()
        if pending:
            logger.warning("rank %d finalized with %d undelivered messages", self._rank, pending)


def init_in_process(
    world_size: int, worker_body: Callable[[Context], object], timeout: float = DEFAULT_TIMEOUT
) -> list:
    """Run ``worker_body(ctx)`` on ``world_size`` in-process workers.

    Returns the per-rank results once every worker finished and finalized.
    If any worker raises, blocked siblings are cancelled and the first
    failure is re-raised as :class:`WorkerPanicError`.
    """
    if world_size < 1:
        raise ConfigError(f"world_size must be >= 1, got {world_size}")
    cluster = _InProcessCluster(world_size)
    results: list = [None] * world_size

    def runner(rank: int) -> None:
        ctx = Context(rank, world_size, InProcessTransport(cluster, rank), timeout)
        try:
            results[rank] = worker_body(ctx)
        except _RunCancelled:
            pass
        except BaseException as exc:  # noqa: BLE001 - any worker failure tears down the run
            cluster.fail(rank, exc)
        finally:
            ctx.finalize()

    threads = [
        threading.Thread(target=runner, args=(r,), name=f"worker-{r}") for r in range(world_size)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if cluster.failure is not None:
        rank, exc = cluster.failure
        raise WorkerPanicError(rank, f"{type(exc).__name__}: {exc}") from exc
    return results


# --- tcp transport -----------------------------------------------------------


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(65536, n - got))
        if not chunk:
            if got == 0:
                return None
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


_SENTINEL = object()


class _PeerLink:
    """One mesh connection: a writer thread draining a send queue and a
    reader thread dispatching inbound frames into the owner's mailbox."""

    def __init__(self, transport: "TcpTransport", peer: int, sock: socket.socket):
        self.peer = peer
        self.sock = sock
        self._transport = transport
        self._sendq: queue.Queue = queue.Queue()
        self.closed = False
        self.error: Exception | None = None
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._writer.start()
        self._reader.start()

    def enqueue(self, frame: bytes) -> None:
        if self.error is not None:
            raise TransportError(f"peer {self.peer} unreachable: {self.error}")
        if self.closed:
            raise TransportError(f"peer {self.peer} connection closed")
        self._sendq.put(frame)

    def _write_loop(self) -> None:
        while True:
            item = self._sendq.get()
            if item is _SENTINEL:
                try:
                    self.sock.shutdown(socket.SHUT_WR)
                except OSError:
                    pass
                return
            try:
                self.sock.sendall(item)
            except OSError as exc:
                self.error = exc
                self._transport.mailbox.interrupt()
                return

    def _read_loop(self) -> None:
        try:
            while True:
                header = _recv_exact(self.sock, _FRAME_HEADER.size)
                if header is None:
                    break
                tag, source, length = _FRAME_HEADER.unpack(header)
                payload = _recv_exact(self.sock, length)
                if payload is None:
                    raise TransportError("connection closed mid-frame")
                self._transport.mailbox.push(source, tag, payload)
        except (TransportError, OSError) as exc:
            self.error = exc
        finally:
            self.closed = True
            self._transport.mailbox.interrupt()

    def shutdown(self, join_timeout: float) -> None:
        self._sendq.put(_SENTINEL)
        self._writer.join(join_timeout)
        self._reader.join(join_timeout)
        try:
            self.sock.close()
        except OSError:
            pass


class TcpTransport:
    """Full-mesh TCP transport. The connection for ranks (i, j), i < j, is
    dialed by i; a hello frame identifies the dialer to the acceptor."""

    def __init__(
        self,
        rank: int,
        world_size: int,
        peers: Sequence[str],
        connect_window: float = 30.0,
    ):
        self.rank = rank
        self.world_size = world_size
        self.mailbox = _Mailbox()
        self._links: dict[int, _PeerLink] = {}
        self._closed = False

        host, port = _parse_hostport(peers[rank])
        listener = None
        if rank > 0:
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                listener.bind(("0.0.0.0", port))
                listener.listen(world_size)
            except OSError as exc:
                raise ConnectError(f"rank {rank} cannot listen on port {port}: {exc}") from exc
        try:
            self._establish_mesh(listener, peers, connect_window)
        finally:
            if listener is not None:
                listener.close()

    def _establish_mesh(self, listener, peers: Sequence[str], window: float) -> None:
        deadline = time.monotonic() + window
        accept_err: list[Exception] = []

        def accept_lower():
            # Expect one dial from every lower rank.
            try:
                for _ in range(self.rank):
                    listener.settimeout(max(0.1, deadline - time.monotonic()))
                    conn, _ = listener.accept()
                    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                    conn.settimeout(max(0.1, deadline - time.monotonic()))
                    header = _recv_exact(conn, _FRAME_HEADER.size)
                    if header is None:
                        raise TransportError("peer closed before hello")
                    tag, source, length = _FRAME_HEADER.unpack(header)
                    if tag != _TAG_HELLO or length != 0:
                        raise TransportError("expected hello frame")
                    conn.settimeout(None)
                    self._links[source] = _PeerLink(self, source, conn)
            except (OSError, TransportError) as exc:
                accept_err.append(exc)

        acceptor = None
        if self.rank > 0:
            acceptor = threading.Thread(target=accept_lower, daemon=True)
            acceptor.start()

        for peer in range(self.rank + 1, self.world_size):
            host, port = _parse_hostport(peers[peer])
            sock = self._dial(host, port, peer, deadline)
            sock.sendall(_FRAME_HEADER.pack(_TAG_HELLO, self.rank, 0))
            self._links[peer] = _PeerLink(self, peer, sock)

        if acceptor is not None:
            acceptor.join(max(0.1, deadline - time.monotonic()) + 1.0)
            if acceptor.is_alive():
                raise ConnectError(
                    f"rank {self.rank}: lower-rank peers did not connect within {window}s"
                )
            if accept_err:
                raise ConnectError(f"rank {self.rank} accept failed: {accept_err[0]}")

    @staticmethod
    def _dial(host: str, port: int, peer: int, deadline: float) -> socket.socket:
        # Retry with backoff: higher ranks may not be listening yet.
        while True:
            try:
                sock = socket.create_connection((host, port), timeout=2.0)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.settimeout(None)
                return sock
            except OSError as exc:
                if time.monotonic() >= deadline:
                    raise ConnectError(f"cannot reach rank {peer} at {host}:{port}: {exc}") from exc
                time.sleep(0.1)

    def send(self, dest: int, tag: int, payload: bytes) -> None:
        payload = bytes(payload)
        if dest == self.rank:
            self.mailbox.push(self.rank, tag, payload)
            return
        self._links[dest].enqueue(_FRAME_HEADER.pack(tag, self.rank, len(payload)) + payload)

    def recv(self, source: int, tag: int, timeout: float) -> bytes:
        link = self._links.get(source)

        def cancelled():
            if link is not None:
                if link.error is not None:
                    return TransportError(f"peer {source} failed: {link.error}")
                if link.closed:
                    return TransportError(f"peer {source} closed the connection")
            return None

        return self.mailbox.pop(source, tag, timeout, cancelled)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for link in self._links.values():
            link.shutdown(join_timeout=5.0)
        pending = self.mailbox.pending()
        if pending:
            logger.warning("rank %d finalized with %d undelivered messages", self.rank, pending)


def _parse_hostport(spec: str) -> tuple[str, int]:
    host, sep, port = spec.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"peer {spec!r} is not host:port")
    try:
        return host, int(port)
    except ValueError as exc:
        raise ConfigError(f"peer {spec!r} has a non-numeric port") from exc


def init_tcp(
    rank: int,
    world_size: int,
    peers: Sequence[str],
    timeout: float = DEFAULT_TIMEOUT,
    connect_window: float = 30.0,
) -> Context:
    """Establish the TCP mesh for this worker and return its context."""
    if world_size < 1:
        raise ConfigError(f"world_size must be >= 1, got {world_size}")
    if len(peers) != world_size:
        raise ConfigError(f"{len(peers)} peers for world size {world_size}")
    if not 0 <= rank < world_size:
        raise ConfigError(f"rank {rank} out of range for world size {world_size}")
    for p in peers:
        _parse_hostport(p)
    transport = TcpTransport(rank, world_size, peers, connect_window=connect_window)
    return Context(rank, world_size, transport, timeout)


ENV_RANK = "SHARD_RANK"
ENV_WORLD_SIZE = "SHARD_WORLD_SIZE"
ENV_PEERS = "SHARD_PEERS"


def init_tcp_from_env(environ=os.environ, timeout: float = DEFAULT_TIMEOUT) -> Context:
    """Build a TCP context from SHARD_RANK / SHARD_WORLD_SIZE / SHARD_PEERS."""
    try:
        rank = int(environ[ENV_RANK])
        world_size = int(environ[ENV_WORLD_SIZE])
        peers = [p for p in environ[ENV_PEERS].split(",") if p]
    except KeyError as exc:
        raise ConfigError(f"missing environment variable {exc}") from exc
    return init_tcp(rank, world_size, peers, timeout=timeout)
