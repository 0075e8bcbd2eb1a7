"""Point-to-point sessions between the master and each worker.

A session is one ordered, reliable channel between two endpoints. Both the
in-process and the TCP session move encoded frames, so counters and byte
totals are identical across transports.
"""

from __future__ import annotations

import os
import queue
import socket
import threading
from dataclasses import dataclass

from ..errors import ScopeError
from .messages import Hello, Message
from .wire import FrameError, decode, encode, frame_length

DEFAULT_BIND = "127.0.0.1:7077"


class TransportError(ScopeError):
    pass


class PeerDisconnected(TransportError):
    pass


class ProtocolError(ScopeError):
    pass


class ProtocolOrderError(ProtocolError):
    pass


@dataclass(frozen=True)
class CommStats:
    messages_sent: int = 0
    messages_received: int = 0
    payload_bytes: int = 0
    sync_rounds: int = 0

    @property
    def messages(self):
        return self.messages_sent + self.messages_received


class CommCounter:
    """Thread-safe payload counters; Hello/Shutdown frames are not counted."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sent = self._recv = self._bytes = self._sync = 0

    def on_send(self, msg, nbytes):
        if msg.counted:
            with self._lock:
                self._sent += 1
                self._bytes += nbytes

    def on_recv(self, msg, nbytes):
        if msg.counted:
            with self._lock:
                self._recv += 1
                self._bytes += nbytes

    def barrier(self):
        with self._lock:
            self._sync += 1

    def snapshot(self) -> CommStats:
        with self._lock:
            return CommStats(self._sent, self._recv, self._bytes, self._sync)


class Session:
    def __init__(self, counter: CommCounter | None = None):
        self.counter = counter if counter is not None else CommCounter()

    def send(self, msg: Message) -> None:
        frame = encode(msg)
        self._send_frame(frame)
        self.counter.on_send(msg, len(frame))

    def recv(self) -> Message:
        frame = self._recv_frame()
        try:
            msg = decode(frame)
        except FrameError as exc:
            raise TransportError(f"undecodable frame ({exc.code}): {exc}") from exc
        self.counter.on_recv(msg, len(frame))
        return msg

    def comm_stats(self) -> CommStats:
        return self.counter.snapshot()


_CLOSED = object()


class InProcessSession(Session):
    def __init__(self, inbox, outbox, counter=None, timeout=None):
        super().__init__(counter)
        self._inbox, self._outbox = inbox, outbox
        self.timeout = timeout

    def _send_frame(self, frame):
        self._outbox.put(frame)

    def _recv_frame(self):
        try:
            frame = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise PeerDisconnected("timed out waiting for peer") from None
        if frame is _CLOSED:
            raise PeerDisconnected("peer closed the session")
        return frame

    def close(self):
        self._outbox.put(_CLOSED)


def inproc_pair(master_counter=None, worker_counter=None, timeout=None):
    """Return (master_side, worker_side) sessions joined by two queues."""
    a, b = queue.Queue(), queue.Queue()
    return (InProcessSession(a, b, master_counter, timeout),
            InProcessSession(b, a, worker_counter, timeout))


def parse_addr(addr: str | None):
    addr = addr or os.environ.get("SCOPE_BIND_ADDR") or DEFAULT_BIND
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


class TcpSession(Session):
    def __init__(self, sock: socket.socket, counter=None):
        super().__init__(counter)
        self.sock = sock
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _send_frame(self, frame):
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise PeerDisconnected(f"send failed: {exc}") from exc

    def _read_exact(self, n):
        chunks, got = [], 0
        while got < n:
            try:
                chunk = self.sock.recv(min(n - got, 1 << 20))
            except OSError as exc:
                raise PeerDisconnected(f"recv failed: {exc}") from exc
            if not chunk:
                raise PeerDisconnected("peer closed the connection")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def _recv_frame(self):
        prefix = self._read_exact(4)
        try:
            n = frame_length(prefix)
        except FrameError as exc:
            raise TransportError(f"undecodable frame ({exc.code}): {exc}") from exc
        return prefix + self._read_exact(n)

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class TcpListener:
    """Master-side acceptor: one session per worker, keyed by the hello's worker_id."""

    def __init__(self, addr=None):
        host, port = parse_addr(addr)
        self.sock = socket.create_server((host, port), reuse_port=False)

    @property
    def address(self):
        host, port = self.sock.getsockname()[:2]
        return f"{host}:{port}"

    def accept_workers(self, p, counter: CommCounter, timeout=None):
        self.sock.settimeout(timeout)
        sessions = {}
        while len(sessions) < p:
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                raise PeerDisconnected(f"only {len(sessions)} of {p} workers connected") from None
            conn.settimeout(None)
            sess = TcpSession(conn, counter)
            hello = sess.recv()
            if not isinstance(hello, Hello):
                raise ProtocolError(f"expected hello, got {type(hello).__name__}")
            if not 1 <= hello.worker_id <= p or hello.worker_id in sessions:
                raise ProtocolError(f"unexpected worker id {hello.worker_id}")
            sessions[hello.worker_id] = sess
        return sessions

    def close(self):
        self.sock.close()


def tcp_connect(addr, worker_id, counter=None, retries=50, delay=0.1):
    host, port = parse_addr(addr)
    last = None
    for _ in range(retries):
        try:
            sock = socket.create_connection((host, port))
            break
        except OSError as exc:
            last = exc
            threading.Event().wait(delay)
    else:
        raise PeerDisconnected(f"cannot reach master at {host}:{port}: {last}")
    sess = TcpSession(sock, counter)
    sess.send(Hello(worker_id))
    return sess
