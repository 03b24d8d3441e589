"""Minimal topic-routed publish/subscribe broker over a local TCP socket.

Wire protocol (docs/formats.md): every frame is a u32 big-endian payload
length followed by the payload. Payload layout:

    u8 kind | str topic | bytes data

kinds: 0x01 SUBSCRIBE (data empty), 0x02 PUBLISH, 0x03 DELIVER
(broker to subscriber), 0x04 PUBACK (topic empty, data = one status byte),
0x05 HELLO (sent by the broker on accept; clients treat a missing HELLO as
an unreachable broker), 0x06 SUBACK (subscription registered; subscribe
returns only after it). Topic routing is exact string match. The broker
acknowledges every publish so publishers get a boolean delivery-to-broker
status, and a SUBACK guarantees later publishes reach the subscriber.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading

from .codec import Reader, Writer
from .errors import BrokerUnavailable

log = logging.getLogger(__name__)

SUBSCRIBE = 0x01
PUBLISH = 0x02
DELIVER = 0x03
PUBACK = 0x04
HELLO = 0x05
SUBACK = 0x06

DEFAULT_TOPIC = "pharmachain/telemetry"


def _encode_frame(kind: int, topic: str, data: bytes) -> bytes:
    payload = Writer().u8(kind).str_(topic).bytes_(data).getvalue()
    return struct.pack(">I", len(payload)) + payload


def _read_frame(sock: socket.socket) -> tuple[int, str, bytes] | None:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    payload = _read_exact(sock, length)
    if payload is None:
        return None
    r = Reader(payload)
    kind, topic, data = r.u8(), r.str_(), r.bytes_()
    r.expect_eof()
    return kind, topic, data


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError:
            return None
        if not chunk:
            return None
        buf += chunk
    return buf


class Broker:
    """Accepts local connections and fans published frames out by topic."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._server = socket.create_server((host, port))
        self.host, self.port = self._server.getsockname()
        self._subscribers: dict[str, set[socket.socket]] = {}
        self._send_locks: dict[socket.socket, threading.Lock] = {}
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._accept_thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    def start(self) -> "Broker":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        # Some network stacks leave a thread blocked in accept() when the
        # listening socket closes; poke it awake so the loop can exit.
        try:
            with socket.create_connection((self.host, self.port), timeout=0.5):
                pass
        except OSError:
            pass
        try:
            self._server.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2)
        with self._lock:
            conns = set(self._send_locks)
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            if self._stop.is_set():
                try:
                    conn.close()
                except OSError:
                    pass
                return
            with self._lock:
                self._send_locks[conn] = threading.Lock()
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        try:
            if not self._send(conn, _encode_frame(HELLO, "", b"")):
                return
            while not self._stop.is_set():
                frame = _read_frame(conn)
                if frame is None:
                    return
                kind, topic, data = frame
                if kind == SUBSCRIBE:
                    with self._lock:
                        self._subscribers.setdefault(topic, set()).add(conn)
                    self._send(conn, _encode_frame(SUBACK, topic, b"\x01"))
                elif kind == PUBLISH:
                    self._fan_out(topic, data)
                    self._send(conn, _encode_frame(PUBACK, "", b"\x01"))
        finally:
            self._drop(conn)

    def _fan_out(self, topic: str, data: bytes) -> None:
        with self._lock:
            targets = list(self._subscribers.get(topic, ()))
        frame = _encode_frame(DELIVER, topic, data)
        for target in targets:
            if not self._send(target, frame):
                self._drop(target)

    def _send(self, conn: socket.socket, frame: bytes) -> bool:
        with self._lock:
            send_lock = self._send_locks.get(conn)
        if send_lock is None:
            return False
        try:
            with send_lock:
                conn.sendall(frame)
            return True
        except OSError:
            return False

    def _drop(self, conn: socket.socket) -> None:
        with self._lock:
            self._send_locks.pop(conn, None)
            for subs in self._subscribers.values():
                subs.discard(conn)
        try:
            conn.close()
        except OSError:
            pass


class BrokerClient:
    """One connection to the broker; publish and/or subscribe."""

    def __init__(self, host: str, port: int, connect_timeout: float = 2.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
            hello = _read_frame(self._sock)
            if hello is None or hello[0] != HELLO:
                self._sock.close()
                raise OSError("no broker greeting")
            self._sock.settimeout(None)
        except OSError as exc:
            raise BrokerUnavailable(f"cannot reach broker at {host}:{port}: {exc}") from exc
        self._send_lock = threading.Lock()
        self._acks: queue.Queue[bool] = queue.Queue()
        self._subacks: queue.Queue[bool] = queue.Queue()
        self._handlers: dict[str, list] = {}
        self._closed = threading.Event()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        while not self._closed.is_set():
            frame = _read_frame(self._sock)
            if frame is None:
                self._closed.set()
                self._acks.put(False)
                self._subacks.put(False)
                return
            kind, topic, data = frame
            if kind == PUBACK:
                self._acks.put(data == b"\x01")
            elif kind == SUBACK:
                self._subacks.put(data == b"\x01")
            elif kind == DELIVER:
                for handler in self._handlers.get(topic, ()):
                    try:
                        handler(data)
                    except Exception:
                        log.exception("subscriber handler failed for topic %s", topic)

    def subscribe(self, topic: str, handler, timeout: float = 2.0) -> bool:
        """Register a handler; returns once the broker confirmed the
        subscription, so later publishes are guaranteed to be routed."""
        self._handlers.setdefault(topic, []).append(handler)
        with self._send_lock:
            self._sock.sendall(_encode_frame(SUBSCRIBE, topic, b""))
        try:
            return self._subacks.get(timeout=timeout)
        except queue.Empty:
            return False

    def publish(self, topic: str, data: bytes, timeout: float = 2.0) -> bool:
        """Send one message; True once the broker acknowledged it."""
        if self._closed.is_set():
            raise BrokerUnavailable("connection closed")
        try:
            with self._send_lock:
                self._sock.sendall(_encode_frame(PUBLISH, topic, data))
        except OSError as exc:
            self._closed.set()
            raise BrokerUnavailable(str(exc)) from exc
        try:
            return self._acks.get(timeout=timeout)
        except queue.Empty:
            return False

    def close(self) -> None:
        self._closed.set()
        try:
            self._sock.close()
        except OSError:
            pass
