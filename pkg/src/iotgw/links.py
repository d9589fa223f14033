"""Bidirectional frame links: in-memory pairs for tests and TCP for real
deployments, one listening port per wireless protocol.

A link carries exactly one protocol's framing. send() encodes and writes;
recv() blocks until one complete frame decodes from the stream. Decode
errors never surface from recv(): the deframer resynchronizes and the
error is reported through the on_decode_error hook so the gateway can
count it.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from typing import Callable, Optional

from .framing import Deframer, FramingError, RawFrame, encode_frame
from .model import ProtocolId


class LinkError(Exception):
    pass


class KindMismatch(LinkError):
    def __init__(self, link_kind: ProtocolId, frame_kind: ProtocolId):
        super().__init__(f"{frame_kind.value} frame on a {link_kind.value} link")
        self.link_kind = link_kind
        self.frame_kind = frame_kind


class LinkClosed(LinkError):
    pass


class LinkTimeout(LinkError):
    pass


class LinkUnavailable(LinkError):
    pass


class FrameLink:
    """Common send/recv machinery over an ordered chunk source."""

    def __init__(self, kind: ProtocolId, label: str = "?"):
        self.kind = kind
        self.label = label
        self.on_decode_error: Optional[Callable[[ProtocolId, FramingError], None]] = None
        self._deframer = Deframer(kind, on_error=self._note_decode_error)
        self._ready: list[tuple[RawFrame, int]] = []

    def _note_decode_error(self, exc: FramingError):
        if self.on_decode_error is not None:
            self.on_decode_error(self.kind, exc)

    def send(self, frame: RawFrame):
        if frame.kind != self.kind:
            raise KindMismatch(self.kind, frame.kind)
        self._write(encode_frame(frame))

    def recv(self, timeout: Optional[float] = None) -> RawFrame:
        frame, _ = self.recv_sized(timeout)
        return frame

    def recv_sized(self, timeout: Optional[float] = None) -> tuple[RawFrame, int]:
        """recv() plus the on-the-wire byte count of the returned frame."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self._ready:
            remaining = None
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise LinkTimeout(f"no frame within {timeout}s")
            chunk = self._read(remaining)
            self._ready.extend(self._deframer.feed(chunk))
        return self._ready.pop(0)

    def _write(self, data: bytes):
        raise NotImplementedError

    def _read(self, timeout: Optional[float]) -> bytes:
        raise NotImplementedError

    def close(self):
        raise NotImplementedError


class MemoryFrameLink(FrameLink):
    def __init__(self, kind: ProtocolId, inbox: "queue.Queue[Optional[bytes]]",
                 outbox: "queue.Queue[Optional[bytes]]", label: str):
        super().__init__(kind, label)
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    def _write(self, data: bytes):
        if self._closed:
            raise LinkClosed(f"{self.label} is closed")
        self._outbox.put(data)

    def _read(self, timeout: Optional[float]) -> bytes:
        if self._closed:
            raise LinkClosed(f"{self.label} is closed")
        try:
            chunk = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise LinkTimeout("no data within the wait timeout") from None
        if chunk is None:
            self._closed = True
            self._inbox.put(None)  # keep the sentinel for other readers
            raise LinkClosed(f"{self.label}: peer closed")
        return chunk

    def close(self):
        self._closed = True
        self._outbox.put(None)
        self._inbox.put(None)


def memory_link_pair(kind: ProtocolId) -> tuple[MemoryFrameLink, MemoryFrameLink]:
    """Two connected in-process endpoints carrying the same protocol."""
    a_to_b: "queue.Queue[Optional[bytes]]" = queue.Queue()
    b_to_a: "queue.Queue[Optional[bytes]]" = queue.Queue()
    a = MemoryFrameLink(kind, inbox=b_to_a, outbox=a_to_b, label=f"{kind.value}-a")
    b = MemoryFrameLink(kind, inbox=a_to_b, outbox=b_to_a, label=f"{kind.value}-b")
    return a, b


class SocketFrameLink(FrameLink):
    def __init__(self, kind: ProtocolId, sock: socket.socket, label: str = "?"):
        super().__init__(kind, label)
        self._sock = sock
        self._write_lock = threading.Lock()

    def _write(self, data: bytes):
        try:
            with self._write_lock:
                self._sock.sendall(data)
        except OSError as exc:
            raise LinkClosed(f"{self.label}: {exc}") from None

    def _read(self, timeout: Optional[float]) -> bytes:
        self._sock.settimeout(timeout)
        try:
            chunk = self._sock.recv(4096)
        except socket.timeout:
            raise LinkTimeout("no data within the wait timeout") from None
        except OSError as exc:
            raise LinkClosed(f"{self.label}: {exc}") from None
        if not chunk:
            raise LinkClosed(f"{self.label}: peer closed")
        return chunk

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def connect_frame_link(kind: ProtocolId, host: str, port: int,
                       attempts: int = 20,
                       delay: float = 0.25) -> SocketFrameLink:
    """Dial a transport listener, retrying while the gateway comes up."""
    last: Optional[Exception] = None
    for attempt in range(attempts):
        try:
            sock = socket.create_connection((host, port), timeout=5.0)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return SocketFrameLink(kind, sock, label=f"{kind.value}->{host}:{port}")
        except OSError as exc:
            last = exc
            if attempt < attempts - 1:
                time.sleep(delay)
    raise LinkUnavailable(
        f"{kind.value} listener {host}:{port} unreachable after "
        f"{attempts} attempts: {last}")


class TransportListener:
    """One listening port for one protocol; accepts many node endpoints.

    Every decoded frame is handed to on_frame(frame, wire_bytes) from the
    connection's reader thread; decode errors go to on_decode_error.
    """

    def __init__(self, kind: ProtocolId, host: str, port: int,
                 on_frame: Callable[[RawFrame, int], None],
                 on_decode_error: Optional[
                     Callable[[ProtocolId, FramingError], None]] = None):
        self.kind = kind
        self._host = host
        self._port = port
        self._on_frame = on_frame
        self._on_decode_error = on_decode_error
        self._listener: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._links: list[SocketFrameLink] = []
        self._stop = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("listener not started")
        return self._listener.getsockname()[:2]

    def start(self):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self._host, self._port))
        self._listener.listen(16)
        self._spawn(self._accept_loop, f"{self.kind.value}-accept")

    def stop(self):
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        for link in list(self._links):
            link.close()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def _spawn(self, target, name):
        thread = threading.Thread(target=target, name=name, daemon=True)
        thread.start()
        self._threads.append(thread)

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            link = SocketFrameLink(self.kind, conn,
                                   label=f"{self.kind.value}<-{addr[0]}:{addr[1]}")
            link.on_decode_error = self._on_decode_error
            self._links.append(link)
            self._spawn(lambda: self._serve(link), f"{self.kind.value}-conn")

    def _serve(self, link: SocketFrameLink):
        while not self._stop.is_set():
            try:
                frame, wire_bytes = link.recv_sized(timeout=0.5)
            except LinkTimeout:
                continue
            except LinkClosed:
                break
            self._on_frame(frame, wire_bytes)
        if link in self._links:
            self._links.remove(link)
