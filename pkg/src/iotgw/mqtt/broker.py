"""Embedded MQTT broker.

BrokerCore is sans-IO: sessions are attached with a send callback and fed
raw bytes, time is an injected clock, and QoS-1 redelivery happens in
tick(). That keeps the broker byte-deterministic under the virtual clock.
BrokerServer is the socket front end used in real-clock mode, and doubles
as the stand-alone cloud-sink stub.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .packets import (
    Connack, Connect, Disconnect, MqttError, NeedMoreData, Pingreq, Pingresp,
    Puback, Publish, Suback, Subscribe, decode_packet, encode_packet,
)
from .topics import is_valid_filter, topic_matches

DEFAULT_RETRY_INTERVAL = 2.0
DEFAULT_RETRY_BUDGET = 5

SUBSCRIBE_FAILURE = 0x80


@dataclass
class _Inflight:
    topic: str
    payload: bytes
    qos: int
    deadline: float
    attempts: int = 0


@dataclass(frozen=True)
class _Retained:
    payload: bytes
    qos: int


class BrokerSession:
    """One attached client connection, identified after its CONNECT."""

    def __init__(self, core: "BrokerCore", send: Callable[[bytes], None],
                 close: Optional[Callable[[], None]], label: str):
        self._core = core
        self._send = send
        self._close = close
        self.label = label
        self.client_id: Optional[str] = None
        self.closed = False
        self.subscriptions: dict[str, int] = {}
        self.inflight: dict[int, _Inflight] = {}
        self._buffer = bytearray()
        self._next_pid = 1

    def feed(self, data: bytes):
        self._core._feed(self, data)

    def allocate_pid(self) -> int:
        for _ in range(0xFFFF):
            pid = self._next_pid
            self._next_pid = pid % 0xFFFF + 1
            if pid not in self.inflight:
                return pid
        raise MqttError("no free packet ids")


class BrokerCore:
    """Subscription routing, retained messages, and QoS-1 retry state.

    All mutation happens under one lock so observable state changes are
    totally ordered regardless of how many transports feed the core.
    """

    def __init__(self, clock: Callable[[], float] = time.monotonic,
                 retry_interval: float = DEFAULT_RETRY_INTERVAL,
                 retry_budget: int = DEFAULT_RETRY_BUDGET,
                 on_event: Optional[Callable[[str, dict], None]] = None):
        self._clock = clock
        self.retry_interval = retry_interval
        self.retry_budget = retry_budget
        self._on_event = on_event
        self._lock = threading.RLock()
        self._sessions: list[BrokerSession] = []
        self._retained: dict[str, _Retained] = {}

    def _event(self, kind: str, **detail):
        if self._on_event is not None:
            self._on_event(kind, detail)

    def attach(self, send: Callable[[bytes], None],
               close: Optional[Callable[[], None]] = None,
               label: str = "?") -> BrokerSession:
        session = BrokerSession(self, send, close, label)
        with self._lock:
            self._sessions.append(session)
        return session

    def detach(self, session: BrokerSession, reason: str = "closed"):
        with self._lock:
            self._drop(session, reason, graceful=True)

    @property
    def session_count(self) -> int:
        with self._lock:
            return len(self._sessions)

    def retained_message(self, topic: str) -> Optional[bytes]:
        with self._lock:
            entry = self._retained.get(topic)
            return None if entry is None else entry.payload

    def inject_publish(self, topic: str, payload: bytes, qos: int = 0,
                       retain: bool = False):
        """Publish on behalf of the broker's host process, no session needed."""
        with self._lock:
            if retain:
                self._store_retained(topic, payload, qos)
            self._route(topic, payload, qos)

    def tick(self):
        """Redeliver overdue QoS-1 messages; drop them past the retry budget."""
        now = self._clock()
        with self._lock:
            for session in list(self._sessions):
                for pid in sorted(session.inflight):
                    entry = session.inflight[pid]
                    if entry.deadline > now:
                        continue
                    if entry.attempts >= self.retry_budget:
                        del session.inflight[pid]
                        self._event("qos1-drop", client=session.client_id,
                                    topic=entry.topic, packet_id=pid)
                        continue
                    entry.attempts += 1
                    entry.deadline = now + self.retry_interval
                    self._transmit(session, Publish(
                        topic=entry.topic, payload=entry.payload, qos=1,
                        packet_id=pid, dup=True))

    # -- internals ---------------------------------------------------------

    def _feed(self, session: BrokerSession, data: bytes):
        with self._lock:
            if session.closed:
                return
            session._buffer.extend(data)
            while not session.closed:
                try:
                    packet, consumed = decode_packet(bytes(session._buffer))
                except NeedMoreData:
                    return
                except MqttError as exc:
                    self._drop(session, f"protocol error: {exc}")
                    return
                del session._buffer[:consumed]
                try:
                    self._handle(session, packet)
                except MqttError as exc:
                    self._drop(session, f"protocol error: {exc}")
                    return

    def _handle(self, session: BrokerSession, packet):
        if session.client_id is None and not isinstance(packet, Connect):
            raise MqttError(f"{type(packet).__name__} before connect")

        if isinstance(packet, Connect):
            if session.client_id is not None:
                raise MqttError("second connect on one session")
            for other in list(self._sessions):
                if other is not session and other.client_id == packet.client_id:
                    self._drop(other, "session taken over")
            session.client_id = packet.client_id
            self._transmit(session, Connack(return_code=0))
        elif isinstance(packet, Publish):
            if packet.qos == 1:
                self._transmit(session, Puback(packet_id=packet.packet_id))
            if packet.retain:
                self._store_retained(packet.topic, packet.payload, packet.qos)
            self._route(packet.topic, packet.payload, packet.qos,
                        skip=None)
        elif isinstance(packet, Puback):
            session.inflight.pop(packet.packet_id, None)
        elif isinstance(packet, Subscribe):
            granted = []
            fresh = []
            for topic_filter, qos in packet.topics:
                if not is_valid_filter(topic_filter):
                    granted.append(SUBSCRIBE_FAILURE)
                    continue
                session.subscriptions[topic_filter] = qos
                granted.append(qos)
                fresh.append((topic_filter, qos))
            self._transmit(session, Suback(packet_id=packet.packet_id,
                                           granted=tuple(granted)))
            self._deliver_retained(session, fresh)
        elif isinstance(packet, Pingreq):
            self._transmit(session, Pingresp())
        elif isinstance(packet, Disconnect):
            self._drop(session, "disconnect", graceful=True)
        else:
            raise MqttError(f"unexpected {type(packet).__name__}")

    def _store_retained(self, topic: str, payload: bytes, qos: int):
        # A retained publish with an empty payload clears the slot.
        if payload:
            self._retained[topic] = _Retained(payload=payload, qos=qos)
        else:
            self._retained.pop(topic, None)

    def _deliver_retained(self, session: BrokerSession,
                          fresh: list[tuple[str, int]]):
        for topic_filter, granted_qos in fresh:
            for topic in sorted(self._retained):
                if not topic_matches(topic_filter, topic):
                    continue
                entry = self._retained[topic]
                self._send_to(session, topic, entry.payload,
                              min(entry.qos, granted_qos), retain=True)

    def _route(self, topic: str, payload: bytes, qos: int,
               skip: Optional[BrokerSession] = None):
        for session in list(self._sessions):
            if session is skip or session.client_id is None or session.closed:
                continue
            matching = [sub_qos for f, sub_qos in session.subscriptions.items()
                        if topic_matches(f, topic)]
            if not matching:
                continue
            # One delivery per session even when several filters match.
            self._send_to(session, topic, payload, min(qos, max(matching)),
                          retain=False)

    def _send_to(self, session: BrokerSession, topic: str, payload: bytes,
                 qos: int, retain: bool):
        if qos == 1:
            pid = session.allocate_pid()
            session.inflight[pid] = _Inflight(
                topic=topic, payload=payload, qos=1,
                deadline=self._clock() + self.retry_interval)
            packet = Publish(topic=topic, payload=payload, qos=1,
                             packet_id=pid, retain=retain)
        else:
            packet = Publish(topic=topic, payload=payload, qos=0,
                             retain=retain)
        self._transmit(session, packet)

    def _transmit(self, session: BrokerSession, packet):
        try:
            session._send(encode_packet(packet))
        except Exception as exc:
            self._drop(session, f"send failed: {exc}")

    def _drop(self, session: BrokerSession, reason: str, graceful: bool = False):
        if session.closed:
            return
        session.closed = True
        if session in self._sessions:
            self._sessions.remove(session)
        session.subscriptions.clear()
        session.inflight.clear()
        if not graceful:
            self._event("session-error", client=session.client_id,
                        label=session.label, reason=reason)
        if session._close is not None:
            try:
                session._close()
            except OSError:
                pass


class BrokerServer:
    """TCP front end for a BrokerCore; also the stand-alone cloud sink."""

    def __init__(self, host: str = "127.0.0.1", port: int = 1883,
                 core: Optional[BrokerCore] = None):
        self.core = core if core is not None else BrokerCore()
        self._host = host
        self._port = port
        self._listener: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("server not started")
        return self._listener.getsockname()[:2]

    def start(self):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self._host, self._port))
        self._listener.listen(32)
        self._spawn(self._accept_loop, "mqtt-accept")
        self._spawn(self._tick_loop, "mqtt-tick")

    def stop(self):
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
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
            write_lock = threading.Lock()

            def send(data: bytes, conn=conn, lock=write_lock):
                with lock:
                    conn.sendall(data)

            session = self.core.attach(send=send, close=conn.close,
                                       label=f"{addr[0]}:{addr[1]}")
            self._spawn(lambda: self._serve(conn, session),
                        f"mqtt-conn-{addr[1]}")

    def _serve(self, conn: socket.socket, session: BrokerSession):
        try:
            while not self._stop.is_set():
                try:
                    data = conn.recv(4096)
                except OSError:
                    break
                if not data:
                    break
                session.feed(data)
        finally:
            self.core.detach(session, "connection closed")

    def _tick_loop(self):
        period = max(0.05, self.core.retry_interval / 4)
        while not self._stop.wait(period):
            self.core.tick()
