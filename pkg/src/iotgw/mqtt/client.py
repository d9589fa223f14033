"""MQTT client: sans-IO session core plus a TCP driver.

The core never touches sockets or wall time; bytes go out through an
injected send callback, bytes come in through feed(), and retries fire in
tick() against an injected clock. Both the simulated nodes (over in-memory
pipes) and the live gateway (over TCP) drive the same state machine.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque
from typing import Callable, Optional

from .packets import (
    Connack, Connect, Disconnect, MqttError, NeedMoreData, Pingreq, Pingresp,
    Puback, Publish, Suback, Subscribe, decode_packet, encode_packet,
)
from .topics import validate_filter

DEFAULT_RETRY_INTERVAL = 2.0
DEFAULT_RETRY_BUDGET = 5


class NotConnected(MqttError):
    pass


class Timeout(MqttError):
    pass


class ConnectionRefused(MqttError):
    def __init__(self, return_code: int):
        super().__init__(f"broker refused connection, return code {return_code}")
        self.return_code = return_code


class DeliveryToken:
    """Resolves when the broker acknowledges the operation.

    QoS-0 publishes resolve immediately; QoS-1 publishes on PUBACK;
    subscribes on SUBACK (granted codes in .granted); connects on CONNACK.
    """

    def __init__(self):
        self._event = threading.Event()
        self.error: Optional[Exception] = None
        self.granted: Optional[tuple[int, ...]] = None

    def _resolve(self, granted: Optional[tuple[int, ...]] = None):
        self.granted = granted
        self._event.set()

    def _fail(self, error: Exception):
        self.error = error
        self._event.set()

    @property
    def completed(self) -> bool:
        return self._event.is_set() and self.error is None

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self._event.wait(timeout)

    def result(self, timeout: Optional[float] = None) -> Optional[tuple[int, ...]]:
        if not self._event.wait(timeout):
            raise Timeout("no acknowledgement within the wait timeout")
        if self.error is not None:
            raise self.error
        return self.granted


class _Pending:
    def __init__(self, packet, token: DeliveryToken, deadline: float):
        self.packet = packet
        self.token = token
        self.deadline = deadline
        self.attempts = 0


class MqttClient:
    """One clean-session client. Methods are safe to call from any thread."""

    def __init__(self, client_id: str, send: Callable[[bytes], None],
                 clock: Callable[[], float] = time.monotonic,
                 keep_alive: int = 60,
                 retry_interval: float = DEFAULT_RETRY_INTERVAL,
                 retry_budget: int = DEFAULT_RETRY_BUDGET):
        self.client_id = client_id
        self._send_bytes = send
        self._clock = clock
        self.keep_alive = keep_alive
        self.retry_interval = retry_interval
        self.retry_budget = retry_budget
        self._lock = threading.RLock()
        self._state = "fresh"
        self._buffer = bytearray()
        self._next_pid = 1
        self._connect_token: Optional[DeliveryToken] = None
        self._pending: dict[int, _Pending] = {}
        self._inbox: deque[Publish] = deque()
        self._seen_dup_ids: deque[int] = deque(maxlen=2048)
        self._last_send = 0.0

    @property
    def connected(self) -> bool:
        return self._state == "connected"

    def connect(self) -> DeliveryToken:
        with self._lock:
            if self._state not in ("fresh", "closed"):
                raise MqttError(f"connect in state {self._state}")
            self._state = "connecting"
            self._connect_token = DeliveryToken()
            self._transmit(Connect(client_id=self.client_id,
                                   keep_alive=self.keep_alive))
            return self._connect_token

    def publish(self, topic: str, payload: bytes, qos: int = 0,
                retain: bool = False) -> DeliveryToken:
        with self._lock:
            self._require_connected()
            token = DeliveryToken()
            if qos == 0:
                self._transmit(Publish(topic=topic, payload=payload, qos=0,
                                       retain=retain))
                token._resolve()
                return token
            pid = self._allocate_pid()
            packet = Publish(topic=topic, payload=payload, qos=1,
                             packet_id=pid, retain=retain)
            self._pending[pid] = _Pending(
                packet, token, self._clock() + self.retry_interval)
            self._transmit(packet)
            return token

    def subscribe(self, topic_filter: str, qos: int = 1) -> DeliveryToken:
        validate_filter(topic_filter)
        with self._lock:
            self._require_connected()
            token = DeliveryToken()
            pid = self._allocate_pid()
            packet = Subscribe(packet_id=pid, topics=((topic_filter, qos),))
            self._pending[pid] = _Pending(
                packet, token, self._clock() + self.retry_interval)
            self._transmit(packet)
            return token

    def poll(self) -> list[Publish]:
        """Drain received messages in arrival order."""
        with self._lock:
            drained = list(self._inbox)
            self._inbox.clear()
            return drained

    def ping(self):
        with self._lock:
            self._require_connected()
            self._transmit(Pingreq())

    def disconnect(self):
        with self._lock:
            if self._state == "connected":
                try:
                    self._transmit(Disconnect())
                except MqttError:
                    pass
            self._shutdown(NotConnected("client disconnected"))

    def connection_lost(self, reason: str = "connection lost"):
        """Driver hook: the underlying byte stream is gone."""
        with self._lock:
            self._shutdown(NotConnected(reason))

    def feed(self, data: bytes):
        with self._lock:
            if self._state == "closed":
                return
            self._buffer.extend(data)
            while self._state != "closed":
                try:
                    packet, consumed = decode_packet(bytes(self._buffer))
                except NeedMoreData:
                    return
                except MqttError as exc:
                    self._shutdown(exc)
                    return
                del self._buffer[:consumed]
                self._handle(packet)

    def tick(self):
        """Retry unacknowledged sends; fail their tokens past the budget."""
        with self._lock:
            if self._state != "connected":
                return
            now = self._clock()
            for pid in sorted(self._pending):
                entry = self._pending[pid]
                if entry.deadline > now:
                    continue
                if entry.attempts >= self.retry_budget:
                    del self._pending[pid]
                    entry.token._fail(Timeout(
                        f"no acknowledgement after {entry.attempts} retries"))
                    continue
                entry.attempts += 1
                entry.deadline = now + self.retry_interval
                packet = entry.packet
                if isinstance(packet, Publish):
                    packet = Publish(topic=packet.topic, payload=packet.payload,
                                     qos=1, packet_id=packet.packet_id,
                                     retain=packet.retain, dup=True)
                self._transmit(packet)
            if self.keep_alive and now - self._last_send >= self.keep_alive:
                self._transmit(Pingreq())

    # -- internals ---------------------------------------------------------

    def _require_connected(self):
        if self._state != "connected":
            raise NotConnected(f"client is {self._state}")

    def _allocate_pid(self) -> int:
        for _ in range(0xFFFF):
            pid = self._next_pid
            self._next_pid = pid % 0xFFFF + 1
            if pid not in self._pending:
                return pid
        raise MqttError("no free packet ids")

    def _handle(self, packet):
        if isinstance(packet, Connack):
            token = self._connect_token
            if packet.return_code == 0:
                self._state = "connected"
                if token is not None:
                    token._resolve()
            else:
                error = ConnectionRefused(packet.return_code)
                if token is not None:
                    token._fail(error)
                self._shutdown(error)
        elif isinstance(packet, Publish):
            if packet.qos == 1:
                self._transmit(Puback(packet_id=packet.packet_id))
                if packet.dup:
                    if packet.packet_id in self._seen_dup_ids:
                        return
                self._seen_dup_ids.append(packet.packet_id)
            self._inbox.append(packet)
        elif isinstance(packet, Puback):
            entry = self._pending.pop(packet.packet_id, None)
            if entry is not None:
                entry.token._resolve()
        elif isinstance(packet, Suback):
            entry = self._pending.pop(packet.packet_id, None)
            if entry is not None:
                entry.token._resolve(granted=packet.granted)
        elif isinstance(packet, Pingresp):
            pass
        else:
            self._shutdown(MqttError(f"unexpected {type(packet).__name__}"))

    def _transmit(self, packet):
        self._send_bytes(encode_packet(packet))
        self._last_send = self._clock()

    def _shutdown(self, error: Exception):
        if self._state == "closed":
            return
        self._state = "closed"
        if self._connect_token is not None and not self._connect_token._event.is_set():
            self._connect_token._fail(error)
        for entry in self._pending.values():
            entry.token._fail(error)
        self._pending.clear()


class SocketMqttClient:
    """MqttClient over TCP with a background reader/ticker thread."""

    def __init__(self, host: str, port: int, client_id: str,
                 keep_alive: int = 60,
                 retry_interval: float = DEFAULT_RETRY_INTERVAL,
                 retry_budget: int = DEFAULT_RETRY_BUDGET,
                 connect_timeout: float = 5.0):
        self._sock = socket.create_connection((host, port),
                                              timeout=connect_timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._write_lock = threading.Lock()
        self._stop = threading.Event()
        self.core = MqttClient(client_id, send=self._send,
                               keep_alive=keep_alive,
                               retry_interval=retry_interval,
                               retry_budget=retry_budget)
        token = self.core.connect()
        self._reader = threading.Thread(target=self._read_loop,
                                        name=f"mqtt-client-{client_id}",
                                        daemon=True)
        self._reader.start()
        token.result(timeout=connect_timeout)

    def _send(self, data: bytes):
        with self._write_lock:
            self._sock.sendall(data)

    def _read_loop(self):
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                data = self._sock.recv(4096)
            except socket.timeout:
                self.core.tick()
                continue
            except OSError:
                break
            if not data:
                break
            self.core.feed(data)
        self.core.connection_lost()

    def publish(self, topic: str, payload: bytes, qos: int = 0,
                retain: bool = False) -> DeliveryToken:
        return self.core.publish(topic, payload, qos=qos, retain=retain)

    def subscribe(self, topic_filter: str, qos: int = 1) -> DeliveryToken:
        return self.core.subscribe(topic_filter, qos=qos)

    def poll(self) -> list[Publish]:
        return self.core.poll()

    @property
    def connected(self) -> bool:
        return self.core.connected

    def close(self):
        try:
            self.core.disconnect()
        except MqttError:
            pass
        self._stop.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self._reader.join(timeout=2.0)
