"""Lossless in-memory byte network for virtual-clock runs.

Every send becomes a (receiver, chunk) entry in one FIFO queue; pump()
delivers entries until the queue drains, including anything the receivers
send back while handling them. Delivery order is the order of sends, which
makes whole scenario runs reproducible byte for byte.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from ..framing import Deframer, FramingError, RawFrame, encode_frame
from ..links import KindMismatch, LinkClosed
from ..model import ProtocolId
from ..mqtt.broker import BrokerCore
from ..mqtt.client import MqttClient


class VirtualNetwork:
    def __init__(self):
        self._queue: deque[tuple[Callable[[bytes], None], bytes]] = deque()
        self.delivered_chunks = 0

    def post(self, handler: Callable[[bytes], None], data: bytes):
        self._queue.append((handler, data))

    def pump(self):
        while self._queue:
            handler, data = self._queue.popleft()
            self.delivered_chunks += 1
            handler(data)

    @property
    def idle(self) -> bool:
        return not self._queue


class PipeEnd:
    """One direction-agnostic endpoint; assign on_receive before pumping."""

    def __init__(self, net: VirtualNetwork, label: str):
        self._net = net
        self.label = label
        self.peer: Optional["PipeEnd"] = None
        self.on_receive: Optional[Callable[[bytes], None]] = None
        self.closed = False

    def send(self, data: bytes):
        if self.closed or self.peer is None or self.peer.closed:
            raise LinkClosed(f"{self.label}: pipe closed")
        self._net.post(self.peer._deliver, data)

    def _deliver(self, data: bytes):
        if not self.closed and self.on_receive is not None:
            self.on_receive(data)

    def close(self):
        self.closed = True


def pipe(net: VirtualNetwork, label: str = "pipe") -> tuple[PipeEnd, PipeEnd]:
    a = PipeEnd(net, f"{label}-a")
    b = PipeEnd(net, f"{label}-b")
    a.peer = b
    b.peer = a
    return a, b


def attach_mqtt_client(net: VirtualNetwork, broker: BrokerCore,
                       client_id: str, clock: Callable[[], float],
                       **client_options) -> MqttClient:
    """Wire a fresh MqttClient to a broker core over an in-memory pipe.

    The CONNECT is queued immediately; pump the network to complete the
    handshake.
    """
    client_end, broker_end = pipe(net, label=f"mqtt-{client_id}")
    session = broker.attach(send=broker_end.send, close=broker_end.close,
                            label=client_id)
    broker_end.on_receive = session.feed
    client = MqttClient(client_id, send=client_end.send, clock=clock,
                        **client_options)
    client_end.on_receive = client.feed
    client.connect()
    return client


class VirtualFrameLink:
    """Node-side sender for one protocol over a pipe end."""

    def __init__(self, kind: ProtocolId, end: PipeEnd):
        self.kind = kind
        self._end = end

    def send(self, frame: RawFrame):
        if frame.kind != self.kind:
            raise KindMismatch(self.kind, frame.kind)
        self._end.send(encode_frame(frame))

    def close(self):
        self._end.close()


class VirtualTransportPort:
    """Gateway-side acceptor for one protocol in a virtual run.

    connect() gives the caller a node-side link; decoded frames land in
    on_frame(frame, wire_bytes) during pumping.
    """

    def __init__(self, kind: ProtocolId, net: VirtualNetwork,
                 on_frame: Callable[[RawFrame, int], None],
                 on_decode_error: Optional[
                     Callable[[ProtocolId, FramingError], None]] = None):
        self.kind = kind
        self._net = net
        self._on_frame = on_frame
        self._on_decode_error = on_decode_error

    def connect(self, label: str = "node") -> VirtualFrameLink:
        node_end, gw_end = pipe(self._net, label=f"{self.kind.value}-{label}")
        deframer = Deframer(self.kind, on_error=self._note_error)

        def _receive(chunk: bytes):
            for frame, wire_bytes in deframer.feed(chunk):
                self._on_frame(frame, wire_bytes)

        gw_end.on_receive = _receive
        return VirtualFrameLink(self.kind, node_end)

    def _note_error(self, exc: FramingError):
        if self._on_decode_error is not None:
            self._on_decode_error(self.kind, exc)
