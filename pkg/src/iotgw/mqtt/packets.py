"""MQTT 3.1.1 packet codec for the nine-variant subset this gateway uses.

Supported: Connect, Connack, Publish, Puback, Subscribe, Suback, Pingreq,
Pingresp, Disconnect. QoS is 0 or 1 only; there are no wills, no
credentials, and sessions are always clean. Encoding is bit-exact MQTT
3.1.1 so any compliant peer can interoperate within that subset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MAX_REMAINING_LENGTH = 268_435_455
MAX_STRING_BYTES = 65_535

CONNECT, CONNACK, PUBLISH, PUBACK = 1, 2, 3, 4
SUBSCRIBE, SUBACK, PINGREQ, PINGRESP, DISCONNECT = 8, 9, 12, 13, 14

_SUPPORTED_TYPES = {
    CONNECT, CONNACK, PUBLISH, PUBACK,
    SUBSCRIBE, SUBACK, PINGREQ, PINGRESP, DISCONNECT,
}

CONNECTION_ACCEPTED = 0
CONNECTION_REFUSED_IDENTIFIER = 2
SUBSCRIBE_FAILURE = 0x80


class MqttError(Exception):
    pass


class NeedMoreData(MqttError):
    """The stream does not yet hold a complete packet; nothing consumed."""


class UnsupportedPacketType(MqttError):
    pass


class ProtocolViolation(MqttError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class ValueTooLarge(MqttError):
    pass


class MalformedVarint(MqttError):
    pass


def encode_remaining_length(n: int) -> bytes:
    if n < 0 or n > MAX_REMAINING_LENGTH:
        raise ValueTooLarge(f"remaining length {n} outside [0, {MAX_REMAINING_LENGTH}]")
    out = bytearray()
    while True:
        digit = n % 128
        n //= 128
        if n:
            out.append(digit | 0x80)
        else:
            out.append(digit)
            return bytes(out)


def decode_remaining_length(stream: bytes) -> tuple[int, int]:
    """Return (value, bytes consumed). Raises NeedMoreData mid-varint."""
    value = 0
    for i in range(4):
        if i >= len(stream):
            raise NeedMoreData("varint continues past available bytes")
        byte = stream[i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise MalformedVarint("continuation bit set in the fourth varint byte")


def _encode_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > MAX_STRING_BYTES:
        raise ValueTooLarge(f"string of {len(raw)} bytes exceeds {MAX_STRING_BYTES}")
    return len(raw).to_bytes(2, "big") + raw


def _check_qos(qos: int):
    if qos == 2:
        raise UnsupportedPacketType("qos 2 is outside the supported subset")
    if qos not in (0, 1):
        raise ProtocolViolation(f"invalid qos {qos}")


def _check_packet_id(packet_id: int):
    if not 1 <= packet_id <= 0xFFFF:
        raise ProtocolViolation(f"packet id {packet_id} outside [1, 65535]")


def _check_topic(topic: str):
    if not topic:
        raise ProtocolViolation("empty topic")
    if "+" in topic or "#" in topic:
        raise ProtocolViolation(f"wildcard in publish topic {topic!r}")
    if "\x00" in topic:
        raise ProtocolViolation("NUL in topic")


@dataclass(frozen=True)
class Connect:
    client_id: str
    keep_alive: int = 60

    def __post_init__(self):
        if not self.client_id:
            raise ProtocolViolation("empty client id")
        if not 0 <= self.keep_alive <= 0xFFFF:
            raise ProtocolViolation(f"keep_alive {self.keep_alive} outside [0, 65535]")


@dataclass(frozen=True)
class Connack:
    return_code: int = CONNECTION_ACCEPTED

    def __post_init__(self):
        if not 0 <= self.return_code <= 5:
            raise ProtocolViolation(f"connack return code {self.return_code}")


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes
    qos: int = 0
    packet_id: int | None = None
    retain: bool = False
    dup: bool = False

    def __post_init__(self):
        _check_topic(self.topic)
        _check_qos(self.qos)
        if self.qos == 0:
            if self.packet_id is not None:
                raise ProtocolViolation("qos 0 publish must not carry a packet id")
            if self.dup:
                raise ProtocolViolation("qos 0 publish must not set dup")
        else:
            if self.packet_id is None:
                raise ProtocolViolation("qos 1 publish requires a packet id")
            _check_packet_id(self.packet_id)


@dataclass(frozen=True)
class Puback:
    packet_id: int

    def __post_init__(self):
        _check_packet_id(self.packet_id)


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    topics: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        _check_packet_id(self.packet_id)
        object.__setattr__(self, "topics", tuple(
            (str(f), int(q)) for f, q in self.topics))
        if not self.topics:
            raise ProtocolViolation("subscribe with no topic filters")
        for topic_filter, qos in self.topics:
            if not topic_filter:
                raise ProtocolViolation("empty topic filter")
            _check_qos(qos)


@dataclass(frozen=True)
class Suback:
    packet_id: int
    granted: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        _check_packet_id(self.packet_id)
        object.__setattr__(self, "granted", tuple(int(g) for g in self.granted))
        if not self.granted:
            raise ProtocolViolation("suback with no return codes")
        for code in self.granted:
            if code not in (0, 1, SUBSCRIBE_FAILURE):
                raise ProtocolViolation(f"suback return code {code:#x}")


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


MqttPacket = (Connect | Connack | Publish | Puback | Subscribe | Suback
              | Pingreq | Pingresp | Disconnect)


def _assemble(packet_type: int, flags: int, body: bytes) -> bytes:
    return (bytes([(packet_type << 4) | flags])
            + encode_remaining_length(len(body)) + body)


def encode_packet(p: MqttPacket) -> bytes:
    if isinstance(p, Connect):
        body = (_encode_string("MQTT") + bytes([4, 0x02])
                + p.keep_alive.to_bytes(2, "big")
                + _encode_string(p.client_id))
        return _assemble(CONNECT, 0, body)
    if isinstance(p, Connack):
        return _assemble(CONNACK, 0, bytes([0, p.return_code]))
    if isinstance(p, Publish):
        flags = (0x08 if p.dup else 0) | (p.qos << 1) | (0x01 if p.retain else 0)
        body = _encode_string(p.topic)
        if p.qos:
            body += p.packet_id.to_bytes(2, "big")
        body += p.payload
        return _assemble(PUBLISH, flags, body)
    if isinstance(p, Puback):
        return _assemble(PUBACK, 0, p.packet_id.to_bytes(2, "big"))
    if isinstance(p, Subscribe):
        body = bytearray(p.packet_id.to_bytes(2, "big"))
        for topic_filter, qos in p.topics:
            body += _encode_string(topic_filter)
            body.append(qos)
        return _assemble(SUBSCRIBE, 0x02, bytes(body))
    if isinstance(p, Suback):
        body = p.packet_id.to_bytes(2, "big") + bytes(p.granted)
        return _assemble(SUBACK, 0, body)
    if isinstance(p, Pingreq):
        return _assemble(PINGREQ, 0, b"")
    if isinstance(p, Pingresp):
        return _assemble(PINGRESP, 0, b"")
    if isinstance(p, Disconnect):
        return _assemble(DISCONNECT, 0, b"")
    raise UnsupportedPacketType(f"cannot encode {type(p).__name__}")


class _Body:
    """Cursor over a packet body; raises on truncation instead of IndexError."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ProtocolViolation("packet body shorter than its fields require")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def take_int(self, n: int) -> int:
        return int.from_bytes(self.take(n), "big")

    def take_string(self) -> str:
        length = self.take_int(2)
        raw = self.take(length)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolViolation("string field is not valid UTF-8") from None

    @property
    def rest(self) -> bytes:
        chunk = self.data[self.pos:]
        self.pos = len(self.data)
        return chunk

    def expect_end(self):
        if self.pos != len(self.data):
            raise ProtocolViolation(
                f"{len(self.data) - self.pos} trailing bytes in packet body")


def _require_flags(flags: int, expected: int, name: str):
    if flags != expected:
        raise ProtocolViolation(f"{name} fixed-header flags must be {expected:#x}")


def decode_packet(stream: bytes) -> tuple[MqttPacket, int]:
    """Decode one packet from the head of ``stream``.

    Returns (packet, bytes consumed). Raises NeedMoreData without
    consuming anything when the stream holds only part of a packet.
    """
    if not stream:
        raise NeedMoreData("empty stream")
    first = stream[0]
    packet_type = first >> 4
    flags = first & 0x0F
    length, header = decode_remaining_length(stream[1:])
    total = 1 + header + length
    if len(stream) < total:
        raise NeedMoreData(f"packet needs {total} bytes, have {len(stream)}")
    body = _Body(stream[1 + header:total])

    if packet_type not in _SUPPORTED_TYPES:
        raise UnsupportedPacketType(f"packet type {packet_type}")

    if packet_type == CONNECT:
        _require_flags(flags, 0, "connect")
        name = body.take_string()
        level = body.take_int(1)
        if name != "MQTT" or level != 4:
            raise ProtocolViolation(f"not an MQTT 3.1.1 connect: {name!r} level {level}")
        connect_flags = body.take_int(1)
        if connect_flags & ~0x02:
            raise ProtocolViolation(
                f"connect flags {connect_flags:#04x} outside the clean-session subset")
        keep_alive = body.take_int(2)
        client_id = body.take_string()
        body.expect_end()
        packet: MqttPacket = Connect(client_id=client_id, keep_alive=keep_alive)
    elif packet_type == CONNACK:
        _require_flags(flags, 0, "connack")
        body.take(1)  # session-present byte; always clean sessions here
        packet = Connack(return_code=body.take_int(1))
        body.expect_end()
    elif packet_type == PUBLISH:
        qos = (flags >> 1) & 0x03
        _check_qos(qos)
        dup = bool(flags & 0x08)
        retain = bool(flags & 0x01)
        if qos == 0 and dup:
            raise ProtocolViolation("qos 0 publish with dup set")
        topic = body.take_string()
        packet_id = body.take_int(2) if qos else None
        packet = Publish(topic=topic, payload=body.rest, qos=qos,
                         packet_id=packet_id, retain=retain, dup=dup)
    elif packet_type == PUBACK:
        _require_flags(flags, 0, "puback")
        packet = Puback(packet_id=body.take_int(2))
        body.expect_end()
    elif packet_type == SUBSCRIBE:
        _require_flags(flags, 0x02, "subscribe")
        packet_id = body.take_int(2)
        topics = []
        while body.pos < len(body.data):
            topics.append((body.take_string(), body.take_int(1)))
        packet = Subscribe(packet_id=packet_id, topics=tuple(topics))
    elif packet_type == SUBACK:
        _require_flags(flags, 0, "suback")
        packet_id = body.take_int(2)
        packet = Suback(packet_id=packet_id, granted=tuple(body.rest))
    elif packet_type == PINGREQ:
        _require_flags(flags, 0, "pingreq")
        body.expect_end()
        packet = Pingreq()
    elif packet_type == PINGRESP:
        _require_flags(flags, 0, "pingresp")
        body.expect_end()
        packet = Pingresp()
    else:
        _require_flags(flags, 0, "disconnect")
        body.expect_end()
        packet = Disconnect()

    return packet, total
