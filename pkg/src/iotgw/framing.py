"""Byte-level framing codecs for the three simulated wireless transports.

Each transport frames an opaque payload differently, so protocol
conversion at the gateway is a real parsing job:

* wifi      - 4-byte big-endian length prefix, then the payload (TCP-style).
* bluetooth - 0xC0-delimited serial frames with SLIP byte stuffing.
* zigbee    - 0x7E start byte, 2-byte big-endian length, payload, and a
              one-byte complement checksum (API-frame style).

All decoders work on a byte buffer and report how many bytes they
consumed; on incomplete input they raise NeedMoreData without consuming
anything, which makes them safe to drive from a growing stream buffer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .model import ProtocolId

MAX_PAYLOAD = 65535

BT_END = 0xC0
BT_ESC = 0xDB
BT_ESC_END = 0xDC
BT_ESC_ESC = 0xDD

ZB_START = 0x7E


class FramingError(ValueError):
    """Base class for codec failures."""


class EmptyPayload(FramingError):
    pass


class PayloadTooLarge(FramingError):
    pass


class NeedMoreData(FramingError):
    """The buffer does not yet hold a complete frame; nothing was consumed."""


class LengthOutOfRange(FramingError):
    """A declared frame length of 0 or above the 65535-byte bound.

    ``resume_at`` tells a streaming caller how many buffer bytes to drop
    before rescanning.
    """

    def __init__(self, declared: int, resume_at: int):
        super().__init__(f"declared payload length {declared} out of range")
        self.declared = declared
        self.resume_at = resume_at


class BadEscape(FramingError):
    """A 0xDB escape byte followed by anything other than 0xDC/0xDD."""

    def __init__(self, resume_at: int):
        super().__init__("bad SLIP escape sequence")
        self.resume_at = resume_at


class ChecksumMismatch(FramingError):
    """Frame checksum failed; scanning should resume after the start byte."""

    def __init__(self, expected: int, got: int, resume_at: int):
        super().__init__(f"checksum mismatch: expected {expected:#04x}, got {got:#04x}")
        self.expected = expected
        self.got = got
        self.resume_at = resume_at


@dataclass(frozen=True)
class RawFrame:
    """A decoded transport frame: which protocol it arrived on, plus payload."""

    kind: ProtocolId
    payload: bytes

    def __post_init__(self):
        if not self.payload:
            raise EmptyPayload("frame payload must be nonempty")
        if len(self.payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"payload is {len(self.payload)} bytes, max {MAX_PAYLOAD}")
        object.__setattr__(self, "payload", bytes(self.payload))


def _check_payload(payload: bytes) -> None:
    if len(payload) == 0:
        raise EmptyPayload("payload must be nonempty")
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload is {len(payload)} bytes, max {MAX_PAYLOAD}")


# --- wifi: length-prefixed stream frames -------------------------------

def wifi_encode(payload: bytes) -> bytes:
    _check_payload(payload)
    return len(payload).to_bytes(4, "big") + payload


def wifi_decode(stream: bytes) -> tuple[RawFrame, int]:
    if len(stream) < 4:
        raise NeedMoreData("incomplete length prefix")
    length = int.from_bytes(stream[:4], "big")
    if length == 0 or length > MAX_PAYLOAD:
        raise LengthOutOfRange(length, resume_at=4)
    if len(stream) < 4 + length:
        raise NeedMoreData("incomplete payload")
    return RawFrame(ProtocolId.WIFI, stream[4:4 + length]), 4 + length


# --- bluetooth: SLIP-style delimited serial frames ----------------------

def bt_encode(payload: bytes) -> bytes:
    _check_payload(payload)
    # Escape the escape byte first so stuffed sequences are not re-escaped.
    body = payload.replace(bytes([BT_ESC]), bytes([BT_ESC, BT_ESC_ESC]))
    body = body.replace(bytes([BT_END]), bytes([BT_ESC, BT_ESC_END]))
    return bytes([BT_END]) + body + bytes([BT_END])


def _bt_unescape(content: bytes, base: int) -> bytes:
    parts = content.split(bytes([BT_ESC]))
    out = bytearray(parts[0])
    pos = base + len(parts[0])
    for part in parts[1:]:
        if not part:
            raise BadEscape(resume_at=pos + 2)
        first = part[0]
        if first == BT_ESC_END:
            out.append(BT_END)
        elif first == BT_ESC_ESC:
            out.append(BT_ESC)
        else:
            raise BadEscape(resume_at=pos + 2)
        out += part[1:]
        pos += 1 + len(part)
    return bytes(out)


def bt_decode(stream: bytes) -> tuple[RawFrame, int]:
    """Decode the next delimited frame, skipping keep-alive empty frames.

    Adjacent 0xC0 delimiters are idle markers on a serial link and are
    passed over silently rather than reported as errors.
    """
    start = 0
    while True:
        end = stream.find(BT_END, start)
        if end < 0:
            raise NeedMoreData("no closing delimiter yet")
        content = stream[start:end]
        if not content:
            # Opening delimiter or keep-alive; keep scanning.
            start = end + 1
            continue
        payload = _bt_unescape(content, start)
        return RawFrame(ProtocolId.BLUETOOTH, payload), end + 1


# --- zigbee: start byte + length + complement checksum ------------------

def zb_checksum(payload: bytes) -> int:
    return 0xFF - (sum(payload) & 0xFF)


def zb_encode(payload: bytes) -> bytes:
    _check_payload(payload)
    return bytes([ZB_START]) + len(payload).to_bytes(2, "big") + payload \
        + bytes([zb_checksum(payload)])


def zb_decode(stream: bytes) -> tuple[RawFrame, int]:
    """Decode the next checksummed frame, resynchronizing past noise.

    Garbage bytes ahead of the start byte are skipped. On a checksum
    failure the frame is reported bad and ``resume_at`` points just past
    the offending start byte so the caller can rescan.
    """
    start = stream.find(ZB_START)
    if start < 0:
        raise NeedMoreData("no start byte yet")
    if len(stream) < start + 3:
        raise NeedMoreData("incomplete header")
    length = int.from_bytes(stream[start + 1:start + 3], "big")
    if length == 0:
        raise LengthOutOfRange(length, resume_at=start + 1)
    frame_end = start + 3 + length + 1
    if len(stream) < frame_end:
        raise NeedMoreData("incomplete frame")
    payload = stream[start + 3:start + 3 + length]
    expected = zb_checksum(payload)
    got = stream[frame_end - 1]
    if got != expected:
        raise ChecksumMismatch(expected, got, resume_at=start + 1)
    return RawFrame(ProtocolId.ZIGBEE, payload), frame_end


ENCODERS: dict[ProtocolId, Callable[[bytes], bytes]] = {
    ProtocolId.WIFI: wifi_encode,
    ProtocolId.BLUETOOTH: bt_encode,
    ProtocolId.ZIGBEE: zb_encode,
}

DECODERS: dict[ProtocolId, Callable[[bytes], tuple[RawFrame, int]]] = {
    ProtocolId.WIFI: wifi_decode,
    ProtocolId.BLUETOOTH: bt_decode,
    ProtocolId.ZIGBEE: zb_decode,
}


def encode_frame(frame: RawFrame) -> bytes:
    return ENCODERS[frame.kind](frame.payload)


class Deframer:
    """Incremental decoder for one transport byte stream.

    Feed it received chunks; it yields complete frames together with the
    number of stream bytes each one occupied (framing overhead included),
    and reports recoverable decode errors through ``on_error`` while
    resynchronizing the stream.
    """

    def __init__(self, kind: ProtocolId,
                 on_error: Optional[Callable[[FramingError], None]] = None):
        self.kind = kind
        self._decode = DECODERS[kind]
        self._buf = bytearray()
        self._on_error = on_error

    def feed(self, data: bytes) -> list[tuple[RawFrame, int]]:
        self._buf += data
        frames: list[tuple[RawFrame, int]] = []
        while self._buf:
            try:
                frame, consumed = self._decode(bytes(self._buf))
            except NeedMoreData:
                break
            except (ChecksumMismatch, BadEscape, LengthOutOfRange) as exc:
                if self._on_error is not None:
                    self._on_error(exc)
                del self._buf[:exc.resume_at]
                continue
            frames.append((frame, consumed))
            del self._buf[:consumed]
        return frames

    @property
    def pending(self) -> int:
        return len(self._buf)


def chunked(data: bytes, sizes: Iterable[int]):
    """Split ``data`` into chunks of the given sizes, cycling as needed."""
    sizes = list(sizes) or [1]
    pos = 0
    i = 0
    while pos < len(data):
        n = max(1, sizes[i % len(sizes)])
        yield data[pos:pos + n]
        pos += n
        i += 1
