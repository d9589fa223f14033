"""Uplink payload extraction and reading normalization.

Every uplink frame, regardless of transport, carries one compact JSON
record with the closed key set {"n", "s", "v", "t"}: node id, sensor id,
numeric value, capture timestamp. The gateway turns records into
NormalizedReadings by joining them against the registered NodeDescriptor
and its own identity.

A node's very first record announces the node itself: sensor id
"_announce" with the descriptor wire object in place of the numeric
value. That shape is handled by parse_announce, not extract_payload,
which stays strict about numeric values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime

from .framing import RawFrame
from .model import (
    GatewayIdentity,
    ModelError,
    NodeDescriptor,
    NormalizedReading,
    ProtocolId,
    format_timestamp,
    parse_timestamp,
)

RECORD_KEYS = ("n", "s", "v", "t")
ANNOUNCE_SENSOR_ID = "_announce"


class NormalizationError(ValueError):
    pass


class MalformedRecord(NormalizationError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class UnknownKey(NormalizationError):
    def __init__(self, key: str):
        super().__init__(f"unknown record key {key!r}")
        self.key = key


class UnknownSensor(NormalizationError):
    def __init__(self, sensor_id: str):
        super().__init__(f"sensor {sensor_id!r} not registered for this node")
        self.sensor_id = sensor_id


class NodeMismatch(NormalizationError):
    def __init__(self, record_node: str, descriptor_node: str):
        super().__init__(
            f"record node {record_node!r} does not match descriptor "
            f"{descriptor_node!r}")
        self.record_node = record_node
        self.descriptor_node = descriptor_node


@dataclass(frozen=True)
class NodeUplinkRecord:
    node_id: str
    sensor_id: str
    value: float
    capture_time: datetime

    def __post_init__(self):
        if not self.node_id:
            raise MalformedRecord("empty node id")
        if not self.sensor_id:
            raise MalformedRecord("empty sensor id")


def encode_record(rec: NodeUplinkRecord) -> bytes:
    body = {
        "n": rec.node_id,
        "s": rec.sensor_id,
        "v": rec.value,
        "t": format_timestamp(rec.capture_time),
    }
    return json.dumps(body, separators=(",", ":")).encode("utf-8")


def _record_object(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedRecord(f"payload is not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedRecord(f"record must be an object, got {type(obj).__name__}")
    for key in sorted(obj):
        if key not in RECORD_KEYS:
            raise UnknownKey(key)
    for key in RECORD_KEYS:
        if key not in obj:
            raise MalformedRecord(f"missing key {key!r}")
    for key in ("n", "s", "t"):
        if not isinstance(obj[key], str):
            raise MalformedRecord(f"key {key!r} must be a string")
    return obj


def _parse_capture_time(raw: str) -> datetime:
    try:
        return parse_timestamp(raw)
    except ModelError as exc:
        raise MalformedRecord(f"bad capture time: {exc}") from None


def extract_payload(frame: RawFrame) -> NodeUplinkRecord:
    """Parse the record carried by a decoded uplink frame.

    The schema is closed: any key outside {"n","s","v","t"} is rejected,
    and "v" must be a plain number. Announce records do not pass here.
    """
    obj = _record_object(frame.payload)
    value = obj["v"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedRecord(f"key 'v' must be a number, got {type(value).__name__}")
    return NodeUplinkRecord(
        node_id=obj["n"],
        sensor_id=obj["s"],
        value=float(value),
        capture_time=_parse_capture_time(obj["t"]),
    )


def encode_announce(desc: NodeDescriptor, when: datetime) -> bytes:
    body = {
        "n": desc.node_id,
        "s": ANNOUNCE_SENSOR_ID,
        "v": desc.to_wire(),
        "t": format_timestamp(when),
    }
    return json.dumps(body, separators=(",", ":")).encode("utf-8")


def parse_announce(payload: bytes) -> NodeDescriptor | None:
    """Return the announced descriptor, or None for ordinary records.

    Raises MalformedRecord when the record claims to be an announce but
    its descriptor is invalid or contradicts the record's node id.
    """
    obj = _record_object(payload)
    if obj["s"] != ANNOUNCE_SENSOR_ID:
        return None
    if not isinstance(obj["v"], dict):
        raise MalformedRecord("announce value must be a descriptor object")
    _parse_capture_time(obj["t"])
    try:
        desc = NodeDescriptor.from_wire(obj["v"])
    except ModelError as exc:
        raise MalformedRecord(f"bad descriptor: {exc}") from None
    if desc.node_id != obj["n"]:
        raise MalformedRecord(
            f"announce node {obj['n']!r} does not match descriptor "
            f"{desc.node_id!r}")
    return desc


def build_normalized(rec: NodeUplinkRecord, arrival: ProtocolId,
                     node: NodeDescriptor,
                     gw: GatewayIdentity) -> NormalizedReading:
    """Join a record with its node registration and the gateway identity.

    The protocol field records the transport the frame actually arrived
    on, which only coincides with the node's configured assignment when
    the node is obeying it.
    """
    if rec.node_id != node.node_id:
        raise NodeMismatch(rec.node_id, node.node_id)
    sensor = node.sensor(rec.sensor_id)
    if sensor is None:
        raise UnknownSensor(rec.sensor_id)
    return NormalizedReading(
        node_id=rec.node_id,
        gps=node.gps,
        protocol=arrival,
        date=rec.capture_time,
        sensor_id=rec.sensor_id,
        value=rec.value,
        magnitude=sensor.magnitude,
        gate_id=gw.gate_id,
        network_id=gw.network_id,
    )
