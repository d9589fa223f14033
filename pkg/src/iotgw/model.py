"""Domain types shared by the gateway, the simulated nodes and the tooling.

The central type is :class:`NormalizedReading`: the nine-field JSON record
every sensor measurement is converted to before it leaves the gateway.
Its serialized form is both the MQTT uplink payload and the on-disk log
format, so the codec here is deliberately strict about key order and
number formatting.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping, Optional


class ProtocolId(str, Enum):
    """The three wireless transports a node can use toward the gateway."""

    WIFI = "wifi"
    BLUETOOTH = "bluetooth"
    ZIGBEE = "zigbee"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


# Closed unit vocabulary for the six measured weather variables.
MAGNITUDES = (
    "celsius",
    "percent_rh",
    "w_per_m2",
    "mm",
    "km_per_h",
    "compass_16",
)

COMPARATORS = ("<", "<=", ">", ">=", "=")

# Fixed key order of the standardized reading record.
READING_KEYS = (
    "node-id",
    "gps",
    "protocol",
    "date",
    "sensor-id",
    "value",
    "magnitude",
    "gate-id",
    "network-id",
)

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$")


class ModelError(ValueError):
    """Base class for domain validation failures."""


class MissingField(ModelError):
    def __init__(self, key: str):
        super().__init__(f"missing field: {key}")
        self.key = key


class TypeMismatch(ModelError):
    def __init__(self, key: str, expected: str):
        super().__init__(f"field {key!r} is not a {expected}")
        self.key = key


class BadTimestamp(ModelError):
    pass


class BadProtocol(ModelError):
    pass


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp, accepting the trailing-Z form.

    Raises BadTimestamp on anything that is not a timezone-aware
    ISO-8601 string. Fractional seconds are truncated: readings carry
    seconds precision.
    """
    if not isinstance(text, str) or not _DATE_RE.match(text):
        raise BadTimestamp(f"bad timestamp: {text!r}")
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise BadTimestamp(f"bad timestamp: {text!r}") from exc
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    """Render a UTC timestamp as ``YYYY-MM-DDThh:mm:ssZ``."""
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class GpsCoordinate:
    """Geographic position in decimal degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ModelError(f"latitude out of range: {self.latitude}")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ModelError(f"longitude out of range: {self.longitude}")

    def as_field(self) -> str:
        """Serialized form used inside readings: ``lat,lon`` with 6 decimals."""
        return f"{self.latitude:.6f},{self.longitude:.6f}"

    @classmethod
    def from_field(cls, text: str) -> "GpsCoordinate":
        try:
            lat_s, lon_s = text.split(",")
            return cls(float(lat_s), float(lon_s))
        except (ValueError, AttributeError) as exc:
            raise ModelError(f"bad gps field: {text!r}") from exc


@dataclass(frozen=True)
class SensorDescriptor:
    """One sensor of a node: its id, unit and hardware model label."""

    sensor_id: str
    magnitude: str
    model: str = ""

    def __post_init__(self):
        if not self.sensor_id:
            raise ModelError("sensor_id must be nonempty")
        if self.magnitude not in MAGNITUDES:
            raise ModelError(f"unknown magnitude: {self.magnitude!r}")


@dataclass(frozen=True)
class NodeDescriptor:
    """Registry entry describing a wireless node and its sensor fit-out."""

    node_id: str
    gps: GpsCoordinate
    sensors: tuple[SensorDescriptor, ...]
    capture_interval: float
    protocol_assignment: Mapping[str, ProtocolId]

    def __post_init__(self):
        if not self.node_id:
            raise ModelError("node_id must be nonempty")
        if not self.sensors:
            raise ModelError("node must declare at least one sensor")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate sensor_id in node descriptor")
        if not (isinstance(self.capture_interval, (int, float))
                and math.isfinite(self.capture_interval)
                and self.capture_interval >= 1):
            raise ModelError(f"capture_interval must be >= 1 s, got {self.capture_interval!r}")
        known = set(ids)
        for sid, proto in self.protocol_assignment.items():
            if sid not in known:
                raise ModelError(f"protocol assigned to unknown sensor {sid!r}")
            if not isinstance(proto, ProtocolId):
                raise ModelError(f"bad protocol for sensor {sid!r}: {proto!r}")
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "protocol_assignment", dict(self.protocol_assignment))
        object.__setattr__(self, "capture_interval", float(self.capture_interval))

    def sensor(self, sensor_id: str) -> Optional[SensorDescriptor]:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        return None

    def protocol_for(self, sensor_id: str) -> Optional[ProtocolId]:
        return self.protocol_assignment.get(sensor_id)

    def with_interval(self, seconds: float) -> "NodeDescriptor":
        return NodeDescriptor(self.node_id, self.gps, self.sensors,
                              seconds, self.protocol_assignment)

    def with_assignment(self, sensor_id: str, proto: ProtocolId) -> "NodeDescriptor":
        assignment = dict(self.protocol_assignment)
        assignment[sensor_id] = proto
        return NodeDescriptor(self.node_id, self.gps, self.sensors,
                              self.capture_interval, assignment)

    def to_wire(self) -> dict:
        """JSON-safe dict used by announce records, cfg downlink and the API."""
        return {
            "node-id": self.node_id,
            "gps": self.gps.as_field(),
            "capture-interval": self.capture_interval,
            "sensors": [
                {"sensor-id": s.sensor_id, "magnitude": s.magnitude, "model": s.model}
                for s in self.sensors
            ],
            "protocols": {sid: proto.value
                          for sid, proto in self.protocol_assignment.items()},
        }

    @classmethod
    def from_wire(cls, obj: Mapping) -> "NodeDescriptor":
        if not isinstance(obj, Mapping):
            raise ModelError("node descriptor must be a JSON object")
        try:
            node_id = obj["node-id"]
            gps = GpsCoordinate.from_field(obj["gps"])
            interval = obj["capture-interval"]
            sensors = tuple(
                SensorDescriptor(s["sensor-id"], s["magnitude"], s.get("model", ""))
                for s in obj["sensors"]
            )
        except KeyError as exc:
            raise ModelError(f"node descriptor missing key {exc.args[0]!r}") from exc
        except TypeError as exc:
            raise ModelError(f"malformed node descriptor: {exc}") from exc
        assignment = {}
        for sid, name in dict(obj.get("protocols", {})).items():
            try:
                assignment[sid] = ProtocolId(name)
            except ValueError as exc:
                raise ModelError(f"unknown protocol {name!r} for sensor {sid!r}") from exc
        if not (isinstance(interval, (int, float)) and not isinstance(interval, bool)):
            raise ModelError("capture-interval must be a number")
        return cls(node_id, gps, sensors, interval, assignment)


@dataclass(frozen=True)
class GatewayIdentity:
    """The gate-id / network-id pair stamped onto every reading."""

    gate_id: str
    network_id: str

    def __post_init__(self):
        if not self.gate_id or not self.network_id:
            raise ModelError("gate_id and network_id must be nonempty")


@dataclass(frozen=True)
class NormalizedReading:
    """One standardized measurement as relayed gateway-to-cloud.

    All nine fields are mandatory; ``date`` is UTC with seconds precision
    (fractional seconds are dropped at construction).
    """

    node_id: str
    gps: GpsCoordinate
    protocol: ProtocolId
    date: datetime
    sensor_id: str
    value: float
    magnitude: str
    gate_id: str
    network_id: str

    def __post_init__(self):
        for name in ("node_id", "sensor_id", "magnitude", "gate_id", "network_id"):
            if not getattr(self, name):
                raise ModelError(f"{name} must be nonempty")
        if not isinstance(self.protocol, ProtocolId):
            raise ModelError(f"bad protocol: {self.protocol!r}")
        if self.magnitude not in MAGNITUDES:
            raise ModelError(f"unknown magnitude: {self.magnitude!r}")
        if not isinstance(self.value, (int, float)) or isinstance(self.value, bool) \
                or not math.isfinite(self.value):
            raise ModelError(f"value must be a finite number, got {self.value!r}")
        if self.date.tzinfo is None:
            raise ModelError("date must be timezone-aware UTC")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(
            self, "date", self.date.astimezone(timezone.utc).replace(microsecond=0))


def serialize_reading(reading: NormalizedReading) -> bytes:
    """Canonical UTF-8 JSON bytes of a reading.

    Keys are emitted in the fixed standardized order with no insignificant
    whitespace; equal readings always produce byte-identical output.
    """
    obj = {
        "node-id": reading.node_id,
        "gps": reading.gps.as_field(),
        "protocol": reading.protocol.value,
        "date": format_timestamp(reading.date),
        "sensor-id": reading.sensor_id,
        "value": reading.value,
        "magnitude": reading.magnitude,
        "gate-id": reading.gate_id,
        "network-id": reading.network_id,
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


_STRING_KEYS = ("node-id", "gps", "protocol", "date", "sensor-id",
                "magnitude", "gate-id", "network-id")


def parse_reading(data: bytes | str) -> NormalizedReading:
    """Parse a standardized reading, tolerating key order and whitespace.

    Raises MissingField / TypeMismatch / BadTimestamp / BadProtocol, each
    naming the offending key.
    """
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ModelError("reading must be a JSON object")
    for key in READING_KEYS:
        if key not in obj:
            raise MissingField(key)
    for key in _STRING_KEYS:
        if not isinstance(obj[key], str):
            raise TypeMismatch(key, "string")
    value = obj["value"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeMismatch("value", "number")
    try:
        protocol = ProtocolId(obj["protocol"])
    except ValueError:
        raise BadProtocol(f"unknown protocol: {obj['protocol']!r}") from None
    return NormalizedReading(
        node_id=obj["node-id"],
        gps=GpsCoordinate.from_field(obj["gps"]),
        protocol=protocol,
        date=parse_timestamp(obj["date"]),
        sensor_id=obj["sensor-id"],
        value=float(value),
        magnitude=obj["magnitude"],
        gate_id=obj["gate-id"],
        network_id=obj["network-id"],
    )


@dataclass(frozen=True)
class AlarmRule:
    """Threshold rule evaluated against every incoming reading.

    Selector patterns are either the single wildcard ``*`` or a literal
    node/sensor id; no glob syntax.
    """

    rule_id: str
    node_pattern: str
    sensor_pattern: str
    comparator: str
    threshold: float
    message: str = ""

    def __post_init__(self):
        if not self.rule_id:
            raise ModelError("rule_id must be nonempty")
        if self.comparator not in COMPARATORS:
            raise ModelError(f"unknown comparator: {self.comparator!r}")
        if not isinstance(self.threshold, (int, float)) or isinstance(self.threshold, bool) \
                or not math.isfinite(self.threshold):
            raise ModelError(f"threshold must be finite, got {self.threshold!r}")
        if not self.node_pattern or not self.sensor_pattern:
            raise ModelError("selector patterns must be nonempty")
        object.__setattr__(self, "threshold", float(self.threshold))

    def to_wire(self) -> dict:
        return {
            "rule-id": self.rule_id,
            "node": self.node_pattern,
            "sensor": self.sensor_pattern,
            "comparator": self.comparator,
            "threshold": self.threshold,
            "message": self.message,
        }

    @classmethod
    def from_wire(cls, obj: Mapping) -> "AlarmRule":
        try:
            return cls(
                rule_id=obj["rule-id"],
                node_pattern=obj.get("node", "*"),
                sensor_pattern=obj.get("sensor", "*"),
                comparator=obj["comparator"],
                threshold=obj["threshold"],
                message=obj.get("message", ""),
            )
        except KeyError as exc:
            raise ModelError(f"alarm rule missing key {exc.args[0]!r}") from exc


def _pattern_matches(pattern: str, value: str) -> bool:
    return pattern == "*" or pattern == value


def rule_matches(rule: AlarmRule, reading: NormalizedReading) -> bool:
    """True iff both selector patterns match and comparator(value, threshold) holds."""
    if not _pattern_matches(rule.node_pattern, reading.node_id):
        return False
    if not _pattern_matches(rule.sensor_pattern, reading.sensor_id):
        return False
    v, t = reading.value, rule.threshold
    if rule.comparator == "<":
        return v < t
    if rule.comparator == "<=":
        return v <= t
    if rule.comparator == ">":
        return v > t
    if rule.comparator == ">=":
        return v >= t
    return v == t
