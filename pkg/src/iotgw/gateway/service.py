"""Ingestion pipeline, registry operations, alarms, and accounting.

The service is deliberately passive: transports, brokers, and the HTTP
front end live outside and call in. Uplink and downlink publishing are
injected callables so the same core runs under a virtual clock in tests
and against real sockets in production.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from ..framing import RawFrame
from ..model import (
    AlarmRule,
    GatewayIdentity,
    NodeDescriptor,
    NormalizedReading,
    ProtocolId,
    rule_matches,
    serialize_reading,
)
from ..normalize import (
    NormalizationError,
    build_normalized,
    extract_payload,
    parse_announce,
)
from .events import EventBus
from .metrics import HostStats, HostStatsSampler, ThroughputTracker
from .registry import Registry, UnknownNode
from .storage import ReadingLog, StorageError

Publisher = Callable[[str, bytes], None]


class DuplicateRule(ValueError):
    def __init__(self, rule_id: str):
        super().__init__(f"alarm rule already exists: {rule_id!r}")
        self.rule_id = rule_id


class UnknownRule(KeyError):
    def __init__(self, rule_id: str):
        super().__init__(rule_id)
        self.rule_id = rule_id


@dataclass(frozen=True)
class AlarmEvent:
    rule_id: str
    message: str
    reading: NormalizedReading
    fired_at: float

    def to_wire(self) -> dict:
        return {
            "rule-id": self.rule_id,
            "message": self.message,
            "reading": json.loads(serialize_reading(self.reading)),
            "fired-at": self.fired_at,
        }


def uplink_topic(gate_id: str, reading: NormalizedReading) -> str:
    return f"dat/{gate_id}/{reading.node_id}/{reading.sensor_id}"


def config_topic(gate_id: str, node_id: str) -> str:
    return f"cfg/{gate_id}/{node_id}"


class GatewayService:
    """Single ordered consumer of everything the listeners receive."""

    def __init__(
        self,
        identity: GatewayIdentity,
        log: ReadingLog,
        clock: Callable[[], float] = time.time,
        uplink: Optional[Publisher] = None,
        downlink: Optional[Publisher] = None,
        sampler: Optional[HostStatsSampler] = None,
        throughput_window: float = 6.0,
        uplink_buffer: int = 10000,
    ):
        self.identity = identity
        self.log = log
        self.clock = clock
        self.registry = Registry(clock)
        self.tracker = ThroughputTracker(clock)
        self.events = EventBus()
        self.sampler = sampler
        self.throughput_window = throughput_window

        self._uplink = uplink
        self._downlink = downlink
        self._uplink_backlog: list[tuple[str, bytes]] = []
        self._uplink_buffer = uplink_buffer

        self._ingest_lock = threading.Lock()
        self._rules_lock = threading.Lock()
        self._rules: dict[str, AlarmRule] = {}
        self._alarm_history: list[AlarmEvent] = []

        self._stats_lock = threading.Lock()
        self._per_protocol = {
            proto: {"frames-ok": 0, "decode-errors": 0,
                    "normalize-errors": 0, "announces": 0}
            for proto in ProtocolId
        }
        self._totals = {"persisted": 0, "uplinks": 0, "uplink-drops": 0,
                        "alarms-fired": 0, "storage-errors": 0}

    # -- wiring ----------------------------------------------------------

    def set_uplink(self, publisher: Publisher):
        self._uplink = publisher
        self.flush_uplinks()

    def set_downlink(self, publisher: Publisher):
        self._downlink = publisher

    # -- registry operations ---------------------------------------------

    def register_node(self, desc: NodeDescriptor) -> NodeDescriptor:
        accepted = self.registry.upsert(desc)
        self._publish_config(accepted)
        self.events.publish("node", {"action": "registered",
                                     "node": accepted.to_wire()})
        return accepted

    def set_capture_interval(self, node_id: str, seconds: float) -> NodeDescriptor:
        updated = self.registry.set_interval(node_id, seconds)
        self._publish_config(updated)
        self.events.publish("node", {"action": "updated",
                                     "node": updated.to_wire()})
        return updated

    def assign_protocol(self, node_id: str, sensor_id: str,
                        protocol: ProtocolId) -> NodeDescriptor:
        updated = self.registry.assign_protocol(node_id, sensor_id, protocol)
        self._publish_config(updated)
        self.events.publish("node", {"action": "updated",
                                     "node": updated.to_wire()})
        return updated

    def _publish_config(self, desc: NodeDescriptor):
        if self._downlink is None:
            return
        payload = json.dumps(desc.to_wire(), separators=(",", ":")).encode("utf-8")
        self._downlink(config_topic(self.identity.gate_id, desc.node_id), payload)

    # -- ingestion pipeline ------------------------------------------------

    def ingest(self, frame: RawFrame, arrival: ProtocolId, rx_bytes: int):
        """Process one decoded frame, serialized across all listeners."""
        with self._ingest_lock:
            self._ingest_locked(frame, arrival, rx_bytes)

    def _ingest_locked(self, frame: RawFrame, arrival: ProtocolId, rx_bytes: int):
        try:
            announce = parse_announce(frame.payload)
        except NormalizationError as exc:
            self.tracker.record(arrival, None, rx_bytes)
            self._note_error(arrival, "decode-errors", exc)
            return

        if announce is not None:
            self.tracker.record(arrival, announce.node_id, rx_bytes)
            with self._stats_lock:
                self._per_protocol[arrival]["announces"] += 1
            self.register_node(announce)
            return

        try:
            rec = extract_payload(frame)
        except NormalizationError as exc:
            self.tracker.record(arrival, None, rx_bytes)
            self._note_error(arrival, "decode-errors", exc)
            return

        self.tracker.record(arrival, rec.node_id, rx_bytes)
        node = self.registry.find(rec.node_id)
        if node is None:
            self._note_error(arrival, "normalize-errors", UnknownNode(rec.node_id))
            return
        self.registry.touch(rec.node_id)

        try:
            reading = build_normalized(rec, arrival, node, self.identity)
        except NormalizationError as exc:
            self._note_error(arrival, "normalize-errors", exc)
            return

        try:
            self.log.append(reading)
        except StorageError as exc:
            with self._stats_lock:
                self._totals["storage-errors"] += 1
            self.events.publish("diagnostic", {"scope": "storage",
                                               "detail": str(exc)})
            return

        with self._stats_lock:
            self._per_protocol[arrival]["frames-ok"] += 1
            self._totals["persisted"] += 1

        wire = json.loads(serialize_reading(reading))
        for event in self._evaluate_alarms(reading):
            self.events.publish("alarm", event.to_wire())
        self._send_uplink(uplink_topic(self.identity.gate_id, reading),
                          serialize_reading(reading))
        self.events.publish("reading", {"reading": wire})

    def _note_error(self, arrival: ProtocolId, counter: str, exc: Exception):
        with self._stats_lock:
            self._per_protocol[arrival][counter] += 1
        self.events.publish("diagnostic", {
            "scope": counter,
            "protocol": arrival.value,
            "detail": f"{type(exc).__name__}: {exc}",
        })

    def note_transport_error(self, protocol: ProtocolId, exc: Exception):
        """Framing-level decode failure reported by a listener."""
        self._note_error(protocol, "decode-errors", exc)

    # -- uplink delivery -----------------------------------------------------

    def _send_uplink(self, topic: str, payload: bytes):
        if self._uplink is None:
            self._buffer_uplink(topic, payload, "no uplink configured")
            return
        try:
            self._uplink(topic, payload)
        except Exception as exc:  # connectivity faults must not halt ingest
            self._buffer_uplink(topic, payload, str(exc))
            return
        with self._stats_lock:
            self._totals["uplinks"] += 1

    def _buffer_uplink(self, topic: str, payload: bytes, reason: str):
        with self._stats_lock:
            if len(self._uplink_backlog) >= self._uplink_buffer:
                self._totals["uplink-drops"] += 1
                detail = f"uplink buffer full, dropping for {topic}"
            else:
                self._uplink_backlog.append((topic, payload))
                detail = f"uplink buffered for {topic}: {reason}"
        self.events.publish("diagnostic", {"scope": "uplink", "detail": detail})

    def flush_uplinks(self) -> int:
        """Retry buffered uplink publishes; returns how many went out."""
        if self._uplink is None:
            return 0
        sent = 0
        while True:
            with self._stats_lock:
                if not self._uplink_backlog:
                    return sent
                topic, payload = self._uplink_backlog[0]
            try:
                self._uplink(topic, payload)
            except Exception:
                return sent
            with self._stats_lock:
                self._uplink_backlog.pop(0)
                self._totals["uplinks"] += 1
            sent += 1

    @property
    def backlog_size(self) -> int:
        with self._stats_lock:
            return len(self._uplink_backlog)

    # -- alarms ----------------------------------------------------------------

    def add_alarm(self, rule: AlarmRule) -> AlarmRule:
        with self._rules_lock:
            if rule.rule_id in self._rules:
                raise DuplicateRule(rule.rule_id)
            self._rules[rule.rule_id] = rule
        return rule

    def remove_alarm(self, rule_id: str):
        with self._rules_lock:
            if rule_id not in self._rules:
                raise UnknownRule(rule_id)
            del self._rules[rule_id]

    def list_alarms(self) -> list[AlarmRule]:
        with self._rules_lock:
            return [self._rules[k] for k in sorted(self._rules)]

    def alarm_history(self) -> list[AlarmEvent]:
        with self._rules_lock:
            return list(self._alarm_history)

    def _evaluate_alarms(self, reading: NormalizedReading) -> list[AlarmEvent]:
        fired = []
        with self._rules_lock:
            rules = list(self._rules.values())
        for rule in rules:
            if not rule_matches(rule, reading):
                continue
            message = rule.message or (
                f"{reading.sensor_id} {rule.comparator} {rule.threshold:g} "
                f"(observed {reading.value:g})")
            event = AlarmEvent(rule_id=rule.rule_id, message=message,
                               reading=reading, fired_at=self.clock())
            fired.append(event)
        if fired:
            with self._rules_lock:
                self._alarm_history.extend(fired)
            with self._stats_lock:
                self._totals["alarms-fired"] += len(fired)
        return fired

    # -- metrics and introspection ----------------------------------------------

    def throughput(self, protocol: ProtocolId, node_id: Optional[str] = None,
                   window: Optional[float] = None) -> float:
        return self.tracker.kbps(protocol, node_id,
                                 window or self.throughput_window)

    def host_stats(self) -> HostStats:
        if self.sampler is None:
            raise RuntimeError("host statistics sampling is not enabled")
        latest = self.sampler.latest
        return latest if latest is not None else self.sampler.sample()

    def counters(self) -> dict:
        with self._stats_lock:
            return {
                "per-protocol": {p.value: dict(c)
                                 for p, c in self._per_protocol.items()},
                "totals": dict(self._totals),
            }
