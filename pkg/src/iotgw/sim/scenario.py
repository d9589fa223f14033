"""Scenario runner: gateway, brokers, cloud sink, and a simulated fleet.

Virtual mode wires everything over in-memory pipes driven by an event
scheduler, so an eight-minute capture runs in well under a second and
twice the same spec gives byte-identical reports. Real mode boots the
same components on TCP sockets and runs on the wall clock.
"""

from __future__ import annotations

import csv
import json
import shutil
import tempfile
import time
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from ..framing import RawFrame
from ..gateway.api import ApiServer
from ..gateway.service import GatewayService
from ..gateway.storage import ReadingLog
from ..links import TransportListener
from ..model import (
    AlarmRule,
    GatewayIdentity,
    GpsCoordinate,
    ModelError,
    NodeDescriptor,
    ProtocolId,
    format_timestamp,
    parse_reading,
    parse_timestamp,
)
from ..mqtt.broker import BrokerCore, BrokerServer
from ..mqtt.client import MqttError, SocketMqttClient
from ..normalize import NodeUplinkRecord, encode_record
from .clock import EventScheduler, VirtualClock
from .network import VirtualNetwork, VirtualTransportPort, attach_mqtt_client
from .node import NodeRunner, SensorNode, standard_station

DEFAULT_EPOCH = "2020-01-01T00:00:00Z"
ACTION_OPS = ("set-interval", "assign", "add-alarm", "delete-alarm",
              "force-reading")


class ScenarioError(ValueError):
    pass


class ScenarioTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything a run needs; loadable from one JSON document."""

    name: str
    duration: float
    seed: int
    nodes: tuple[NodeDescriptor, ...]
    epoch: float
    gate_id: str = "gw1"
    network_id: str = "net1"
    alarms: tuple[AlarmRule, ...] = ()
    actions: tuple[dict, ...] = ()
    api: bool = False
    api_token: str = "sim-token"
    api_port: int = 0
    throughput_window: float = 6.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioError(f"duration must be positive, got {self.duration}")
        if not self.nodes:
            raise ScenarioError("scenario needs at least one node")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate node ids in scenario")
        if self.throughput_window <= 0:
            raise ScenarioError("throughput-window must be positive")
        if not 0 <= self.api_port <= 65535:
            raise ScenarioError(f"api-port out of range: {self.api_port}")
        for action in self.actions:
            if action.get("op") not in ACTION_OPS:
                raise ScenarioError(f"unknown action op: {action.get('op')!r}")
            at = action.get("at")
            if not isinstance(at, (int, float)) or isinstance(at, bool) \
                    or not 0 <= at <= self.duration:
                raise ScenarioError(
                    f"action time must lie within the run, got {at!r}")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "alarms", tuple(self.alarms))
        object.__setattr__(self, "actions", tuple(self.actions))

    @classmethod
    def from_wire(cls, doc: dict) -> "ScenarioSpec":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario must be a JSON object")
        try:
            nodes = tuple(_node_from_entry(e) for e in doc["nodes"])
            return cls(
                name=str(doc.get("name", "scenario")),
                duration=float(doc["duration"]),
                seed=int(doc.get("seed", 0)),
                nodes=nodes,
                epoch=parse_timestamp(doc.get("epoch", DEFAULT_EPOCH)).timestamp(),
                gate_id=str(doc.get("gate-id", "gw1")),
                network_id=str(doc.get("network-id", "net1")),
                alarms=tuple(AlarmRule.from_wire(r)
                             for r in doc.get("alarms", [])),
                actions=tuple(dict(a) for a in doc.get("actions", [])),
                api=bool(doc.get("api", False)),
                api_token=str(doc.get("api-token", "sim-token")),
                api_port=int(doc.get("api-port", 0)),
                throughput_window=float(doc.get("throughput-window", 6.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed scenario: {exc}") from exc


def _node_from_entry(entry: dict) -> NodeDescriptor:
    """Full descriptors pass through; shorthand entries get the standard
    six-sensor fit-out with optional protocol overrides."""
    if "sensors" in entry:
        return NodeDescriptor.from_wire(entry)
    protocols = None
    if "protocols" in entry:
        protocols = {sid: ProtocolId(name)
                     for sid, name in dict(entry["protocols"]).items()}
    return standard_station(
        node_id=entry["node-id"],
        gps=GpsCoordinate.from_field(entry["gps"]),
        capture_interval=float(entry.get("capture-interval", 6.0)),
        protocol_map=protocols,
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p} is not valid JSON: {exc}") from exc
    return ScenarioSpec.from_wire(doc)


# ---------------------------------------------------------------------------
# virtual mode


class _VirtualNodeHost:
    """One node's endpoints in a virtual run: frame links plus cfg client."""

    def __init__(self, desc: NodeDescriptor, seed: int, epoch: float,
                 clock: VirtualClock, net: VirtualNetwork,
                 embedded: BrokerCore,
                 ports: dict[ProtocolId, VirtualTransportPort],
                 gate_id: str, on_problem: Callable[[str], None]):
        self._ports = ports
        self._links: dict[ProtocolId, object] = {}
        self.cfg_topic = f"cfg/{gate_id}/{desc.node_id}"
        self.client = attach_mqtt_client(net, embedded,
                                         f"node-{desc.node_id}", clock.now)
        self.node = SensorNode(desc, seed, epoch, clock.now,
                               send=self._send, poll_config=self._poll_config,
                               on_problem=on_problem)

    def subscribe(self):
        self.client.subscribe(self.cfg_topic, qos=1)

    def _send(self, proto: ProtocolId, payload: bytes):
        link = self._links.get(proto)
        if link is None:
            link = self._ports[proto].connect(self.node.desc.node_id)
            self._links[proto] = link
        link.send(RawFrame(proto, payload))

    def _poll_config(self) -> list[bytes]:
        return [p.payload for p in self.client.poll()
                if p.topic == self.cfg_topic]

    def force_record(self, sensor_id: str, value: float, when: datetime):
        """Inject one fabricated measurement through the real transport."""
        proto = self.node.desc.protocol_for(sensor_id)
        if proto is None:
            raise ScenarioError(f"sensor {sensor_id!r} has no protocol assigned")
        rec = NodeUplinkRecord(self.node.desc.node_id, sensor_id,
                               float(value), when)
        self._send(proto, encode_record(rec))


def _http_call(base: str, token: str, method: str, path: str,
               body: Optional[dict]) -> None:
    data = json.dumps(body).encode("utf-8") if body is not None else None
    headers = {"Authorization": f"Bearer {token}"}
    if data is not None:
        headers["Content-Type"] = "application/json"
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers=headers)
    with urllib.request.urlopen(req, timeout=10) as resp:
        resp.read()


def _perform_action(action: dict, service: GatewayService,
                    api: Optional[ApiServer], token: str,
                    hosts: dict[str, _VirtualNodeHost],
                    now_utc: Callable[[], datetime]):
    op = action["op"]
    if op == "force-reading":
        hosts[action["node"]].force_record(action["sensor"],
                                           action["value"], now_utc())
        return
    if api is not None:
        if op == "set-interval":
            _http_call(api.base_url, token, "PATCH", f"/nodes/{action['node']}",
                       {"capture-interval": action["seconds"]})
        elif op == "assign":
            _http_call(api.base_url, token, "PATCH", f"/nodes/{action['node']}",
                       {"protocols": {action["sensor"]: action["protocol"]}})
        elif op == "add-alarm":
            _http_call(api.base_url, token, "POST", "/alarms", action["rule"])
        elif op == "delete-alarm":
            _http_call(api.base_url, token, "DELETE",
                       f"/alarms/{action['rule-id']}", None)
        return
    if op == "set-interval":
        service.set_capture_interval(action["node"], action["seconds"])
    elif op == "assign":
        service.assign_protocol(action["node"], action["sensor"],
                                ProtocolId(action["protocol"]))
    elif op == "add-alarm":
        service.add_alarm(AlarmRule.from_wire(action["rule"]))
    elif op == "delete-alarm":
        service.remove_alarm(action["rule-id"])


def run_scenario(spec: ScenarioSpec, out_dir: Optional[str | Path] = None,
                 virtual: bool = True) -> dict:
    """Run to completion and return the report document.

    With out_dir set, also writes report.json, throughput.csv and leaves
    readings.log in place.
    """
    if virtual:
        return _run_virtual(spec, out_dir)
    return _run_real(spec, out_dir)


def _run_virtual(spec: ScenarioSpec, out_dir) -> dict:
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        scratch = None
        log_path = out / "readings.log"
    else:
        scratch = tempfile.mkdtemp(prefix="iotgw-sim-")
        log_path = Path(scratch) / "readings.log"

    clock = VirtualClock(start=spec.epoch)
    net = VirtualNetwork()
    scheduler = EventScheduler(clock, drain=net.pump)
    end = spec.epoch + spec.duration

    embedded = BrokerCore(clock=clock.now)
    cloud = BrokerCore(clock=clock.now)
    log = ReadingLog(log_path)
    service = GatewayService(
        GatewayIdentity(spec.gate_id, spec.network_id), log,
        clock=clock.now, throughput_window=spec.throughput_window)
    service.set_downlink(
        lambda topic, payload: embedded.inject_publish(topic, payload,
                                                       qos=1, retain=True))

    uplink = attach_mqtt_client(net, cloud, "gw-uplink", clock.now)
    sink = attach_mqtt_client(net, cloud, "cloud-sink", clock.now)
    net.pump()
    if not (uplink.connected and sink.connected):
        raise ScenarioTimeout("cloud broker handshake did not complete")
    sink.subscribe("dat/#", qos=1)
    net.pump()
    service.set_uplink(
        lambda topic, payload: uplink.publish(topic, payload, qos=1))

    ports = {
        proto: VirtualTransportPort(
            proto, net,
            on_frame=(lambda frame, nbytes, p=proto:
                      service.ingest(frame, p, nbytes)),
            on_decode_error=service.note_transport_error)
        for proto in ProtocolId
    }

    problems: list[str] = []
    hosts: dict[str, _VirtualNodeHost] = {}
    for i, desc in enumerate(spec.nodes):
        hosts[desc.node_id] = _VirtualNodeHost(
            desc, spec.seed + i, spec.epoch, clock, net, embedded, ports,
            spec.gate_id, problems.append)
    net.pump()
    for host in hosts.values():
        if not host.client.connected:
            raise ScenarioTimeout("embedded broker handshake did not complete")
        host.subscribe()
    net.pump()
    for host in hosts.values():
        host.node.announce()
    net.pump()

    for rule in spec.alarms:
        service.add_alarm(rule)

    api = None
    if spec.api:
        api = ApiServer(service, spec.api_token, port=spec.api_port)
        api.start()

    events_sub = service.events.subscribe(queue_size=100000)
    captured: list[dict] = []

    def now_utc() -> datetime:
        return datetime.fromtimestamp(clock.now(), tz=timezone.utc)

    def _make_tick(h: _VirtualNodeHost):
        def tick():
            h.node.tick()
            nxt = clock.now() + h.node.interval
            if nxt <= end:
                scheduler.call_at(nxt, tick)
        return tick

    for host in hosts.values():
        scheduler.call_at(spec.epoch + host.node.interval, _make_tick(host))

    for action in spec.actions:
        scheduler.call_at(
            spec.epoch + float(action["at"]),
            lambda a=dict(action): _perform_action(
                a, service, api, spec.api_token, hosts, now_utc))

    series: list[tuple[float, str, str, float]] = []
    window = spec.throughput_window

    def sample():
        t_rel = clock.now() - spec.epoch
        for proto in ProtocolId:
            series.append((t_rel, proto.value, "(all)",
                           service.throughput(proto, None, window)))
            for node_id in service.tracker.nodes_seen(proto):
                series.append((t_rel, proto.value, node_id,
                               service.throughput(proto, node_id, window)))
        captured.extend(events_sub.drain())
        nxt = clock.now() + window
        if nxt <= end:
            scheduler.call_at(nxt, sample)

    if spec.epoch + window <= end:
        scheduler.call_at(spec.epoch + window, sample)

    try:
        scheduler.run_until(end)
        net.pump()
    finally:
        if api is not None:
            api.stop()
    captured.extend(events_sub.drain())
    service.events.unsubscribe(events_sub)

    sink_messages = sink.poll()
    report = _build_report(spec, "virtual", service, log, hosts, sink_messages,
                           series, captured, problems)
    log.close()
    if scratch is not None:
        shutil.rmtree(scratch, ignore_errors=True)
    if out is not None:
        write_report_files(report, out)
    return report


# ---------------------------------------------------------------------------
# real-clock mode


def _run_real(spec: ScenarioSpec, out_dir) -> dict:
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        scratch = None
        log_path = out / "readings.log"
    else:
        scratch = tempfile.mkdtemp(prefix="iotgw-sim-")
        log_path = Path(scratch) / "readings.log"

    epoch = time.time()
    host_addr = "127.0.0.1"
    embedded_server = BrokerServer(host=host_addr, port=0)
    cloud_server = BrokerServer(host=host_addr, port=0)
    listeners: dict[ProtocolId, TransportListener] = {}
    runners: list[NodeRunner] = []
    uplink = sink = None
    api = None
    log = ReadingLog(log_path)
    service = GatewayService(
        GatewayIdentity(spec.gate_id, spec.network_id), log,
        clock=time.time, throughput_window=spec.throughput_window)
    problems: list[str] = []

    try:
        embedded_server.start()
        cloud_server.start()
        service.set_downlink(
            lambda topic, payload: embedded_server.core.inject_publish(
                topic, payload, qos=1, retain=True))
        try:
            uplink = SocketMqttClient(host_addr, cloud_server.address[1],
                                      client_id="gw-uplink")
            sink = SocketMqttClient(host_addr, cloud_server.address[1],
                                    client_id="cloud-sink")
        except (OSError, MqttError) as exc:
            raise ScenarioTimeout(f"cloud broker did not come up: {exc}") from exc
        sink.subscribe("dat/#", qos=1).result(timeout=5.0)
        service.set_uplink(
            lambda topic, payload: uplink.publish(topic, payload, qos=1))

        for proto in ProtocolId:
            listener = TransportListener(
                proto, host_addr, 0,
                on_frame=(lambda frame, nbytes, p=proto:
                          service.ingest(frame, p, nbytes)),
                on_decode_error=service.note_transport_error)
            listener.start()
            listeners[proto] = listener
        transport_ports = {proto: listeners[proto].address[1]
                           for proto in ProtocolId}

        for rule in spec.alarms:
            service.add_alarm(rule)

        if spec.api:
            api = ApiServer(service, spec.api_token, port=spec.api_port)
            api.start()

        events_sub = service.events.subscribe(queue_size=100000)
        captured: list[dict] = []

        for i, desc in enumerate(spec.nodes):
            runner = NodeRunner(
                desc, spec.seed + i,
                gateway_host=host_addr,
                transport_ports=transport_ports,
                broker_port=embedded_server.address[1],
                gate_id=spec.gate_id,
                epoch=epoch,
                on_problem=problems.append)
            runner.start()
            runners.append(runner)

        series: list[tuple[float, str, str, float]] = []
        window = spec.throughput_window
        deadline = epoch + spec.duration
        actions = sorted(spec.actions, key=lambda a: float(a["at"]))
        next_action = 0
        next_sample = epoch + window
        hosts_view = {r.node.desc.node_id: _RealNodeProxy(r) for r in runners}

        while True:
            now = time.time()
            if now >= deadline:
                break
            wake = deadline
            if next_action < len(actions):
                wake = min(wake, epoch + float(actions[next_action]["at"]))
            wake = min(wake, next_sample)
            if wake > now:
                time.sleep(min(wake - now, 0.1))
                continue
            if next_action < len(actions) \
                    and now >= epoch + float(actions[next_action]["at"]):
                _perform_action(actions[next_action], service, api,
                                spec.api_token, hosts_view,
                                lambda: datetime.now(tz=timezone.utc))
                next_action += 1
                continue
            if now >= next_sample:
                t_rel = now - epoch
                for proto in ProtocolId:
                    series.append((t_rel, proto.value, "(all)",
                                   service.throughput(proto, None, window)))
                    for node_id in service.tracker.nodes_seen(proto):
                        series.append((t_rel, proto.value, node_id,
                                       service.throughput(proto, node_id,
                                                          window)))
                captured.extend(events_sub.drain())
                next_sample += window

        for runner in runners:
            runner.stop()
        time.sleep(0.3)  # let in-flight publishes settle
        captured.extend(events_sub.drain())
        service.events.unsubscribe(events_sub)
        sink_messages = sink.poll()
        hosts_for_report = {r.node.desc.node_id: r for r in runners}
        report = _build_report(spec, "real", service, log, hosts_for_report,
                               sink_messages, series, captured, problems,
                               epoch_override=epoch)
    finally:
        for runner in runners:
            runner.stop()
        if api is not None:
            api.stop()
        for listener in listeners.values():
            listener.stop()
        if uplink is not None:
            uplink.close()
        if sink is not None:
            sink.close()
        embedded_server.stop()
        cloud_server.stop()
        log.close()

    if scratch is not None:
        shutil.rmtree(scratch, ignore_errors=True)
    if out is not None:
        write_report_files(report, out)
    return report


class _RealNodeProxy:
    """Adapter so timed actions can force-inject readings in real mode."""

    def __init__(self, runner: NodeRunner):
        self._runner = runner
        self.node = runner.node

    def force_record(self, sensor_id: str, value: float, when: datetime):
        proto = self.node.desc.protocol_for(sensor_id)
        if proto is None:
            raise ScenarioError(f"sensor {sensor_id!r} has no protocol assigned")
        rec = NodeUplinkRecord(self.node.desc.node_id, sensor_id,
                               float(value), when)
        self._runner._send_frame(proto, encode_record(rec))


# ---------------------------------------------------------------------------
# report assembly


def _build_report(spec: ScenarioSpec, mode: str, service: GatewayService,
                  log: ReadingLog, hosts: dict, sink_messages, series,
                  captured: list[dict], problems: list[str],
                  epoch_override: Optional[float] = None) -> dict:
    epoch = epoch_override if epoch_override is not None else spec.epoch
    counters = service.counters()
    readings = log.query()

    per_node: dict[str, dict] = {}
    traces: dict[str, dict[str, list]] = {}
    per_protocol_readings = {p.value: 0 for p in ProtocolId}
    for r in readings:
        info = per_node.setdefault(
            r.node_id, {"readings": 0, "per-sensor": {}, "per-protocol": {}})
        info["readings"] += 1
        info["per-sensor"][r.sensor_id] = info["per-sensor"].get(r.sensor_id, 0) + 1
        info["per-protocol"][r.protocol.value] = \
            info["per-protocol"].get(r.protocol.value, 0) + 1
        per_protocol_readings[r.protocol.value] += 1
        traces.setdefault(r.node_id, {}).setdefault(r.sensor_id, []).append(
            [round(r.date.timestamp() - epoch, 3), r.value])

    sink_per_protocol = {p.value: 0 for p in ProtocolId}
    for msg in sink_messages:
        reading = parse_reading(msg.payload)
        sink_per_protocol[reading.protocol.value] += 1

    lifetime = service.tracker.lifetime_totals()
    rx_bytes_per_protocol = {p.value: 0 for p in ProtocolId}
    for (proto_name, node_id), (frames, nbytes) in lifetime.items():
        rx_bytes_per_protocol[proto_name] += nbytes
        if node_id in per_node:
            per_node[node_id]["rx-bytes"] = \
                per_node[node_id].get("rx-bytes", 0) + nbytes

    for host in hosts.values():
        node = host.node
        info = per_node.setdefault(
            node.desc.node_id,
            {"readings": 0, "per-sensor": {}, "per-protocol": {}})
        info["emissions"] = node.emissions
        info["records-sent"] = node.records_sent
        info["emission-times"] = [round(t - epoch, 3)
                                  for t in node.emission_times]

    mean_kbps = {}
    for proto in ProtocolId:
        values = [kbps for (_, p, node, kbps) in series
                  if p == proto.value and node == "(all)"]
        mean_kbps[proto.value] = (sum(values) / len(values)) if values else 0.0

    report = {
        "name": spec.name,
        "mode": mode,
        "duration": spec.duration,
        "seed": spec.seed,
        "epoch": format_timestamp(
            datetime.fromtimestamp(epoch, tz=timezone.utc)),
        "gate-id": spec.gate_id,
        "network-id": spec.network_id,
        "nodes": [d.to_wire() for d in service.registry.all_nodes()],
        "totals": {
            "readings-persisted": counters["totals"]["persisted"],
            "uplink-publishes": counters["totals"]["uplinks"],
            "sink-received": len(sink_messages),
            "alarms-fired": counters["totals"]["alarms-fired"],
            "decode-errors": sum(
                c["decode-errors"] for c in counters["per-protocol"].values()),
            "normalize-errors": sum(
                c["normalize-errors"]
                for c in counters["per-protocol"].values()),
            "announces": sum(
                c["announces"] for c in counters["per-protocol"].values()),
        },
        "per-protocol": {
            p.value: {
                "readings": per_protocol_readings[p.value],
                "sink-received": sink_per_protocol[p.value],
                "frames-ok": counters["per-protocol"][p.value]["frames-ok"],
                "rx-bytes": rx_bytes_per_protocol[p.value],
                "mean-kbps": mean_kbps[p.value],
            }
            for p in ProtocolId
        },
        "per-node": per_node,
        "throughput-series": [
            {"t": round(t, 3), "protocol": p, "node": node, "kbps": kbps}
            for (t, p, node, kbps) in series
        ],
        "traces": traces,
        "alarms": [e for e in captured if e.get("event") == "alarm"],
        "diagnostics": [e for e in captured if e.get("event") == "diagnostic"],
        "node-problems": list(problems),
        "counters": counters,
    }
    return report


def write_report_files(report: dict, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json and throughput.csv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n",
                           encoding="utf-8")
    csv_path = out / "throughput.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "protocol", "node", "kbps"])
        for row in report["throughput-series"]:
            writer.writerow([row["t"], row["protocol"], row["node"],
                             f"{row['kbps']:.6f}"])
    return {"report": report_path, "throughput": csv_path}
