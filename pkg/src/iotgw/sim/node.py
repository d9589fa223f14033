"""Simulated weather-station nodes.

SensorNode is the transport-agnostic core: it draws synthetic weather,
runs each value through the matching hardware conversion (encode plus
decode, so quantization is honest), and hands finished record payloads to
an injected sender. Runners wire that core to in-memory pipes under a
virtual clock or to real sockets.
"""

from __future__ import annotations

import json
import threading
import time
from datetime import datetime, timezone
from typing import Callable, Optional

from ..framing import RawFrame
from ..links import LinkError, LinkUnavailable, connect_frame_link
from ..model import (
    GpsCoordinate,
    ModelError,
    NodeDescriptor,
    ProtocolId,
    SensorDescriptor,
)
from ..mqtt.client import MqttError, SocketMqttClient
from ..normalize import NodeUplinkRecord, encode_announce, encode_record
from ..sensors import (
    DAVIS_MAX_VOLTS,
    DAVIS_VOLTS_PER_WM2,
    WeatherSample,
    am2315_decode,
    am2315_encode,
    anemometer_to_kmh,
    davis6450_convert,
    rain_tips_to_mm,
    synth_weather,
    vane_sector,
)


class GatewayUnreachable(RuntimeError):
    pass


SENSOR_TEMPERATURE = "temp"
SENSOR_HUMIDITY = "humidity"
SENSOR_RADIATION = "radiation"
SENSOR_RAINFALL = "rainfall"
SENSOR_WIND_SPEED = "wind_speed"
SENSOR_WIND_DIR = "wind_dir"

STANDARD_SENSORS = (
    SensorDescriptor(SENSOR_TEMPERATURE, "celsius", "AM2315"),
    SensorDescriptor(SENSOR_HUMIDITY, "percent_rh", "AM2315"),
    SensorDescriptor(SENSOR_RADIATION, "w_per_m2", "Davis-6450"),
    SensorDescriptor(SENSOR_RAINFALL, "mm", "tipping-bucket"),
    SensorDescriptor(SENSOR_WIND_SPEED, "km_per_h", "cup-anemometer"),
    SensorDescriptor(SENSOR_WIND_DIR, "compass_16", "16-point-vane"),
)

# Default carve-up of the six variables across the three radios.
DEFAULT_PROTOCOL_MAP = {
    SENSOR_TEMPERATURE: ProtocolId.WIFI,
    SENSOR_HUMIDITY: ProtocolId.WIFI,
    SENSOR_RADIATION: ProtocolId.ZIGBEE,
    SENSOR_RAINFALL: ProtocolId.ZIGBEE,
    SENSOR_WIND_SPEED: ProtocolId.BLUETOOTH,
    SENSOR_WIND_DIR: ProtocolId.BLUETOOTH,
}


def standard_station(node_id: str, gps: GpsCoordinate,
                     capture_interval: float = 6.0,
                     protocol_map: Optional[dict[str, ProtocolId]] = None,
                     ) -> NodeDescriptor:
    """The canonical six-sensor weather station descriptor."""
    return NodeDescriptor(
        node_id=node_id,
        gps=gps,
        sensors=STANDARD_SENSORS,
        capture_interval=capture_interval,
        protocol_assignment=dict(protocol_map or DEFAULT_PROTOCOL_MAP),
    )


def measure(sensor_id: str, sample: WeatherSample) -> float:
    """One sensor's reported value for a weather snapshot.

    Where the hardware has a byte protocol the value round-trips through
    encode and decode, so the emitted number carries the real device
    quantization (0.1 steps for temperature and humidity, whole sectors
    for the vane).
    """
    if sensor_id in (SENSOR_TEMPERATURE, SENSOR_HUMIDITY):
        t, rh = am2315_decode(am2315_encode(sample.temperature, sample.humidity))
        return t if sensor_id == SENSOR_TEMPERATURE else rh
    if sensor_id == SENSOR_RADIATION:
        volts = min(DAVIS_MAX_VOLTS, sample.irradiance * DAVIS_VOLTS_PER_WM2)
        return davis6450_convert(volts)
    if sensor_id == SENSOR_RAINFALL:
        return rain_tips_to_mm(sample.rain_tips)
    if sensor_id == SENSOR_WIND_SPEED:
        # Counter window is one second per the sample contract.
        return anemometer_to_kmh(sample.wind_closures, 1.0)
    if sensor_id == SENSOR_WIND_DIR:
        return float(vane_sector(sample.vane_voltage, sample.vane_vref))
    raise ValueError(f"no measurement defined for sensor {sensor_id!r}")


class SensorNode:
    """Announce once, then emit one record per sensor every interval.

    Configuration updates arrive as raw cfg payloads from poll_config and
    take effect at the top of the next tick, so a changed interval shows
    up within one emission gap.
    """

    def __init__(
        self,
        desc: NodeDescriptor,
        seed: int,
        epoch: float,
        clock: Callable[[], float],
        send: Callable[[ProtocolId, bytes], None],
        poll_config: Optional[Callable[[], list[bytes]]] = None,
        on_problem: Optional[Callable[[str], None]] = None,
    ):
        self.desc = desc
        self.seed = seed
        self.epoch = epoch
        self.clock = clock
        self._send = send
        self._poll_config = poll_config
        self._on_problem = on_problem
        self.emissions = 0
        self.records_sent = 0
        self.announced = False
        self.emission_times: list[float] = []

    def _problem(self, message: str):
        if self._on_problem is not None:
            self._on_problem(message)

    def _now_utc(self) -> datetime:
        return datetime.fromtimestamp(self.clock(), tz=timezone.utc)

    def announce(self):
        """Send the descriptor as the node's first uplink record."""
        payload = encode_announce(self.desc, self._now_utc())
        proto = min(self.desc.protocol_assignment.values(),
                    key=lambda p: p.value)
        self._send(proto, payload)
        self.announced = True

    def apply_config(self, payload: bytes):
        try:
            updated = NodeDescriptor.from_wire(json.loads(payload))
        except (ValueError, ModelError) as exc:
            self._problem(f"rejected config update: {exc}")
            return
        if updated.node_id != self.desc.node_id:
            self._problem(f"config for foreign node {updated.node_id!r} ignored")
            return
        self.desc = updated

    def tick(self):
        """One capture cycle: apply pending config, sample, emit."""
        if self._poll_config is not None:
            for payload in self._poll_config():
                self.apply_config(payload)
        now = self.clock()
        sample = synth_weather(max(0.0, now - self.epoch), self.seed)
        when = self._now_utc()
        for sensor in self.desc.sensors:
            proto = self.desc.protocol_for(sensor.sensor_id)
            if proto is None:
                self._problem(f"sensor {sensor.sensor_id!r} has no protocol")
                continue
            rec = NodeUplinkRecord(self.desc.node_id, sensor.sensor_id,
                                   measure(sensor.sensor_id, sample), when)
            self._send(proto, encode_record(rec))
            self.records_sent += 1
        self.emissions += 1
        self.emission_times.append(now)

    @property
    def interval(self) -> float:
        return self.desc.capture_interval


class NodeRunner:
    """Real-clock host for one SensorNode over TCP transports.

    Opens one persistent frame link per protocol in use, subscribes to the
    node's cfg topic on the gateway's broker, then ticks on a drift-free
    schedule until stopped.
    """

    def __init__(
        self,
        desc: NodeDescriptor,
        seed: int,
        gateway_host: str,
        transport_ports: dict[ProtocolId, int],
        broker_port: int,
        gate_id: str,
        epoch: Optional[float] = None,
        connect_attempts: int = 20,
        on_problem: Optional[Callable[[str], None]] = None,
    ):
        self._host = gateway_host
        self._ports = transport_ports
        self._broker_port = broker_port
        self._cfg_topic = f"cfg/{gate_id}/{desc.node_id}"
        self._attempts = connect_attempts
        self._links: dict[ProtocolId, object] = {}
        self._links_lock = threading.Lock()
        self._mqtt: Optional[SocketMqttClient] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.node = SensorNode(
            desc, seed,
            epoch=epoch if epoch is not None else time.time(),
            clock=time.time,
            send=self._send_frame,
            poll_config=self._poll_config,
            on_problem=on_problem,
        )

    def _link_for(self, proto: ProtocolId):
        with self._links_lock:
            link = self._links.get(proto)
            if link is None:
                try:
                    link = connect_frame_link(
                        proto, self._host, self._ports[proto],
                        attempts=self._attempts)
                except LinkUnavailable as exc:
                    raise GatewayUnreachable(str(exc)) from exc
                self._links[proto] = link
            return link

    def _send_frame(self, proto: ProtocolId, payload: bytes):
        self._link_for(proto).send(RawFrame(proto, payload))

    def _poll_config(self) -> list[bytes]:
        if self._mqtt is None:
            return []
        return [pub.payload for pub in self._mqtt.poll()
                if pub.topic == self._cfg_topic]

    def start(self):
        backoff = 0.2
        for attempt in range(self._attempts):
            try:
                self._mqtt = SocketMqttClient(
                    self._host, self._broker_port,
                    client_id=f"node-{self.node.desc.node_id}")
                break
            except (OSError, MqttError):
                if attempt == self._attempts - 1:
                    raise GatewayUnreachable(
                        f"broker at {self._host}:{self._broker_port} unreachable")
                time.sleep(backoff)
                backoff = min(backoff * 2, 2.0)
        self._mqtt.subscribe(self._cfg_topic, qos=1).result(timeout=5.0)
        self.node.announce()
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name=f"node-{self.node.desc.node_id}")
        self._thread.start()

    def _run(self):
        next_at = time.time() + self.node.interval
        while not self._stop.is_set():
            delay = next_at - time.time()
            if delay > 0 and self._stop.wait(min(delay, 0.2)):
                break
            if time.time() < next_at:
                continue
            try:
                self.node.tick()
            except (LinkError, GatewayUnreachable, MqttError) as exc:
                self.node._problem(f"tick failed: {exc}")
            next_at += self.node.interval

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
        with self._links_lock:
            for link in self._links.values():
                link.close()
            self._links.clear()
        if self._mqtt is not None:
            self._mqtt.close()
            self._mqtt = None
