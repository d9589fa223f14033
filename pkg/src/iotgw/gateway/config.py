"""Gateway configuration: one JSON document, validated on load."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..model import ProtocolId


class ConfigError(ValueError):
    pass


def _port(value, key: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer port")
    if not 0 <= value <= 65535:
        raise ConfigError(f"{key} out of range: {value}")
    return value


@dataclass(frozen=True)
class GatewayConfig:
    gate_id: str
    network_id: str
    listen_host: str = "127.0.0.1"
    transport_ports: dict = field(default_factory=lambda: {
        ProtocolId.WIFI: 9001,
        ProtocolId.BLUETOOTH: 9002,
        ProtocolId.ZIGBEE: 9003,
    })
    broker_port: int = 1883
    cloud_host: str = "127.0.0.1"
    cloud_port: int = 2883
    api_port: int = 8080
    api_token: str = "change-me"
    retry_interval: float = 2.0
    retry_budget: int = 5
    throughput_window: float = 6.0
    stats_period: float = 10.0
    readings_log: str = "readings.log"
    max_log_bytes: Optional[int] = None
    uplink_buffer: int = 10000

    def __post_init__(self):
        if not self.gate_id:
            raise ConfigError("gate-id must be non-empty")
        if not self.network_id:
            raise ConfigError("network-id must be non-empty")
        if set(self.transport_ports) != set(ProtocolId):
            raise ConfigError("transport ports must cover wifi, bluetooth, zigbee")
        if self.retry_interval <= 0:
            raise ConfigError("retry-interval must be positive")
        if self.retry_budget < 1:
            raise ConfigError("retry-budget must be at least 1")
        if self.throughput_window <= 0:
            raise ConfigError("throughput-window must be positive")
        if self.stats_period <= 0:
            raise ConfigError("stats-period must be positive")
        if not self.api_token:
            raise ConfigError("api-token must be non-empty")

    @classmethod
    def from_wire(cls, doc: dict) -> "GatewayConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {
            "gate-id", "network-id", "listen-host", "wifi-port",
            "bluetooth-port", "zigbee-port", "broker-port", "cloud-host",
            "cloud-port", "api-port", "api-token", "retry-interval",
            "retry-budget", "throughput-window", "stats-period",
            "readings-log", "max-log-bytes", "uplink-buffer",
        }
        for key in doc:
            if key not in known:
                raise ConfigError(f"unknown configuration key: {key}")
        for key in ("gate-id", "network-id"):
            if key not in doc:
                raise ConfigError(f"missing configuration key: {key}")
            if not isinstance(doc[key], str):
                raise ConfigError(f"{key} must be a string")

        kwargs: dict = {"gate_id": doc["gate-id"], "network_id": doc["network-id"]}
        if "listen-host" in doc:
            kwargs["listen_host"] = str(doc["listen-host"])
        ports = dict(cls.__dataclass_fields__["transport_ports"].default_factory())
        for proto, key in ((ProtocolId.WIFI, "wifi-port"),
                           (ProtocolId.BLUETOOTH, "bluetooth-port"),
                           (ProtocolId.ZIGBEE, "zigbee-port")):
            if key in doc:
                ports[proto] = _port(doc[key], key)
        kwargs["transport_ports"] = ports
        for attr, key in (("broker_port", "broker-port"),
                          ("cloud_port", "cloud-port"),
                          ("api_port", "api-port")):
            if key in doc:
                kwargs[attr] = _port(doc[key], key)
        if "cloud-host" in doc:
            kwargs["cloud_host"] = str(doc["cloud-host"])
        if "api-token" in doc:
            if not isinstance(doc["api-token"], str):
                raise ConfigError("api-token must be a string")
            kwargs["api_token"] = doc["api-token"]
        for attr, key in (("retry_interval", "retry-interval"),
                          ("throughput_window", "throughput-window"),
                          ("stats_period", "stats-period")):
            if key in doc:
                raw = doc[key]
                if not isinstance(raw, (int, float)) or isinstance(raw, bool):
                    raise ConfigError(f"{key} must be a number")
                kwargs[attr] = float(raw)
        for attr, key in (("retry_budget", "retry-budget"),
                          ("uplink_buffer", "uplink-buffer")):
            if key in doc:
                raw = doc[key]
                if not isinstance(raw, int) or isinstance(raw, bool):
                    raise ConfigError(f"{key} must be an integer")
                kwargs[attr] = raw
        if "readings-log" in doc:
            kwargs["readings_log"] = str(doc["readings-log"])
        if "max-log-bytes" in doc:
            raw = doc["max-log-bytes"]
            if raw is not None and (not isinstance(raw, int) or isinstance(raw, bool)):
                raise ConfigError("max-log-bytes must be an integer or null")
            kwargs["max_log_bytes"] = raw
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_wire(self) -> dict:
        return {
            "gate-id": self.gate_id,
            "network-id": self.network_id,
            "listen-host": self.listen_host,
            "wifi-port": self.transport_ports[ProtocolId.WIFI],
            "bluetooth-port": self.transport_ports[ProtocolId.BLUETOOTH],
            "zigbee-port": self.transport_ports[ProtocolId.ZIGBEE],
            "broker-port": self.broker_port,
            "cloud-host": self.cloud_host,
            "cloud-port": self.cloud_port,
            "api-port": self.api_port,
            "api-token": self.api_token,
            "retry-interval": self.retry_interval,
            "retry-budget": self.retry_budget,
            "throughput-window": self.throughput_window,
            "stats-period": self.stats_period,
            "readings-log": self.readings_log,
            "max-log-bytes": self.max_log_bytes,
            "uplink-buffer": self.uplink_buffer,
        }


def load_config(path: str | Path) -> GatewayConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from exc
    return GatewayConfig.from_wire(doc)
