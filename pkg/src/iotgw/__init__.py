"""Multiprotocol IoT gateway with a simulated wireless weather-station fleet.

The package splits into the domain model (readings, nodes, alarm rules),
three transport framings, sensor conversions, an MQTT 3.1.1 subset with an
embedded broker, the gateway service with its REST/stream API, and a
scenario runner that drives simulated nodes under a virtual or real clock.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    GatewayIdentity,
    GpsCoordinate,
    NodeDescriptor,
    NormalizedReading,
    ProtocolId,
    SensorDescriptor,
)
