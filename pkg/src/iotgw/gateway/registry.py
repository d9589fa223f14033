"""Node registry: descriptors plus last-seen bookkeeping."""

from __future__ import annotations

import threading
from typing import Callable, Optional

from ..model import ModelError, NodeDescriptor, ProtocolId
from ..normalize import UnknownSensor


class RegistryError(ValueError):
    pass


class UnknownNode(RegistryError):
    def __init__(self, node_id: str):
        super().__init__(f"node not registered: {node_id!r}")
        self.node_id = node_id


class InvalidInterval(RegistryError):
    def __init__(self, seconds):
        super().__init__(f"capture interval must be positive, got {seconds!r}")
        self.seconds = seconds


class InvalidDescriptor(RegistryError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class Registry:
    """Thread-safe map of node_id to (descriptor, last_seen).

    Mutations go through descriptor-copying helpers so invariants hold on
    every stored value; lookups return the frozen descriptors directly.
    """

    def __init__(self, clock: Callable[[], float]):
        self._clock = clock
        self._lock = threading.Lock()
        self._nodes: dict[str, NodeDescriptor] = {}
        self._last_seen: dict[str, float] = {}

    def upsert(self, desc: NodeDescriptor) -> NodeDescriptor:
        """Insert or replace; re-announcing an identical descriptor is a no-op."""
        if not isinstance(desc, NodeDescriptor):
            raise InvalidDescriptor(f"expected a node descriptor, got {type(desc).__name__}")
        with self._lock:
            self._nodes[desc.node_id] = desc
            self._last_seen[desc.node_id] = self._clock()
        return desc

    def get(self, node_id: str) -> NodeDescriptor:
        with self._lock:
            try:
                return self._nodes[node_id]
            except KeyError:
                raise UnknownNode(node_id) from None

    def find(self, node_id: str) -> Optional[NodeDescriptor]:
        with self._lock:
            return self._nodes.get(node_id)

    def touch(self, node_id: str):
        with self._lock:
            if node_id in self._nodes:
                self._last_seen[node_id] = self._clock()

    def last_seen(self, node_id: str) -> Optional[float]:
        with self._lock:
            return self._last_seen.get(node_id)

    def set_interval(self, node_id: str, seconds: float) -> NodeDescriptor:
        if not isinstance(seconds, (int, float)) or isinstance(seconds, bool) \
                or not seconds > 0:
            raise InvalidInterval(seconds)
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(node_id)
            try:
                updated = self._nodes[node_id].with_interval(float(seconds))
            except ModelError as exc:
                raise InvalidInterval(seconds) from exc
            self._nodes[node_id] = updated
            return updated

    def assign_protocol(self, node_id: str, sensor_id: str,
                        protocol: ProtocolId) -> NodeDescriptor:
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(node_id)
            desc = self._nodes[node_id]
            if desc.sensor(sensor_id) is None:
                raise UnknownSensor(sensor_id)
            updated = desc.with_assignment(sensor_id, protocol)
            self._nodes[node_id] = updated
            return updated

    def all_nodes(self) -> list[NodeDescriptor]:
        with self._lock:
            return [self._nodes[k] for k in sorted(self._nodes)]

    def __contains__(self, node_id: str) -> bool:
        with self._lock:
            return node_id in self._nodes

    def __len__(self) -> int:
        with self._lock:
            return len(self._nodes)
