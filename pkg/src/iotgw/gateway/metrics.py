"""Byte-level throughput accounting and host resource sampling."""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import psutil

from ..model import ProtocolId

UNKNOWN_NODE = "(unknown)"

# Samples older than this are discarded; queries must use smaller windows.
DEFAULT_RETENTION = 900.0


class SamplingUnavailable(RuntimeError):
    pass


class ThroughputTracker:
    """Sliding-window byte counts per (protocol, node).

    Byte sums are integers, so the aggregate over nodes equals the sum of
    per-node values exactly; kbps is derived as bytes * 8 / 1000 / window.
    """

    def __init__(self, clock: Callable[[], float],
                 retention: float = DEFAULT_RETENTION):
        self._clock = clock
        self._retention = retention
        self._lock = threading.Lock()
        self._samples: dict[tuple[ProtocolId, str], deque[tuple[float, int]]] = {}
        # Lifetime (frames, bytes) per key; unlike the rings, never pruned.
        self._lifetime: dict[tuple[ProtocolId, str], list[int]] = {}

    def record(self, protocol: ProtocolId, node_id: Optional[str], nbytes: int):
        if nbytes < 0:
            raise ValueError(f"byte count must be >= 0, got {nbytes}")
        key = (protocol, node_id if node_id else UNKNOWN_NODE)
        now = self._clock()
        with self._lock:
            ring = self._samples.setdefault(key, deque())
            ring.append((now, nbytes))
            self._prune(ring, now)
            life = self._lifetime.setdefault(key, [0, 0])
            life[0] += 1
            life[1] += nbytes

    def _prune(self, ring: deque, now: float):
        horizon = now - self._retention
        while ring and ring[0][0] <= horizon:
            ring.popleft()

    def bytes_in_window(self, protocol: ProtocolId, node_id: Optional[str],
                        window: float) -> int:
        """Bytes received in the half-open interval (now - window, now]."""
        if window <= 0:
            raise ValueError(f"window must be positive, got {window}")
        now = self._clock()
        cutoff = now - window
        total = 0
        with self._lock:
            for (proto, node), ring in self._samples.items():
                if proto != protocol:
                    continue
                if node_id is not None and node != node_id:
                    continue
                total += sum(n for ts, n in ring if cutoff < ts <= now)
        return total

    def kbps(self, protocol: ProtocolId, node_id: Optional[str] = None,
             window: float = 6.0) -> float:
        return self.bytes_in_window(protocol, node_id, window) * 8 / 1000 / window

    def nodes_seen(self, protocol: ProtocolId) -> list[str]:
        with self._lock:
            return sorted({node for (proto, node) in self._samples
                           if proto == protocol})

    def lifetime_totals(self) -> dict[tuple[str, str], tuple[int, int]]:
        """(protocol, node) -> (frames, bytes) over the tracker's whole life."""
        with self._lock:
            return {(proto.value, node): (life[0], life[1])
                    for (proto, node), life in self._lifetime.items()}

    def snapshot(self, window: float = 6.0) -> dict:
        """Per-protocol kbps plus per-node breakdown, one consistent view."""
        out = {}
        for protocol in ProtocolId:
            per_node = {node: self.kbps(protocol, node, window)
                        for node in self.nodes_seen(protocol)}
            out[protocol.value] = {
                "kbps": self.kbps(protocol, None, window),
                "nodes": per_node,
            }
        return out


@dataclass(frozen=True)
class HostStats:
    cpu_percent: float
    free_memory_bytes: int
    sampled_at: float

    def to_wire(self) -> dict:
        return {
            "cpu-percent": self.cpu_percent,
            "free-memory-bytes": self.free_memory_bytes,
            "sampled-at": self.sampled_at,
        }


class HostStatsSampler:
    """Periodic CPU / free-memory snapshots kept as a bounded series."""

    def __init__(self, clock: Callable[[], float], period: float = 10.0,
                 keep: int = 1000):
        self._clock = clock
        self.period = period
        self._keep = keep
        self._lock = threading.Lock()
        self._series: deque[HostStats] = deque(maxlen=keep)
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        psutil.cpu_percent(interval=None)  # prime the delta-based counter

    def sample(self) -> HostStats:
        try:
            cpu = psutil.cpu_percent(interval=None)
            free = psutil.virtual_memory().available
        except (psutil.Error, OSError) as exc:
            raise SamplingUnavailable(str(exc)) from exc
        stats = HostStats(cpu_percent=min(100.0, max(0.0, float(cpu))),
                          free_memory_bytes=int(free),
                          sampled_at=self._clock())
        with self._lock:
            self._series.append(stats)
        return stats

    @property
    def series(self) -> list[HostStats]:
        with self._lock:
            return list(self._series)

    @property
    def latest(self) -> Optional[HostStats]:
        with self._lock:
            return self._series[-1] if self._series else None

    def start(self):
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="host-stats",
                                        daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _loop(self):
        while not self._stop.wait(self.period):
            try:
                self.sample()
            except SamplingUnavailable:
                pass  # gap in the series; next period tries again
