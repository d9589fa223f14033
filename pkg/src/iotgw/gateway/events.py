"""Fan-out event bus feeding the server-push stream and scenario reports.

Subscribers each get their own bounded queue; a slow consumer loses its
oldest events rather than stalling the ingest pipeline.
"""

from __future__ import annotations

import json
import queue
import threading
from typing import Optional


class Subscription:
    def __init__(self, bus: "EventBus", maxsize: int):
        self._bus = bus
        self._queue: "queue.Queue[dict]" = queue.Queue(maxsize=maxsize)
        self.dropped = 0

    def get(self, timeout: Optional[float] = None) -> Optional[dict]:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> list[dict]:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def _offer(self, event: dict):
        while True:
            try:
                self._queue.put_nowait(event)
                return
            except queue.Full:
                try:
                    self._queue.get_nowait()
                    self.dropped += 1
                except queue.Empty:
                    pass

    def close(self):
        self._bus.unsubscribe(self)


class EventBus:
    def __init__(self, queue_size: int = 1000):
        self._queue_size = queue_size
        self._lock = threading.Lock()
        self._subs: list[Subscription] = []
        self._seq = 0

    def subscribe(self, queue_size: Optional[int] = None) -> Subscription:
        sub = Subscription(self, queue_size or self._queue_size)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription):
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, kind: str, payload: dict):
        event = {"event": kind, "seq": None, **payload}
        with self._lock:
            self._seq += 1
            event["seq"] = self._seq
            subs = list(self._subs)
        for sub in subs:
            sub._offer(event)

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subs)


def format_sse(event: dict) -> bytes:
    """One event as a server-sent-events message block."""
    kind = event.get("event", "message")
    data = json.dumps(event, separators=(",", ":"))
    return f"event: {kind}\ndata: {data}\n\n".encode("utf-8")
