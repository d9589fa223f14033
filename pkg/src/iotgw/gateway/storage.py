"""Append-only reading log: one canonical JSON object per line."""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Callable, Optional

from ..model import ModelError, NormalizedReading, parse_reading, serialize_reading


class StorageError(RuntimeError):
    pass


class StorageFull(StorageError):
    def __init__(self, limit: int):
        super().__init__(f"reading log reached its {limit}-byte limit")
        self.limit = limit


class CorruptLine(ValueError):
    """A log line that failed to parse; carries its 1-based line number."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class ReadingLog:
    """File-backed append-only store of normalized readings.

    Appends are flushed per call so a concurrent query (or a crash) sees
    every completed write. max_bytes, when set, rejects appends that would
    grow the file past the limit.
    """

    def __init__(self, path: str | Path, max_bytes: Optional[int] = None):
        self.path = Path(path)
        self.max_bytes = max_bytes
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch(exist_ok=True)
        self._size = self.path.stat().st_size
        self._fh = self.path.open("ab")

    def append(self, reading: NormalizedReading):
        line = serialize_reading(reading) + b"\n"
        with self._lock:
            if self._fh.closed:
                raise StorageError("reading log is closed")
            if self.max_bytes is not None and self._size + len(line) > self.max_bytes:
                raise StorageFull(self.max_bytes)
            self._fh.write(line)
            self._fh.flush()
            self._size += len(line)

    @property
    def size_bytes(self) -> int:
        with self._lock:
            return self._size

    def query(self, since: float = 0.0, node_id: Optional[str] = None,
              sensor_id: Optional[str] = None,
              on_corrupt: Optional[Callable[[CorruptLine], None]] = None,
              ) -> list[NormalizedReading]:
        """Readings at or after `since` (epoch seconds), in append order.

        Unparseable lines are skipped; each is reported to on_corrupt.
        """
        out = []
        with self.path.open("rb") as fh:
            for number, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    reading = parse_reading(raw)
                except (ModelError, ValueError) as exc:
                    if on_corrupt is not None:
                        on_corrupt(CorruptLine(number, str(exc)))
                    continue
                if reading.date.timestamp() < since:
                    continue
                if node_id is not None and reading.node_id != node_id:
                    continue
                if sensor_id is not None and reading.sensor_id != sensor_id:
                    continue
                out.append(reading)
        return out

    def close(self):
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
