from datetime import datetime, timezone

import pytest

from iotgw.gateway.storage import CorruptLine, ReadingLog, StorageFull
from iotgw.model import (
    GpsCoordinate,
    NormalizedReading,
    ProtocolId,
    serialize_reading,
)


def make_reading(sensor="temp", node="n1", value=21.5, epoch=1577836800):
    return NormalizedReading(
        node_id=node,
        gps=GpsCoordinate(40.0, -3.0),
        protocol=ProtocolId.WIFI,
        date=datetime.fromtimestamp(epoch, tz=timezone.utc),
        sensor_id=sensor,
        value=value,
        magnitude="celsius",
        gate_id="gw1",
        network_id="net1",
    )


@pytest.fixture
def log(tmp_path):
    with ReadingLog(tmp_path / "readings.log") as log:
        yield log


class TestAppendQuery:
    def test_round_trip(self, log):
        r = make_reading()
        log.append(r)
        assert log.query() == [r]

    def test_append_order_preserved(self, log):
        readings = [make_reading(value=float(i), epoch=1577836800 + i)
                    for i in range(20)]
        for r in readings:
            log.append(r)
        assert log.query() == readings

    def test_since_filter_is_inclusive(self, log):
        early = make_reading(epoch=1577836800)
        late = make_reading(epoch=1577836900)
        log.append(early)
        log.append(late)
        assert log.query(since=1577836900) == [late]
        assert log.query(since=1577836800) == [early, late]

    def test_node_and_sensor_filters(self, log):
        a = make_reading(sensor="temp", node="n1")
        b = make_reading(sensor="humidity", node="n1")
        c = make_reading(sensor="temp", node="n2")
        for r in (a, b, c):
            log.append(r)
        assert log.query(node_id="n1") == [a, b]
        assert log.query(sensor_id="temp") == [a, c]
        assert log.query(node_id="n2", sensor_id="temp") == [c]

    def test_survives_reopen(self, tmp_path):
        path = tmp_path / "readings.log"
        r = make_reading()
        with ReadingLog(path) as log:
            log.append(r)
        with ReadingLog(path) as log:
            log.append(make_reading(value=2.0))
            assert len(log.query()) == 2


class TestLimits:
    def test_storage_full(self, tmp_path):
        line = serialize_reading(make_reading()) + b"\n"
        log = ReadingLog(tmp_path / "r.log", max_bytes=len(line))
        log.append(make_reading())
        with pytest.raises(StorageFull):
            log.append(make_reading())
        # the stored prefix is untouched
        assert len(log.query()) == 1
        log.close()

    def test_append_after_close_fails(self, tmp_path):
        log = ReadingLog(tmp_path / "r.log")
        log.close()
        with pytest.raises(Exception):
            log.append(make_reading())


class TestCorruption:
    def test_corrupt_line_reported_and_skipped(self, tmp_path):
        path = tmp_path / "r.log"
        good = make_reading()
        with ReadingLog(path) as log:
            log.append(good)
        # Truncate a duplicated second line mid-JSON.
        raw = path.read_bytes()
        path.write_bytes(raw + raw[: len(raw) // 2].rstrip(b"\n") + b"\n" + raw)

        seen = []
        with ReadingLog(path) as log:
            out = log.query(on_corrupt=seen.append)
        assert out == [good, good]
        assert len(seen) == 1
        assert isinstance(seen[0], CorruptLine)
        assert seen[0].line_number == 2

    def test_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "r.log"
        with ReadingLog(path) as log:
            log.append(make_reading())
        path.write_bytes(b"\n" + path.read_bytes() + b"\n\n")
        with ReadingLog(path) as log:
            assert len(log.query()) == 1
