"""End-to-end acceptance suite.

One test per shipping criterion; run with -v for a one-line-per-criterion
checklist. Tolerances are pinned here and nowhere else: sensor oracles to
1e-9 relative, throughput additivity to 1e-12 relative, counts exact.
"""

import json
import random
import time

import pytest

from iotgw.framing import ChecksumMismatch, Deframer, zb_encode, zb_decode
from iotgw.gateway.metrics import ThroughputTracker
from iotgw.model import ProtocolId
from iotgw.mqtt.broker import BrokerCore
from iotgw.mqtt.packets import (
    Connack,
    Connect,
    Disconnect,
    Pingreq,
    Pingresp,
    Puback,
    Publish,
    Suback,
    Subscribe,
    decode_packet,
    decode_remaining_length,
    encode_packet,
    encode_remaining_length,
)
from iotgw.sensors import (
    COMPASS_POINTS,
    anemometer_to_kmh,
    davis6450_convert,
    rain_tips_to_mm,
    vane_direction,
)
from iotgw.sim.clock import VirtualClock
from iotgw.sim.scenario import ScenarioSpec, run_scenario

TWO_STATION_DOC = {
    "name": "two-station-weather",
    "duration": 480,
    "seed": 42,
    "nodes": [
        {"node-id": "n1", "gps": "40.4165,-3.70256"},
        {"node-id": "n2", "gps": "40.4170,-3.70310"},
    ],
}


def ok(line: str):
    print(f"PASS  {line}")


@pytest.fixture(scope="module")
def two_station_run():
    spec = ScenarioSpec.from_wire(TWO_STATION_DOC)
    started = time.perf_counter()
    report = run_scenario(spec, virtual=True)
    wall = time.perf_counter() - started
    return report, wall


# -- framing ---------------------------------------------------------------


def _corpus(rng: random.Random, count: int) -> list[bytes]:
    """Payloads that lean on the troublesome byte values: the serial
    delimiter 0xC0, its escape 0xDB, and the 0x7E start marker."""
    payloads = [
        bytes([0xC0]),
        bytes([0xDB]),
        bytes([0x7E]),
        bytes([0xC0, 0xDB, 0xDC, 0xDD]) * 16,
        bytes([0xDB, 0xC0]) * 333,
        b"\x00" * 4,
        b"\xff" * 4,
        rng.randbytes(65535),  # the largest legal payload
    ]
    while len(payloads) < count:
        roll = rng.random()
        if roll < 0.80:
            size = rng.randint(1, 128)
        elif roll < 0.98:
            size = rng.randint(129, 1024)
        else:
            size = rng.randint(1025, 4096)
        payloads.append(rng.randbytes(size))
    return payloads


def test_framing_codecs_round_trip_ten_thousand_chunked_payloads_each():
    from iotgw.framing import ENCODERS

    rng = random.Random(0xF4A)
    started = time.perf_counter()
    for proto in ProtocolId:
        payloads = _corpus(rng, 10_000)
        stream = b"".join(ENCODERS[proto](p) for p in payloads)
        deframer = Deframer(proto)
        decoded: list[bytes] = []
        consumed = 0
        pos = 0
        while pos < len(stream):
            n = rng.randint(1, 4096)
            for frame, used in deframer.feed(stream[pos:pos + n]):
                decoded.append(frame.payload)
                consumed += used
            pos += n
        assert decoded == payloads, f"{proto.value} corrupted a payload"
        assert consumed == len(stream)
        assert deframer.pending == 0
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"framing round-trips took {elapsed:.1f}s"
    ok(f"3 codecs x 10000 payloads round-tripped in {elapsed:.2f}s")


def test_zigbee_checksum_flags_every_single_byte_corruption():
    payload = bytes(range(0x10, 0x20))  # fixed 16-byte frame body
    frame = zb_encode(payload)
    body_start = 3  # start byte + 2 length bytes
    failures = 0
    for offset in range(len(payload)):
        original = frame[body_start + offset]
        for value in range(256):
            if value == original:
                continue
            corrupted = (frame[:body_start + offset] + bytes([value])
                         + frame[body_start + offset + 1:])
            with pytest.raises(ChecksumMismatch):
                zb_decode(corrupted)
            failures += 1
    assert failures == 16 * 255
    ok("zigbee checksum caught all 4080 single-byte corruptions")


# -- mqtt ------------------------------------------------------------------


def _random_topic(rng: random.Random) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789-_"
    return "/".join("".join(rng.choices(alphabet, k=rng.randint(1, 8)))
                    for _ in range(rng.randint(1, 4)))


def test_mqtt_packets_round_trip_and_varint_fixtures():
    assert encode_remaining_length(0) == bytes([0x00])
    assert encode_remaining_length(128) == bytes([0x80, 0x01])
    assert encode_remaining_length(321) == bytes([0xC1, 0x02])
    for n in (0, 128, 321, 16_383, 16_384, 268_435_455):
        value, used = decode_remaining_length(encode_remaining_length(n))
        assert (value, used) == (n, len(encode_remaining_length(n)))

    rng = random.Random(0x3117)
    packets = []
    for _ in range(250):
        qos = rng.randint(0, 1)
        packets.extend([
            Connect(client_id=_random_topic(rng).replace("/", ""),
                    keep_alive=rng.randint(0, 65535)),
            Connack(return_code=rng.randint(0, 5)),
            Publish(topic=_random_topic(rng),
                    payload=rng.randbytes(rng.randint(0, 256)),
                    qos=qos,
                    packet_id=rng.randint(1, 65535) if qos else None,
                    retain=rng.random() < 0.5,
                    dup=(qos == 1 and rng.random() < 0.5)),
            Puback(packet_id=rng.randint(1, 65535)),
            Subscribe(packet_id=rng.randint(1, 65535),
                      topics=tuple((_random_topic(rng), rng.randint(0, 1))
                                   for _ in range(rng.randint(1, 4)))),
            Suback(packet_id=rng.randint(1, 65535),
                   granted=tuple(rng.choice((0, 1, 0x80))
                                 for _ in range(rng.randint(1, 4)))),
            Pingreq(),
            Pingresp(),
            Disconnect(),
        ])
    stream = b"".join(encode_packet(p) for p in packets)
    decoded = []
    while stream:
        packet, used = decode_packet(stream)
        decoded.append(packet)
        stream = stream[used:]
    assert decoded == packets
    ok(f"{len(packets)} packets across all 9 variants round-tripped")


class _Peer:
    """Hand-driven broker session with direct control over acknowledgments."""

    def __init__(self, core: BrokerCore, client_id: str):
        self._rx = bytearray()
        self.session = core.attach(send=self._rx.extend, label=client_id)
        self.send(Connect(client_id))
        assert self.packets() == [Connack(return_code=0)]

    def send(self, packet):
        self.session.feed(encode_packet(packet))

    def packets(self):
        out = []
        while self._rx:
            packet, used = decode_packet(bytes(self._rx))
            del self._rx[:used]
            out.append(packet)
        return out


def test_broker_retained_redelivery_and_overlap_semantics():
    clock = VirtualClock(start=0.0)
    core = BrokerCore(clock=clock.now, retry_interval=2.0, retry_budget=5)

    # Retained config reaches a subscriber that arrives afterwards.
    core.inject_publish("cfg/gw1/n1", b"interval=6", qos=1, retain=True)
    late = _Peer(core, "late")
    late.send(Subscribe(packet_id=1, topics=(("cfg/gw1/+", 1),)))
    arrived = late.packets()
    assert isinstance(arrived[0], Suback)
    assert [(p.payload, p.retain) for p in arrived[1:]] == \
        [(b"interval=6", True)]

    # Withheld puback: redelivery with dup set once the retry interval passes.
    sub = _Peer(core, "sub")
    sub.send(Subscribe(packet_id=2, topics=(("alerts", 1),)))
    sub.packets()
    core.inject_publish("alerts", b"hot", qos=1)
    first = sub.packets()
    assert [(p.dup, p.qos) for p in first] == [(False, 1)]
    pid = first[0].packet_id
    core.tick()
    assert sub.packets() == []  # not yet due
    clock._now = 2.0
    core.tick()
    again = sub.packets()
    assert [(p.dup, p.packet_id) for p in again] == [(True, pid)]
    sub.send(Puback(packet_id=pid))
    clock._now = 10.0
    core.tick()
    assert sub.packets() == []

    # Overlapping filters still deliver one copy per session.
    fan = _Peer(core, "fan")
    fan.send(Subscribe(packet_id=3, topics=(("a/+", 1), ("a/#", 1))))
    fan.packets()
    core.inject_publish("a/b", b"m", qos=0)
    assert len(fan.packets()) == 1
    ok("broker retained / dup-redelivery / overlap dedup all as scripted")


# -- sensors ---------------------------------------------------------------


def test_sensor_conversion_oracles_exact():
    assert davis6450_convert(0.00167) == pytest.approx(1.0, rel=1e-9)
    assert rain_tips_to_mm(1) == pytest.approx(0.2794, rel=1e-9)
    assert anemometer_to_kmh(1, 1) == pytest.approx(2.4, rel=1e-9)

    vref = 3.3
    centers = [vane_direction(k * vref / 16, vref) for k in range(16)]
    assert centers == list(COMPASS_POINTS)
    # nearest-sector rounding at the boundaries, with wrap back to north
    assert vane_direction(3.49 * vref / 16, vref) == COMPASS_POINTS[3]
    assert vane_direction(3.51 * vref / 16, vref) == COMPASS_POINTS[4]
    assert vane_direction(15.51 * vref / 16, vref) == COMPASS_POINTS[0]
    assert vane_direction(vref, vref) == COMPASS_POINTS[0]
    ok("sensor conversion oracles exact to 1e-9 relative")


# -- end-to-end ------------------------------------------------------------


def test_two_station_run_delivers_every_reading(two_station_run):
    report, wall = two_station_run
    totals = report["totals"]
    assert totals["readings-persisted"] == 960
    assert totals["uplink-publishes"] == 960
    assert totals["sink-received"] == 960
    for proto in ("wifi", "bluetooth", "zigbee"):
        assert report["per-protocol"][proto]["readings"] == 320
        assert report["per-protocol"][proto]["sink-received"] == 320
    assert totals["decode-errors"] == 0
    assert totals["normalize-errors"] == 0
    for node in ("n1", "n2"):
        assert report["per-node"][node]["emissions"] == 80
        assert report["per-node"][node]["readings"] == 480
    assert wall < 5.0, f"480s virtual run took {wall:.2f}s wall"
    ok(f"2 nodes x 6 sensors x 480s -> 960/960/960, 320 per radio, "
       f"{wall:.2f}s wall")


def test_throughput_accounting_exact_and_additive(two_station_run):
    # 6000 bits spread over a 6-second window reads exactly 1.0 kbps.
    clock = VirtualClock(start=1000.0)
    tracker = ThroughputTracker(clock.now)
    for i in range(6):
        clock._now = 1001.0 + i
        tracker.record(ProtocolId.WIFI, "n1", 125)
    clock._now = 1006.0
    assert tracker.kbps(ProtocolId.WIFI, "n1", window=6.0) == 1.0
    assert tracker.kbps(ProtocolId.WIFI, None, window=6.0) == 1.0

    # Aggregate equals the per-node sum in every window.
    rng = random.Random(99)
    clock._now = 1000.0
    for step in range(120):
        clock._now = 1000.0 + step * 0.5
        node = f"n{rng.randint(1, 4)}"
        proto = rng.choice(list(ProtocolId))
        tracker.record(proto, node, rng.randint(1, 400))
    for window in (1.0, 2.5, 6.0, 30.0, 60.0):
        for proto in ProtocolId:
            per_node = sum(tracker.kbps(proto, node, window)
                           for node in tracker.nodes_seen(proto))
            assert tracker.kbps(proto, None, window) == \
                pytest.approx(per_node, rel=1e-12)

    # The simulated fleet lands in a believable band for compact records.
    report, _ = two_station_run
    for proto in ("wifi", "bluetooth", "zigbee"):
        mean = report["per-protocol"][proto]["mean-kbps"]
        assert 0.1 <= mean <= 100.0, f"{proto} mean {mean} out of band"
        samples = [row["kbps"] for row in report["throughput-series"]
                   if row["protocol"] == proto and row["node"] == "(all)"]
        assert samples and min(samples) > 0.0
        assert all(0.1 <= s <= 100.0 for s in samples)
        assert max(samples) / min(samples) < 2.0, f"{proto} rate unstable"
    ok("throughput exact at 1.0 kbps, additive to 1e-12, fleet in band")


def test_interval_change_via_api_lands_within_one_gap():
    doc = {
        "name": "rate-change",
        "duration": 48,
        "seed": 7,
        "api": True,
        "nodes": [{"node-id": "n1", "gps": "40.4165,-3.70256"}],
        "actions": [{"op": "set-interval", "at": 13,
                     "node": "n1", "seconds": 12}],
    }
    report = run_scenario(ScenarioSpec.from_wire(doc), virtual=True)
    times = report["per-node"]["n1"]["emission-times"]
    assert times == [6.0, 12.0, 18.0, 30.0, 42.0]
    changed = [t for t in times if t > 13]
    assert changed[0] - 13 <= 6.0  # visible within one old interval
    gaps = [b - a for a, b in zip(times, times[1:])]
    assert gaps[-2:] == [12.0, 12.0]
    assert report["node-problems"] == []
    ok("interval 6->12 via the live API took effect within one gap")


def test_alarm_fires_exactly_once_then_never_after_delete():
    doc = {
        "name": "alarm-path",
        "duration": 30,
        "seed": 7,
        "nodes": [{"node-id": "n1", "gps": "40.4165,-3.70256"}],
        "alarms": [{"rule-id": "hot", "node": "*", "sensor": "temp",
                    "comparator": ">", "threshold": 30.0}],
        "actions": [
            {"op": "force-reading", "at": 8.5, "node": "n1",
             "sensor": "temp", "value": 31.0},
            {"op": "delete-alarm", "at": 10.0, "rule-id": "hot"},
            {"op": "force-reading", "at": 14.5, "node": "n1",
             "sensor": "temp", "value": 31.0},
        ],
    }
    report = run_scenario(ScenarioSpec.from_wire(doc), virtual=True)
    assert report["totals"]["alarms-fired"] == 1
    assert len(report["alarms"]) == 1
    event = report["alarms"][0]
    assert event["rule-id"] == "hot"
    assert event["reading"]["value"] == 31.0
    assert event["reading"]["sensor-id"] == "temp"
    ok("threshold breach raised exactly one alarm, none after deletion")
