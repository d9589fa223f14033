import json

import pytest

from iotgw.model import GpsCoordinate, ProtocolId
from iotgw.normalize import parse_announce
from iotgw.sensors import DAVIS_MAX_VOLTS, DAVIS_VOLTS_PER_WM2, WeatherSample
from iotgw.sim.node import (
    DEFAULT_PROTOCOL_MAP,
    SENSOR_HUMIDITY,
    SENSOR_RADIATION,
    SENSOR_RAINFALL,
    SENSOR_TEMPERATURE,
    SENSOR_WIND_DIR,
    SENSOR_WIND_SPEED,
    SensorNode,
    measure,
    standard_station,
)

GPS = GpsCoordinate(40.4165, -3.70256)
EPOCH = 1577836800.0


def sample(**overrides):
    base = dict(temperature=21.57, humidity=48.34, irradiance=600.0,
                rain_tips=3, wind_closures=5, vane_voltage=3.3 * 3 / 16)
    base.update(overrides)
    return WeatherSample(**base)


class TestMeasure:
    def test_temperature_quantized_to_tenths(self):
        assert measure(SENSOR_TEMPERATURE, sample()) == 21.6

    def test_negative_temperature_survives_round_trip(self):
        assert measure(SENSOR_TEMPERATURE, sample(temperature=-5.3)) == -5.3

    def test_humidity_quantized_to_tenths(self):
        assert measure(SENSOR_HUMIDITY, sample()) == 48.3

    def test_radiation_round_trips_through_voltage(self):
        got = measure(SENSOR_RADIATION, sample(irradiance=600.0))
        assert got == pytest.approx(600.0, rel=1e-9)

    def test_radiation_saturates_at_full_scale_voltage(self):
        got = measure(SENSOR_RADIATION, sample(irradiance=5000.0))
        assert got == pytest.approx(DAVIS_MAX_VOLTS / DAVIS_VOLTS_PER_WM2,
                                    rel=1e-12)

    def test_rainfall_converts_tip_count(self):
        assert measure(SENSOR_RAINFALL, sample(rain_tips=3)) == 3 * 0.2794

    def test_wind_speed_from_one_second_closure_count(self):
        assert measure(SENSOR_WIND_SPEED, sample(wind_closures=5)) == 12.0

    def test_wind_direction_is_a_sector_index(self):
        got = measure(SENSOR_WIND_DIR, sample(vane_voltage=3.3 * 3 / 16))
        assert got == 3.0

    def test_unknown_sensor_rejected(self):
        with pytest.raises(ValueError):
            measure("ghost", sample())


class TestStandardStation:
    def test_carries_six_sensors(self):
        desc = standard_station("n1", GPS)
        assert [s.sensor_id for s in desc.sensors] == [
            "temp", "humidity", "radiation", "rainfall",
            "wind_speed", "wind_dir"]
        assert desc.capture_interval == 6.0

    def test_default_protocol_split(self):
        desc = standard_station("n1", GPS)
        assert desc.protocol_assignment == DEFAULT_PROTOCOL_MAP
        assert desc.protocol_assignment["temp"] is ProtocolId.WIFI
        assert desc.protocol_assignment["rainfall"] is ProtocolId.ZIGBEE
        assert desc.protocol_assignment["wind_dir"] is ProtocolId.BLUETOOTH

    def test_protocol_map_override(self):
        desc = standard_station(
            "n1", GPS, protocol_map={s.sensor_id: ProtocolId.WIFI
                                     for s in standard_station("x", GPS).sensors})
        assert set(desc.protocol_assignment.values()) == {ProtocolId.WIFI}


def make_node(sent, desc=None, seed=7, poll_config=None, problems=None):
    clock = {"now": EPOCH}
    node = SensorNode(
        desc or standard_station("n1", GPS),
        seed=seed,
        epoch=EPOCH,
        clock=lambda: clock["now"],
        send=lambda proto, payload: sent.append((proto, payload)),
        poll_config=poll_config,
        on_problem=(problems.append if problems is not None else None),
    )
    return node, clock


class TestSensorNode:
    def test_announce_uses_one_assigned_protocol(self, ):
        sent = []
        node, _ = make_node(sent)
        node.announce()
        assert node.announced
        assert len(sent) == 1
        proto, payload = sent[0]
        # lowest assigned protocol by wire name, so every run picks the same one
        assert proto is ProtocolId.BLUETOOTH
        assert parse_announce(payload) == node.desc

    def test_tick_emits_one_record_per_sensor(self):
        sent = []
        node, clock = make_node(sent)
        clock["now"] = EPOCH + 6
        node.tick()

        assert node.emissions == 1
        assert node.records_sent == 6
        assert node.emission_times == [EPOCH + 6]

        by_proto = {}
        for proto, payload in sent:
            by_proto.setdefault(proto, []).append(json.loads(payload))
        assert {p: len(v) for p, v in by_proto.items()} == {
            ProtocolId.WIFI: 2, ProtocolId.ZIGBEE: 2, ProtocolId.BLUETOOTH: 2}
        assert [r["s"] for r in by_proto[ProtocolId.WIFI]] == ["temp", "humidity"]
        record = by_proto[ProtocolId.WIFI][0]
        assert record["n"] == "n1"
        assert record["t"] == "2020-01-01T00:00:06Z"
        assert isinstance(record["v"], float)

    def test_same_seed_same_payloads(self):
        first, second = [], []
        node_a, clock_a = make_node(first, seed=11)
        node_b, clock_b = make_node(second, seed=11)
        clock_a["now"] = clock_b["now"] = EPOCH + 12
        node_a.tick()
        node_b.tick()
        assert first == second

    def test_different_seeds_disagree_somewhere(self):
        first, second = [], []
        node_a, clock_a = make_node(first, seed=1)
        node_b, clock_b = make_node(second, seed=2)
        clock_a["now"] = clock_b["now"] = EPOCH + 12
        node_a.tick()
        node_b.tick()
        assert [p for _, p in first] != [p for _, p in second]

    def test_tick_at_epoch_is_valid(self):
        sent = []
        node, _ = make_node(sent)
        node.tick()  # t == 0 relative to the scenario start
        assert node.records_sent == 6


class TestApplyConfig:
    def test_interval_update_takes_effect(self):
        sent = []
        node, _ = make_node(sent)
        updated = node.desc.with_interval(12.0)
        node.apply_config(json.dumps(updated.to_wire()).encode())
        assert node.interval == 12.0

    def test_foreign_node_config_ignored(self):
        sent, problems = [], []
        node, _ = make_node(sent, problems=problems)
        foreign = standard_station("other", GPS, capture_interval=60.0)
        node.apply_config(json.dumps(foreign.to_wire()).encode())
        assert node.interval == 6.0
        assert len(problems) == 1

    def test_garbage_config_reported_not_fatal(self):
        sent, problems = [], []
        node, _ = make_node(sent, problems=problems)
        node.apply_config(b"{broken")
        assert node.interval == 6.0
        assert len(problems) == 1

    def test_pending_config_applied_at_tick_start(self):
        sent = []
        pending = []
        node, clock = make_node(sent, poll_config=lambda: [pending.pop()]
                                if pending else [])
        pending.append(json.dumps(
            node.desc.with_interval(17.0).to_wire()).encode())
        clock["now"] = EPOCH + 6
        node.tick()
        assert node.interval == 17.0
        assert node.records_sent == 6
