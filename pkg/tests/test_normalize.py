import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from iotgw.framing import RawFrame
from iotgw.model import (
    GatewayIdentity,
    GpsCoordinate,
    NodeDescriptor,
    ProtocolId,
    SensorDescriptor,
    parse_timestamp,
)
from iotgw.normalize import (
    ANNOUNCE_SENSOR_ID,
    MalformedRecord,
    NodeMismatch,
    NodeUplinkRecord,
    UnknownKey,
    UnknownSensor,
    build_normalized,
    encode_announce,
    encode_record,
    extract_payload,
    parse_announce,
)

GW = GatewayIdentity("gw1", "net1")

NODE = NodeDescriptor(
    node_id="n1",
    gps=GpsCoordinate(4.7, -74.03),
    sensors=(SensorDescriptor("temp", "celsius", "am2315"),
             SensorDescriptor("humidity", "percent_rh", "am2315")),
    capture_interval=6,
    protocol_assignment={"temp": ProtocolId.WIFI,
                         "humidity": ProtocolId.WIFI},
)


def frame_of(obj, kind=ProtocolId.WIFI) -> RawFrame:
    return RawFrame(kind, json.dumps(obj).encode())


class TestExtractPayload:
    def test_direct_parse(self):
        frame = frame_of({"n": "n1", "s": "temp", "v": 25.3,
                          "t": "2020-01-01T00:00:06Z"})
        rec = extract_payload(frame)
        assert rec == NodeUplinkRecord(
            "n1", "temp", 25.3, parse_timestamp("2020-01-01T00:00:06Z"))

    def test_missing_value_key(self):
        frame = frame_of({"n": "n1", "s": "temp", "t": "2020-01-01T00:00:06Z"})
        with pytest.raises(MalformedRecord):
            extract_payload(frame)

    def test_extra_key_rejected(self):
        frame = frame_of({"n": "n1", "s": "temp", "v": 1.0,
                          "t": "2020-01-01T00:00:06Z", "x": 1})
        with pytest.raises(UnknownKey) as err:
            extract_payload(frame)
        assert err.value.key == "x"

    @pytest.mark.parametrize("payload", [b"not json", b"[1,2]", b"42"])
    def test_non_object_payloads(self, payload):
        with pytest.raises(MalformedRecord):
            extract_payload(RawFrame(ProtocolId.WIFI, payload))

    def test_value_must_be_numeric(self):
        frame = frame_of({"n": "n1", "s": "temp", "v": True,
                          "t": "2020-01-01T00:00:06Z"})
        with pytest.raises(MalformedRecord):
            extract_payload(frame)

    def test_bad_timestamp(self):
        frame = frame_of({"n": "n1", "s": "temp", "v": 1.0, "t": "noon"})
        with pytest.raises(MalformedRecord):
            extract_payload(frame)

    ids = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_",
                  min_size=1, max_size=10)

    @given(node_id=ids, sensor_id=ids,
           value=st.floats(allow_nan=False, allow_infinity=False, width=32),
           epoch=st.integers(0, 2 ** 31))
    def test_extraction_inverts_node_side_encoding(self, node_id, sensor_id,
                                                   value, epoch):
        rec = NodeUplinkRecord(
            node_id, sensor_id, value,
            datetime.fromtimestamp(epoch, tz=timezone.utc))
        assert extract_payload(
            RawFrame(ProtocolId.BLUETOOTH, encode_record(rec))) == rec


class TestBuildNormalized:
    def rec(self, **overrides):
        base = dict(node_id="n1", sensor_id="temp", value=25.3,
                    capture_time=parse_timestamp("2020-01-01T00:00:06Z"))
        base.update(overrides)
        return NodeUplinkRecord(**base)

    def test_field_mapping(self):
        reading = build_normalized(self.rec(), ProtocolId.WIFI, NODE, GW)
        assert reading.protocol is ProtocolId.WIFI
        assert reading.magnitude == "celsius"
        assert reading.gate_id == "gw1" and reading.network_id == "net1"
        assert reading.gps == NODE.gps
        assert reading.value == 25.3

    def test_protocol_records_arrival_not_assignment(self):
        # temp is assigned to wifi, but the frame came in over zigbee
        reading = build_normalized(self.rec(), ProtocolId.ZIGBEE, NODE, GW)
        assert reading.protocol is ProtocolId.ZIGBEE

    def test_unknown_sensor(self):
        with pytest.raises(UnknownSensor):
            build_normalized(self.rec(sensor_id="xyz"), ProtocolId.WIFI, NODE, GW)

    def test_node_mismatch(self):
        with pytest.raises(NodeMismatch):
            build_normalized(self.rec(node_id="n2"), ProtocolId.WIFI, NODE, GW)


class TestAnnounce:
    def test_round_trip(self):
        when = parse_timestamp("2020-01-01T00:00:00Z")
        payload = encode_announce(NODE, when)
        assert parse_announce(payload) == NODE

    def test_ordinary_record_is_not_an_announce(self):
        rec = NodeUplinkRecord("n1", "temp", 1.0,
                               parse_timestamp("2020-01-01T00:00:06Z"))
        assert parse_announce(encode_record(rec)) is None

    def test_announce_rejected_by_strict_extraction(self):
        payload = encode_announce(NODE, parse_timestamp("2020-01-01T00:00:00Z"))
        with pytest.raises(MalformedRecord):
            extract_payload(RawFrame(ProtocolId.WIFI, payload))

    def test_descriptor_node_must_match_record(self):
        obj = json.loads(encode_announce(
            NODE, parse_timestamp("2020-01-01T00:00:00Z")))
        obj["n"] = "impostor"
        with pytest.raises(MalformedRecord):
            parse_announce(json.dumps(obj).encode())

    def test_invalid_descriptor(self):
        obj = {"n": "n1", "s": ANNOUNCE_SENSOR_ID, "v": {"node-id": "n1"},
               "t": "2020-01-01T00:00:00Z"}
        with pytest.raises(MalformedRecord):
            parse_announce(json.dumps(obj).encode())

    def test_non_object_descriptor(self):
        obj = {"n": "n1", "s": ANNOUNCE_SENSOR_ID, "v": 3,
               "t": "2020-01-01T00:00:00Z"}
        with pytest.raises(MalformedRecord):
            parse_announce(json.dumps(obj).encode())
