import pytest
from hypothesis import given, settings, strategies as st

from iotgw.mqtt.packets import (
    Connack,
    Connect,
    Disconnect,
    MalformedVarint,
    NeedMoreData,
    Pingreq,
    Pingresp,
    ProtocolViolation,
    Puback,
    Publish,
    Suback,
    Subscribe,
    UnsupportedPacketType,
    ValueTooLarge,
    decode_packet,
    decode_remaining_length,
    encode_packet,
    encode_remaining_length,
)

VARINT_FIXTURES = [
    (0, b"\x00"),
    (127, b"\x7f"),
    (128, b"\x80\x01"),
    (321, b"\xc1\x02"),
    (16383, b"\xff\x7f"),
    (16384, b"\x80\x80\x01"),
    (2097151, b"\xff\xff\x7f"),
    (2097152, b"\x80\x80\x80\x01"),
    (268435455, b"\xff\xff\xff\x7f"),
]


class TestRemainingLength:
    @pytest.mark.parametrize("value,encoded", VARINT_FIXTURES)
    def test_fixtures(self, value, encoded):
        assert encode_remaining_length(value) == encoded
        assert decode_remaining_length(encoded) == (value, len(encoded))

    @given(st.integers(0, 268435455))
    def test_round_trip(self, value):
        encoded = encode_remaining_length(value)
        assert decode_remaining_length(encoded + b"tail") == (value, len(encoded))

    def test_value_too_large(self):
        with pytest.raises(ValueTooLarge):
            encode_remaining_length(268435456)

    def test_negative(self):
        with pytest.raises(ValueTooLarge):
            encode_remaining_length(-1)

    def test_incomplete_varint_wants_more(self):
        with pytest.raises(NeedMoreData):
            decode_remaining_length(b"\x80\x80")

    def test_overlong_varint_rejected(self):
        with pytest.raises(MalformedVarint):
            decode_remaining_length(b"\xff\xff\xff\xff\x7f")


def roundtrip(packet):
    encoded = encode_packet(packet)
    decoded, consumed = decode_packet(encoded)
    assert consumed == len(encoded)
    return decoded


class TestFixedEncodings:
    def test_pingreq_bytes(self):
        assert encode_packet(Pingreq()) == b"\xc0\x00"

    def test_pingresp_and_disconnect(self):
        assert encode_packet(Pingresp()) == b"\xd0\x00"
        assert encode_packet(Disconnect()) == b"\xe0\x00"

    def test_connect_header_is_mqtt_level_4(self):
        encoded = encode_packet(Connect("n1", keep_alive=30))
        assert encoded[2:9] == b"\x00\x04MQTT\x04"


topic_names = st.lists(
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-_", min_size=1,
            max_size=8),
    min_size=1, max_size=4).map("/".join)
packet_ids = st.integers(1, 0xFFFF)
qos01 = st.integers(0, 1)


def publishes():
    def build(topic, payload, qos, pid, retain):
        return Publish(topic=topic, payload=payload, qos=qos,
                       packet_id=pid if qos else None, retain=retain,
                       dup=False)
    return st.builds(build, topic_names, st.binary(max_size=2048), qos01,
                     packet_ids, st.booleans())


all_packets = st.one_of(
    st.builds(Connect, client_id=st.text(
        alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1,
        max_size=23), keep_alive=st.integers(0, 0xFFFF)),
    st.builds(Connack, return_code=st.integers(0, 5)),
    publishes(),
    st.builds(Puback, packet_id=packet_ids),
    st.builds(Subscribe, packet_id=packet_ids,
              topics=st.lists(st.tuples(topic_names, qos01), min_size=1,
                              max_size=4).map(tuple)),
    st.builds(Suback, packet_id=packet_ids,
              granted=st.lists(st.sampled_from([0, 1, 0x80]), min_size=1,
                               max_size=4).map(tuple)),
    st.just(Pingreq()),
    st.just(Pingresp()),
    st.just(Disconnect()),
)


@settings(max_examples=300)
@given(all_packets)
def test_codec_round_trip_all_variants(packet):
    assert roundtrip(packet) == packet


@given(all_packets, st.integers(1, 10))
def test_partial_input_raises_need_more_data(packet, cut):
    encoded = encode_packet(packet)
    if cut >= len(encoded):
        return
    with pytest.raises(NeedMoreData):
        decode_packet(encoded[:cut])


def test_back_to_back_packets_consume_exactly_one():
    stream = encode_packet(Pingreq()) + encode_packet(
        Publish(topic="a/b", payload=b"x", qos=0))
    packet, consumed = decode_packet(stream)
    assert packet == Pingreq()
    packet2, consumed2 = decode_packet(stream[consumed:])
    assert isinstance(packet2, Publish)
    assert consumed + consumed2 == len(stream)


class TestSubsetBoundaries:
    def test_qos2_publish_flags_unsupported(self):
        # PUBLISH fixed header with qos bits 0b10
        with pytest.raises(UnsupportedPacketType):
            decode_packet(b"\x34\x05\x00\x01a\x00\x01")

    def test_qos3_publish_flags_malformed(self):
        with pytest.raises(ProtocolViolation):
            decode_packet(b"\x36\x05\x00\x01a\x00\x01")

    def test_pubrec_packet_type_unsupported(self):
        with pytest.raises(UnsupportedPacketType):
            decode_packet(b"\x50\x02\x00\x01")

    def test_qos1_requires_packet_id(self):
        with pytest.raises(ProtocolViolation):
            Publish(topic="a", payload=b"", qos=1)

    def test_qos0_forbids_dup(self):
        with pytest.raises(ProtocolViolation):
            Publish(topic="a", payload=b"", qos=0, dup=True)

    def test_wildcard_topic_rejected_in_publish(self):
        with pytest.raises(ProtocolViolation):
            Publish(topic="a/+/b", payload=b"", qos=0)

    def test_qos2_subscription_unsupported(self):
        with pytest.raises(UnsupportedPacketType):
            Subscribe(packet_id=1, topics=(("a/b", 2),))

    def test_trailing_bytes_in_body(self):
        with pytest.raises(ProtocolViolation):
            decode_packet(b"\xc0\x01\x00")  # pingreq with a body byte

    def test_subscribe_flags_must_be_0010(self):
        good = encode_packet(Subscribe(packet_id=1, topics=(("a", 0),)))
        bad = bytes([0x80]) + good[1:]
        with pytest.raises(ProtocolViolation):
            decode_packet(bad)

    def test_wrong_protocol_name_rejected(self):
        encoded = bytearray(encode_packet(Connect("n1")))
        encoded[4:8] = b"MQIs"
        with pytest.raises(ProtocolViolation):
            decode_packet(bytes(encoded))
