"""MQTT 3.1.1 subset: packet codec, topic matching, broker, client."""

from .packets import (  # noqa: F401
    Connack,
    Connect,
    Disconnect,
    MalformedVarint,
    MqttError,
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
from .topics import BadTopicFilter, topic_matches, validate_filter  # noqa: F401
from .broker import BrokerCore, BrokerServer, BrokerSession  # noqa: F401
from .client import (  # noqa: F401
    ConnectionRefused,
    DeliveryToken,
    MqttClient,
    NotConnected,
    SocketMqttClient,
    Timeout,
)
