"""Topic filter validation and level-wise matching (MQTT 3.1.1 rules)."""

from __future__ import annotations

from .packets import MqttError


class BadTopicFilter(MqttError):
    pass


def validate_filter(topic_filter: str):
    """Raise BadTopicFilter unless the filter is well-formed.

    "+" matches exactly one level and must occupy a whole level; "#"
    matches any remainder and may appear only as the final level.
    """
    if not topic_filter:
        raise BadTopicFilter("empty filter")
    if "\x00" in topic_filter:
        raise BadTopicFilter("NUL in filter")
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#":
                raise BadTopicFilter(f"'#' must occupy a whole level: {topic_filter!r}")
            if i != len(levels) - 1:
                raise BadTopicFilter(f"'#' only allowed at the end: {topic_filter!r}")
        if "+" in level and level != "+":
            raise BadTopicFilter(f"'+' must occupy a whole level: {topic_filter!r}")


def is_valid_filter(topic_filter: str) -> bool:
    try:
        validate_filter(topic_filter)
    except BadTopicFilter:
        return False
    return True


def topic_matches(topic_filter: str, topic: str) -> bool:
    """Level-wise match of a concrete topic against a filter.

    "#" also matches its parent level, so "a/#" matches "a" itself.
    """
    filter_levels = topic_filter.split("/")
    topic_levels = topic.split("/")
    for i, level in enumerate(filter_levels):
        if level == "#":
            return True
        if i >= len(topic_levels):
            return False
        if level != "+" and level != topic_levels[i]:
            return False
    return len(topic_levels) == len(filter_levels)
