"""Gateway service: registry, metrics, storage, events, REST/stream API."""
