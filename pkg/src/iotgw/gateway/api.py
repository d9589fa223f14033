"""HTTP front end: REST routes plus the server-push event stream.

Built on the stdlib threading HTTP server; every route demands the
configured bearer token. One JSON object per response, one JSON event
per stream message.
"""

from __future__ import annotations

import hmac
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from ..model import (
    AlarmRule,
    ModelError,
    NodeDescriptor,
    ProtocolId,
    parse_timestamp,
    serialize_reading,
)
from ..normalize import UnknownSensor
from .events import format_sse
from .metrics import SamplingUnavailable
from .registry import InvalidInterval, UnknownNode
from .service import DuplicateRule, GatewayService, UnknownRule

KEEPALIVE_SECONDS = 15.0


class _ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _since_param(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        return parse_timestamp(raw).timestamp()
    except ModelError:
        raise _ApiError(422, f"bad 'since' value: {raw!r}") from None


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "iotgw"
    api: "ApiServer"  # injected by the handler factory

    # Silence per-request stderr logging; diagnostics go over the event bus.
    def log_message(self, fmt, *args):
        pass

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def do_DELETE(self):
        self._dispatch("DELETE")

    # -- plumbing -------------------------------------------------------

    def _cors(self):
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods",
                         "GET, POST, PATCH, DELETE, OPTIONS")
        self.send_header("Access-Control-Allow-Headers",
                         "Authorization, Content-Type")

    def _send_json(self, status: int, obj):
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def _send_empty(self, status: int):
        self.send_response(status)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _fail(self, status: int, message: str):
        self._send_json(status, {"error": message})

    def _authorized(self) -> bool:
        supplied = self.headers.get("Authorization", "")
        expected = f"Bearer {self.api.token}"
        return hmac.compare_digest(supplied.encode(), expected.encode())

    def _read_body(self) -> dict:
        length = self.headers.get("Content-Length")
        try:
            nbytes = int(length or "0")
        except ValueError:
            raise _ApiError(422, "bad Content-Length") from None
        raw = self.rfile.read(nbytes) if nbytes else b""
        if not raw:
            raise _ApiError(422, "request body required")
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise _ApiError(422, f"body is not valid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise _ApiError(422, "body must be a JSON object")
        return obj

    def _dispatch(self, method: str):
        split = urlsplit(self.path)
        parts = [p for p in split.path.split("/") if p]
        query = {k: v[-1] for k, v in parse_qs(split.query).items()}
        if not self._authorized():
            self._fail(401, "missing or invalid bearer token")
            return
        try:
            handled = self._route(method, parts, query)
        except _ApiError as exc:
            self._fail(exc.status, exc.message)
            return
        except (BrokenPipeError, ConnectionResetError):
            self.close_connection = True
            return
        if not handled:
            self._fail(404, f"no such resource: {split.path}")

    def _route(self, method: str, parts: list[str], query: dict) -> bool:
        svc = self.api.service
        if parts == ["nodes"]:
            if method == "GET":
                self._send_json(200, [self._node_view(d)
                                      for d in svc.registry.all_nodes()])
                return True
            if method == "POST":
                body = self._read_body()
                try:
                    desc = NodeDescriptor.from_wire(body)
                except ModelError as exc:
                    raise _ApiError(422, str(exc)) from None
                accepted = svc.register_node(desc)
                self._send_json(201, self._node_view(accepted))
                return True
            return False

        if len(parts) == 2 and parts[0] == "nodes" and method == "PATCH":
            self._patch_node(parts[1], self._read_body())
            return True

        if parts == ["readings"] and method == "GET":
            self._get_readings(query)
            return True

        if parts == ["metrics", "throughput"] and method == "GET":
            self._get_throughput(query)
            return True

        if parts == ["metrics", "host"] and method == "GET":
            try:
                stats = svc.host_stats()
            except (SamplingUnavailable, RuntimeError) as exc:
                raise _ApiError(503, str(exc)) from None
            self._send_json(200, stats.to_wire())
            return True

        if parts == ["alarms"]:
            if method == "GET":
                self._send_json(200, [r.to_wire() for r in svc.list_alarms()])
                return True
            if method == "POST":
                body = self._read_body()
                try:
                    rule = AlarmRule.from_wire(body)
                    svc.add_alarm(rule)
                except (ModelError, DuplicateRule) as exc:
                    raise _ApiError(422, str(exc)) from None
                self._send_json(201, rule.to_wire())
                return True
            return False

        if len(parts) == 2 and parts[0] == "alarms" and method == "DELETE":
            try:
                svc.remove_alarm(parts[1])
            except UnknownRule:
                raise _ApiError(404, f"no such alarm rule: {parts[1]}") from None
            self._send_empty(204)
            return True

        if parts == ["events"] and method == "GET":
            self._stream_events()
            return True

        if parts == ["counters"] and method == "GET":
            self._send_json(200, svc.counters())
            return True

        return False

    # -- route bodies ------------------------------------------------------

    def _node_view(self, desc: NodeDescriptor) -> dict:
        view = desc.to_wire()
        view["last-seen"] = self.api.service.registry.last_seen(desc.node_id)
        return view

    def _patch_node(self, node_id: str, body: dict):
        svc = self.api.service
        allowed = {"capture-interval", "protocols"}
        unknown = set(body) - allowed
        if unknown:
            raise _ApiError(422, f"unknown fields: {sorted(unknown)}")
        if not body:
            raise _ApiError(422, "nothing to change")
        try:
            if "capture-interval" in body:
                svc.set_capture_interval(node_id, body["capture-interval"])
            if "protocols" in body:
                assignments = body["protocols"]
                if not isinstance(assignments, dict):
                    raise _ApiError(422, "protocols must be an object")
                for sensor_id, proto_name in assignments.items():
                    try:
                        proto = ProtocolId(proto_name)
                    except ValueError:
                        raise _ApiError(
                            422, f"unknown protocol: {proto_name!r}") from None
                    svc.assign_protocol(node_id, sensor_id, proto)
        except UnknownNode as exc:
            raise _ApiError(404, str(exc)) from None
        except UnknownSensor as exc:
            raise _ApiError(404, str(exc)) from None
        except (InvalidInterval, ModelError) as exc:
            raise _ApiError(422, str(exc)) from None
        self._send_json(200, self._node_view(svc.registry.get(node_id)))

    def _get_readings(self, query: dict):
        since = _since_param(query["since"]) if "since" in query else 0.0
        readings = self.api.service.log.query(
            since=since,
            node_id=query.get("node"),
            sensor_id=query.get("sensor"),
        )
        self._send_json(200, [json.loads(serialize_reading(r))
                              for r in readings])

    def _get_throughput(self, query: dict):
        svc = self.api.service
        window = svc.throughput_window
        if "window" in query:
            try:
                window = float(query["window"])
            except ValueError:
                raise _ApiError(422, f"bad window: {query['window']!r}") from None
            if window <= 0:
                raise _ApiError(422, "window must be positive")
        if "protocol" in query:
            try:
                proto = ProtocolId(query["protocol"])
            except ValueError:
                raise _ApiError(
                    422, f"unknown protocol: {query['protocol']!r}") from None
            per_node = {node: svc.tracker.kbps(proto, node, window)
                        for node in svc.tracker.nodes_seen(proto)}
            self._send_json(200, {"protocol": proto.value, "window": window,
                                  "kbps": svc.throughput(proto, None, window),
                                  "nodes": per_node})
            return
        self._send_json(200, {"window": window,
                              "protocols": svc.tracker.snapshot(window)})

    def _stream_events(self):
        sub = self.api.service.events.subscribe()
        try:
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.end_headers()
            self.wfile.write(b": stream open\n\n")
            self.wfile.flush()
            last_write = time.monotonic()
            # Short poll so server shutdown and client departure are noticed
            # promptly; comment lines keep idle proxies from timing out.
            while not self.api.stopping.is_set():
                event = sub.get(timeout=self.api.stream_poll)
                if event is not None:
                    self.wfile.write(format_sse(event))
                elif time.monotonic() - last_write >= KEEPALIVE_SECONDS:
                    self.wfile.write(b": keep-alive\n\n")
                else:
                    continue
                self.wfile.flush()
                last_write = time.monotonic()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.api.service.events.unsubscribe(sub)
            self.close_connection = True


class ApiServer:
    """Owns the listening socket and the handler threads."""

    def __init__(self, service: GatewayService, token: str,
                 host: str = "127.0.0.1", port: int = 0,
                 stream_poll: float = 0.25):
        self.service = service
        self.token = token
        self.stream_poll = stream_poll
        self.stopping = threading.Event()

        api = self
        handler = type("BoundHandler", (_Handler,), {"api": api})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self):
        if self._thread is not None:
            return
        self.stopping.clear()
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        kwargs={"poll_interval": 0.1},
                                        name="api-server", daemon=True)
        self._thread.start()

    def stop(self):
        self.stopping.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
