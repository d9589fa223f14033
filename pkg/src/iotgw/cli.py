"""Operator entry points: run the gateway, run a simulated fleet, render
reports. Exit codes: 0 success, 1 usage error, 2 runtime failure."""

from __future__ import annotations

import argparse
import sys
import threading
import time
from pathlib import Path

from .gateway.api import ApiServer
from .gateway.config import ConfigError, GatewayConfig, load_config
from .gateway.metrics import HostStatsSampler
from .gateway.service import GatewayService
from .gateway.storage import ReadingLog
from .links import TransportListener
from .model import GatewayIdentity, ProtocolId
from .mqtt.broker import BrokerCore, BrokerServer
from .mqtt.client import MqttError, SocketMqttClient
from .report import (
    METRICS,
    ReportUnreadable,
    UnknownMetric,
    load_report,
    render_metric,
    save_figures,
)
from .sim.scenario import ScenarioError, ScenarioTimeout, load_scenario, run_scenario

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here reserves 2 for
    runtime failures, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iotgw",
                     description="Multiprotocol sensor gateway toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_gw = sub.add_parser("gateway", help="run the gateway until interrupted")
    p_gw.add_argument("--config", required=True, metavar="PATH",
                      help="gateway configuration JSON")

    p_sim = sub.add_parser("sim", help="run a scenario and write its report")
    p_sim.add_argument("--scenario", required=True, metavar="PATH",
                       help="scenario JSON")
    clock_group = p_sim.add_mutually_exclusive_group()
    clock_group.add_argument("--virtual-clock", action="store_true",
                             default=True, dest="virtual_clock",
                             help="drive the run on a simulated clock (default)")
    clock_group.add_argument("--real-clock", action="store_false",
                             dest="virtual_clock",
                             help="run against the wall clock over TCP")
    p_sim.add_argument("--out", metavar="DIR", default="sim-out",
                       help="output directory (default: sim-out)")

    p_rep = sub.add_parser("report", help="tabulate a finished report")
    p_rep.add_argument("--in", required=True, metavar="PATH", dest="in_path",
                       help="report.json from a sim run")
    p_rep.add_argument("--metric", required=True, choices=METRICS,
                       help="which series to tabulate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gateway":
        return cmd_gateway(args.config)
    if args.command == "sim":
        return cmd_sim(args.scenario, args.virtual_clock, args.out)
    if args.command == "report":
        return cmd_report(args.in_path, args.metric)
    return USAGE_EXIT  # unreachable with required=True


# ---------------------------------------------------------------------------


def cmd_gateway(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    try:
        return _run_gateway(cfg)
    except OSError as exc:
        print(f"gateway failed to start: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


def _run_gateway(cfg: GatewayConfig) -> int:
    log = ReadingLog(cfg.readings_log, cfg.max_log_bytes)
    sampler = HostStatsSampler(time.time, period=cfg.stats_period)
    service = GatewayService(
        GatewayIdentity(cfg.gate_id, cfg.network_id), log,
        clock=time.time, sampler=sampler,
        throughput_window=cfg.throughput_window,
        uplink_buffer=cfg.uplink_buffer)

    broker = BrokerServer(cfg.listen_host, cfg.broker_port,
                          core=BrokerCore(retry_interval=cfg.retry_interval,
                                          retry_budget=cfg.retry_budget))
    listeners: list[TransportListener] = []
    api = None
    stop = threading.Event()
    uplink_holder: dict[str, SocketMqttClient] = {}

    def open_port(what, fn):
        try:
            fn()
        except OSError as exc:
            raise OSError(f"{what}: {exc}") from exc

    try:
        open_port(f"broker port {cfg.broker_port}", broker.start)
        service.set_downlink(
            lambda topic, payload: broker.core.inject_publish(
                topic, payload, qos=1, retain=True))

        for proto in ProtocolId:
            port = cfg.transport_ports[proto]
            listener = TransportListener(
                proto, cfg.listen_host, port,
                on_frame=(lambda frame, nbytes, p=proto:
                          service.ingest(frame, p, nbytes)),
                on_decode_error=service.note_transport_error)
            open_port(f"{proto.value} port {port}", listener.start)
            listeners.append(listener)

        api = ApiServer(service, cfg.api_token, cfg.listen_host, cfg.api_port)
        open_port(f"api port {cfg.api_port}", api.start)
        sampler.start()

        def connect_cloud():
            # Keep trying so the gateway tolerates a late-starting cloud
            # broker; buffered uplinks flush on the first success.
            while not stop.is_set():
                try:
                    client = SocketMqttClient(cfg.cloud_host, cfg.cloud_port,
                                              client_id=f"gw-{cfg.gate_id}")
                except (OSError, MqttError):
                    if stop.wait(5.0):
                        return
                    continue
                uplink_holder["client"] = client
                service.set_uplink(
                    lambda topic, payload: client.publish(topic, payload,
                                                          qos=1))
                return

        threading.Thread(target=connect_cloud, name="cloud-connect",
                         daemon=True).start()

        for listener in listeners:
            host, port = listener.address
            print(f"{listener.kind.value:>9} listener on {host}:{port}")
        print(f"   broker on {cfg.listen_host}:{broker.address[1]}")
        host, port = api.address
        print(f"      api on {host}:{port}")
        print(f"uplink target {cfg.cloud_host}:{cfg.cloud_port}")
        sys.stdout.flush()

        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        print("shutting down", file=sys.stderr)
        return 0
    finally:
        stop.set()
        sampler.stop()
        if api is not None:
            api.stop()
        for listener in listeners:
            listener.stop()
        client = uplink_holder.get("client")
        if client is not None:
            client.close()
        broker.stop()
        log.close()


# ---------------------------------------------------------------------------


def cmd_sim(scenario_path: str, virtual_clock: bool, out_dir: str) -> int:
    try:
        spec = load_scenario(scenario_path)
    except ScenarioError as exc:
        print(f"bad scenario: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    started = time.perf_counter()
    try:
        report = run_scenario(spec, out_dir=out_dir, virtual=virtual_clock)
    except ScenarioTimeout as exc:
        print(f"scenario failed to run: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    wall = time.perf_counter() - started

    totals = report["totals"]
    print(f"scenario {report['name']} ({report['mode']} clock) "
          f"finished in {wall:.2f}s wall")
    print(f"readings persisted: {totals['readings-persisted']}")
    print(f"uplink publishes:   {totals['uplink-publishes']}")
    print(f"sink received:      {totals['sink-received']}")
    for proto, info in report["per-protocol"].items():
        print(f"  {proto:>9}: {info['readings']} readings, "
              f"{info['rx-bytes']} bytes, mean {info['mean-kbps']:.3f} kbps")
    if totals["alarms-fired"]:
        print(f"alarms fired:       {totals['alarms-fired']}")
    out = Path(out_dir)
    print(f"wrote {out / 'report.json'}, {out / 'throughput.csv'}, "
          f"{out / 'readings.log'}")
    return 0


def cmd_report(in_path: str, metric: str) -> int:
    try:
        report = load_report(in_path)
    except ReportUnreadable as exc:
        print(str(exc), file=sys.stderr)
        return RUNTIME_EXIT
    try:
        render_metric(report, metric, sys.stdout)
        figures = save_figures(report, metric, Path(in_path).parent)
    except UnknownMetric as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_EXIT
    for path in figures:
        print(f"figure written: {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
