"""Render scenario reports: delimited tables to a stream, figures to files.

Table rows go wherever the caller points them (the CLI uses stdout) while
each metric also draws a matplotlib figure next to the report file, so
plots and numbers always come from the same artifact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import IO

METRICS = ("counts", "throughput", "readings")

# Stable plot colors per protocol across every figure.
_PROTO_COLORS = {"wifi": "tab:blue", "bluetooth": "tab:orange",
                 "zigbee": "tab:green"}


class UnknownMetric(ValueError):
    def __init__(self, metric: str):
        super().__init__(
            f"unknown metric {metric!r}; expected one of {', '.join(METRICS)}")
        self.metric = metric


class ReportUnreadable(ValueError):
    pass


def load_report(path: str | Path) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportUnreadable(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportUnreadable(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "per-protocol" not in doc:
        raise ReportUnreadable(f"{p} does not look like a scenario report")
    return doc


def render_metric(report: dict, metric: str, stream: IO[str]):
    if metric == "counts":
        _render_counts(report, stream)
    elif metric == "throughput":
        _render_throughput(report, stream)
    elif metric == "readings":
        _render_readings(report, stream)
    else:
        raise UnknownMetric(metric)


def _render_counts(report: dict, stream: IO[str]):
    writer = csv.writer(stream)
    writer.writerow(["scope", "name", "readings", "sink-received",
                     "rx-bytes", "mean-kbps"])
    for proto, info in report["per-protocol"].items():
        writer.writerow(["protocol", proto, info["readings"],
                         info["sink-received"], info["rx-bytes"],
                         f"{info['mean-kbps']:.4f}"])
    for node, info in report["per-node"].items():
        writer.writerow(["node", node, info.get("readings", 0), "",
                         info.get("rx-bytes", 0), ""])
    totals = report["totals"]
    writer.writerow(["total", "all", totals["readings-persisted"],
                     totals["sink-received"], "", ""])


def _render_throughput(report: dict, stream: IO[str]):
    writer = csv.writer(stream)
    writer.writerow(["t", "protocol", "node", "kbps"])
    for row in report["throughput-series"]:
        writer.writerow([row["t"], row["protocol"], row["node"],
                         f"{row['kbps']:.6f}"])


def _render_readings(report: dict, stream: IO[str]):
    writer = csv.writer(stream)
    writer.writerow(["node", "sensor", "t", "value"])
    for node, sensors in report["traces"].items():
        for sensor, points in sensors.items():
            for t, value in points:
                writer.writerow([node, sensor, t, value])


def save_figures(report: dict, metric: str, out_dir: str | Path) -> list[Path]:
    """Draw the figure(s) for a metric; returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if metric == "counts":
        return [_counts_figure(report, out, plt)]
    if metric == "throughput":
        return [_throughput_figure(report, out, plt)]
    if metric == "readings":
        return [_traces_figure(report, out, plt)]
    raise UnknownMetric(metric)


def _counts_figure(report: dict, out: Path, plt) -> Path:
    per_proto = report["per-protocol"]
    names = list(per_proto)
    values = [per_proto[p]["readings"] for p in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, values,
           color=[_PROTO_COLORS.get(p, "tab:gray") for p in names])
    for i, v in enumerate(values):
        ax.annotate(str(v), xy=(i, v), ha="center", va="bottom")
    ax.set_ylabel("readings delivered")
    ax.set_title(f"{report['name']}: readings per protocol")
    path = out / "counts.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _throughput_figure(report: dict, out: Path, plt) -> Path:
    series = report["throughput-series"]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    protocols = sorted({row["protocol"] for row in series})
    for proto in protocols:
        points = [(row["t"], row["kbps"]) for row in series
                  if row["protocol"] == proto and row["node"] == "(all)"]
        if not points:
            continue
        xs, ys = zip(*sorted(points))
        ax.plot(xs, ys, label=proto,
                color=_PROTO_COLORS.get(proto, "tab:gray"))
    ax.set_xlabel("seconds into run")
    ax.set_ylabel("kbps")
    ax.set_title(f"{report['name']}: aggregate throughput per protocol")
    ax.legend()
    ax.grid(True, alpha=0.3)
    path = out / "throughput.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _traces_figure(report: dict, out: Path, plt) -> Path:
    traces = report["traces"]
    sensors: list[str] = []
    for node_traces in traces.values():
        for sensor in node_traces:
            if sensor not in sensors:
                sensors.append(sensor)
    if not sensors:
        sensors = ["(none)"]
    cols = 3
    rows = max(1, (len(sensors) + cols - 1) // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3 * rows),
                             squeeze=False)
    for idx, sensor in enumerate(sensors):
        ax = axes[idx // cols][idx % cols]
        for node, node_traces in traces.items():
            points = node_traces.get(sensor)
            if not points:
                continue
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            ax.plot(xs, ys, label=node, linewidth=0.9)
        ax.set_title(sensor)
        ax.grid(True, alpha=0.3)
        if idx == 0:
            ax.legend(fontsize="small")
    for idx in range(len(sensors), rows * cols):
        axes[idx // cols][idx % cols].axis("off")
    fig.suptitle(f"{report['name']}: sensor traces")
    path = out / "traces.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
