import type { UiSession } from "../session.js";
import type { Point } from "../store.js";
import { clear, el } from "./dom.js";

const PROTO_COLORS: Record<string, string> = {
  wifi: "#2a7ae2",
  bluetooth: "#7048b6",
  zigbee: "#1f9d55",
};

function chartsAvailable(): boolean {
  return typeof Chart !== "undefined";
}

interface Panel {
  chart: Chart;
  note: HTMLElement;
}

/** Live plots: one time-series chart per node sensor, plus one combined
 * per-protocol throughput chart. Data comes straight from the store, which
 * already caps every series, so charts never grow unbounded. */
export function chartsView(session: UiSession): HTMLElement {
  const root = el("section", { class: "panel charts-panel" });
  if (!chartsAvailable()) {
    // test environments have no canvas; the store still collects series
    root.append(el("p", { class: "empty" }, "charts unavailable (no canvas)"));
    return root;
  }

  const sensorPanels = new Map<string, Panel>();
  let throughputPanel: Panel | null = null;
  let dirty = false;

  const rebuild = () => {
    for (const panel of sensorPanels.values()) panel.chart.destroy();
    throughputPanel?.chart.destroy();
    sensorPanels.clear();
    clear(root);

    root.append(el("h2", {}, "Live readings"));
    const grid = el("div", { class: "chart-grid" });
    for (const node of session.store.nodes.values()) {
      for (const sensor of node.sensors) {
        const key = `${node["node-id"]}/${sensor["sensor-id"]}`;
        const { figure, panel } = makePanel(
          `${key} (${sensor.magnitude})`,
          [{ label: key, data: [], borderColor: "#d9822b", pointRadius: 0, tension: 0.2 }],
        );
        sensorPanels.set(key, panel);
        grid.append(figure);
      }
    }
    root.append(grid);

    root.append(el("h2", {}, "Throughput"));
    const { figure, panel } = makePanel(
      "kbps per protocol",
      Object.entries(PROTO_COLORS).map(([proto, color]) => ({
        label: proto,
        data: [],
        borderColor: color,
        pointRadius: 0,
        tension: 0.2,
      })),
    );
    throughputPanel = panel;
    root.append(figure);
    refresh();
  };

  const refresh = () => {
    dirty = false;
    for (const node of session.store.nodes.values()) {
      for (const sensor of node.sensors) {
        const key = `${node["node-id"]}/${sensor["sensor-id"]}`;
        const panel = sensorPanels.get(key);
        if (!panel) continue;
        const points = session.store.seriesFor(node["node-id"], sensor["sensor-id"]);
        feed(panel, 0, points);
      }
    }
    if (throughputPanel) {
      Object.keys(PROTO_COLORS).forEach((proto, i) => {
        const points = session.store.throughput.get(proto) ?? [];
        feed(throughputPanel as Panel, i, points);
      });
    }
  };

  // one repaint per burst: a backfill delivers hundreds of store events
  const scheduleRefresh = () => {
    if (dirty) return;
    dirty = true;
    setTimeout(refresh, 150);
  };

  session.store.subscribe((topic) => {
    if (topic === "nodes") rebuild();
    else if (topic === "series" || topic === "throughput") scheduleRefresh();
  });
  rebuild();
  return root;
}

function makePanel(title: string, datasets: ChartDataset[]): { figure: HTMLElement; panel: Panel } {
  const canvas = el("canvas", { width: "420", height: "180" });
  const note = el("p", { class: "empty" }, "no data yet");
  const figure = el("figure", { class: "chart" }, el("figcaption", {}, title), canvas, note);
  const chart = new Chart(canvas, {
    type: "line",
    data: { datasets },
    options: {
      animation: false,
      responsive: false,
      scales: { x: { type: "linear", ticks: { maxTicksLimit: 6 } } },
      plugins: { legend: { display: datasets.length > 1 } },
    },
  });
  return { figure, panel: { chart, note } };
}

function feed(panel: Panel, datasetIndex: number, points: readonly Point[]): void {
  panel.chart.data.datasets[datasetIndex].data = points.map((p) => ({ x: p.t, y: p.v }));
  if (points.length) panel.note.remove();
  panel.chart.update("none");
}
