import type { AlarmEvent, AlarmRule, NodeView, Reading } from "./types.js";
import type { StreamStatus } from "./sse.js";

export interface Point {
  t: number; // epoch seconds
  v: number;
}

export interface Banner {
  alarm: AlarmEvent;
  shownAt: number; // wall ms, for auto-dismiss and smoke timing
}

export type Topic =
  | "nodes"
  | "series"
  | "alarms"
  | "banners"
  | "status"
  | "throughput"
  | "counters";

export const SERIES_CAP = 1000;

function seriesKey(nodeId: string, sensorId: string): string {
  return `${nodeId}/${sensorId}`;
}

/** Single source of client-side state. Everything in here is rebuilt from
 * API reads plus the live stream; nothing survives a page reload, by design. */
export class Store {
  nodes = new Map<string, NodeView>();
  alarms: AlarmRule[] = [];
  banners: Banner[] = [];
  streamStatus: StreamStatus = "stopped";
  streamDetail = "";
  counters: Record<string, number> = {};
  throughput = new Map<string, Point[]>(); // protocol -> kbps over time

  private series = new Map<string, Point[]>();
  private listeners = new Set<(topic: Topic) => void>();

  subscribe(fn: (topic: Topic) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(topic: Topic): void {
    for (const fn of this.listeners) fn(topic);
  }

  // -- nodes ----------------------------------------------------------------

  setNodes(nodes: NodeView[]): void {
    this.nodes = new Map(nodes.map((n) => [n["node-id"], n]));
    this.emit("nodes");
  }

  upsertNode(node: NodeView): void {
    this.nodes.set(node["node-id"], node);
    this.emit("nodes");
  }

  // -- reading series ---------------------------------------------------------

  seriesFor(nodeId: string, sensorId: string): readonly Point[] {
    return this.series.get(seriesKey(nodeId, sensorId)) ?? [];
  }

  addReading(reading: Reading): void {
    const t = Date.parse(reading.date) / 1000;
    if (Number.isNaN(t)) return;
    this.insertPoint(
      this.bucket(seriesKey(reading["node-id"], reading["sensor-id"]), this.series),
      { t, v: reading.value },
    );
    this.emit("series");
  }

  addReadings(readings: Reading[]): void {
    for (const r of readings) {
      const t = Date.parse(r.date) / 1000;
      if (Number.isNaN(t)) continue;
      this.insertPoint(
        this.bucket(seriesKey(r["node-id"], r["sensor-id"]), this.series),
        { t, v: r.value },
      );
    }
    this.emit("series");
  }

  addThroughputSample(protocol: string, t: number, kbps: number): void {
    this.insertPoint(this.bucket(protocol, this.throughput), { t, v: kbps });
    this.emit("throughput");
  }

  private bucket(key: string, map: Map<string, Point[]>): Point[] {
    let points = map.get(key);
    if (!points) {
      points = [];
      map.set(key, points);
    }
    return points;
  }

  /** Keeps the series time-ordered and free of duplicate timestamps, so a
   * backfill overlapping the live stream cannot double-plot. */
  private insertPoint(points: Point[], p: Point): void {
    const last = points[points.length - 1];
    if (!last || p.t > last.t) {
      points.push(p);
    } else {
      let i = points.length - 1;
      while (i >= 0 && points[i].t > p.t) i--;
      if (i >= 0 && points[i].t === p.t) return;
      points.splice(i + 1, 0, p);
    }
    if (points.length > SERIES_CAP) points.splice(0, points.length - SERIES_CAP);
  }

  /** Latest timestamp across all series; reconnect backfills from here. */
  lastReadingTime(): number {
    let max = 0;
    for (const points of this.series.values()) {
      const last = points[points.length - 1];
      if (last && last.t > max) max = last.t;
    }
    return max;
  }

  // -- alarms -----------------------------------------------------------------

  setAlarms(alarms: AlarmRule[]): void {
    this.alarms = alarms;
    this.emit("alarms");
  }

  addBanner(alarm: AlarmEvent): void {
    this.banners.push({ alarm, shownAt: Date.now() });
    this.emit("banners");
  }

  dismissBanner(index: number): void {
    this.banners.splice(index, 1);
    this.emit("banners");
  }

  // -- stream / counters --------------------------------------------------------

  setStreamStatus(status: StreamStatus, detail = ""): void {
    this.streamStatus = status;
    this.streamDetail = detail;
    this.emit("status");
  }

  setCounters(totals: Record<string, number>): void {
    this.counters = totals;
    this.emit("counters");
  }
}
