import { ApiClient, ApiError } from "./api.js";
import { EventStream, type EventStreamOptions } from "./sse.js";
import { Store } from "./store.js";
import type { AlarmEvent, AlarmRule, NodeView, Reading, StreamEvent } from "./types.js";

export interface SessionOptions {
  stream?: EventStreamOptions;
  /** Throughput/counters poll period; 0 disables polling. */
  pollMs?: number;
}

export interface EditResult {
  ok: boolean;
  /** Set on 422/400: message for inline display next to the field. */
  fieldError?: string;
  /** Set when the session itself refused to send (client-side validation). */
  rejected?: boolean;
}

/** Ties the REST client, the event stream and the store together. All
 * writes go through here so optimistic updates and their reverts live in
 * one place. Holds no state of its own worth persisting: a page reload
 * reconstructs everything from the API. */
export class UiSession {
  readonly store = new Store();
  readonly stream: EventStream;
  onAuthFailure: () => void = () => {};

  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private readonly pollMs: number;
  /** Wall time of the last settled write; bulk reads begun before an edit
   * settled are stale and must not overwrite the store. */
  private lastEditAt = 0;

  constructor(
    readonly api: ApiClient,
    opts: SessionOptions = {},
  ) {
    this.pollMs = opts.pollMs ?? 5000;
    this.stream = new EventStream(api, opts.stream);
    this.stream.onEvent = (e) => this.dispatch(e);
    this.stream.onStatus = (status, detail) => {
      const wasOpen = this.store.streamStatus === "open";
      this.store.setStreamStatus(status, detail ?? "");
      if (status === "open" && !wasOpen) void this.resync();
    };
  }

  /** Initial load + stream start. Safe to call once per login. */
  async connect(): Promise<void> {
    await this.resync();
    this.stream.start();
    if (this.pollMs > 0) {
      this.pollTimer = setInterval(() => void this.pollMetrics(), this.pollMs);
      void this.pollMetrics();
    }
  }

  disconnect(): void {
    this.stream.stop();
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
  }

  /** Read a snapshot and apply it, rereading if a write settled while the
   * read was in flight: that snapshot predates the edit and applying it
   * would roll the UI back. Check and apply share one synchronous step, so
   * no edit can slip between them. */
  private async applyFresh<T>(
    read: () => Promise<T>,
    apply: (result: T) => void,
  ): Promise<void> {
    for (let attempt = 0; attempt < 5; attempt++) {
      const startedAt = Date.now();
      const result = await this.guard(read);
      if (result === undefined) return;
      if (this.lastEditAt >= startedAt) continue;
      apply(result);
      return;
    }
  }

  /** Re-read the registry; the one authoritative view of node config. */
  async refreshNodes(): Promise<void> {
    await this.applyFresh(
      () => this.api.listNodes(),
      (nodes) => this.store.setNodes(nodes),
    );
  }

  /** Rebuild views from API reads; also runs after every reconnect so a
   * dropped stream only costs latency, not data. Readings are append-only
   * in the store, so only the node and alarm snapshots need the stale-read
   * guard. */
  async resync(): Promise<void> {
    const since = this.store.lastReadingTime();
    await Promise.all([
      this.refreshNodes(),
      this.applyFresh(
        () => this.api.listAlarms(),
        (alarms) => this.store.setAlarms(alarms),
      ),
      this.guard(() => this.api.readings(since > 0 ? { since } : {})).then(
        (readings) => {
          if (readings) this.store.addReadings(readings);
        },
      ),
    ]);
  }

  private async pollMetrics(): Promise<void> {
    const snap = await this.guard(() => this.api.throughput());
    if (snap) {
      const t = Date.now() / 1000;
      for (const [proto, entry] of Object.entries(snap.protocols)) {
        this.store.addThroughputSample(proto, t, entry.kbps);
      }
    }
    const counters = await this.guard(() => this.api.counters());
    if (counters) this.store.setCounters(counters.totals);
  }

  /** 401 anywhere means the token is bad: surface the login prompt instead
   * of failing piecemeal. Other errors return undefined and leave stale
   * state in place, which beats blanking the page. */
  private async guard<T>(call: () => Promise<T>): Promise<T | undefined> {
    try {
      return await call();
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) this.onAuthFailure();
      return undefined;
    }
  }

  private dispatch(event: StreamEvent): void {
    switch (event.kind) {
      case "reading":
        this.store.addReading(event.data["reading"] as unknown as Reading);
        break;
      case "alarm":
        this.store.addBanner(event.data as unknown as AlarmEvent);
        break;
      case "node": {
        const incoming = event.data["node"] as unknown as NodeView;
        const known = this.store.nodes.get(incoming["node-id"]);
        // stream descriptors carry no last-seen; keep the one we have
        incoming["last-seen"] = known ? known["last-seen"] : null;
        this.store.upsertNode(incoming);
        break;
      }
      default:
        break; // diagnostics only matter in the counters panel for now
    }
  }

  // -- writes, optimistic where the UI shows the field ----------------------

  async setInterval(nodeId: string, seconds: number): Promise<EditResult> {
    if (!Number.isFinite(seconds) || seconds < 1) {
      return { ok: false, rejected: true, fieldError: "interval must be at least 1 s" };
    }
    const before = this.store.nodes.get(nodeId);
    if (!before) return { ok: false, fieldError: "unknown node" };
    this.store.upsertNode({ ...before, "capture-interval": seconds });
    try {
      const updated = await this.api.patchNode(nodeId, { "capture-interval": seconds });
      this.store.upsertNode(updated);
      return { ok: true };
    } catch (err) {
      this.store.upsertNode(before);
      // a lost response is not a lost write; converge on the gateway's view
      void this.refreshNodes();
      return this.editFailure(err);
    } finally {
      this.lastEditAt = Date.now();
    }
  }

  async assignProtocol(
    nodeId: string,
    sensorId: string,
    protocol: string,
  ): Promise<EditResult> {
    const before = this.store.nodes.get(nodeId);
    if (!before) return { ok: false, fieldError: "unknown node" };
    this.store.upsertNode({
      ...before,
      protocols: { ...before.protocols, [sensorId]: protocol as NodeView["protocols"][string] },
    });
    try {
      const updated = await this.api.patchNode(nodeId, {
        protocols: { [sensorId]: protocol },
      });
      this.store.upsertNode(updated);
      return { ok: true };
    } catch (err) {
      this.store.upsertNode(before);
      void this.refreshNodes();
      return this.editFailure(err);
    } finally {
      this.lastEditAt = Date.now();
    }
  }

  async createAlarm(rule: AlarmRule): Promise<EditResult> {
    if (!rule["rule-id"].trim()) {
      return { ok: false, rejected: true, fieldError: "rule id is required" };
    }
    if (!Number.isFinite(rule.threshold)) {
      return { ok: false, rejected: true, fieldError: "threshold must be a number" };
    }
    try {
      await this.api.createAlarm(rule);
      this.store.setAlarms(await this.api.listAlarms());
      return { ok: true };
    } catch (err) {
      return this.editFailure(err);
    } finally {
      this.lastEditAt = Date.now();
    }
  }

  async deleteAlarm(ruleId: string): Promise<EditResult> {
    try {
      await this.api.deleteAlarm(ruleId);
      this.store.setAlarms(await this.api.listAlarms());
      return { ok: true };
    } catch (err) {
      return this.editFailure(err);
    } finally {
      this.lastEditAt = Date.now();
    }
  }

  private editFailure(err: unknown): EditResult {
    if (err instanceof ApiError) {
      if (err.status === 401) this.onAuthFailure();
      return { ok: false, fieldError: err.detail };
    }
    return { ok: false, fieldError: err instanceof Error ? err.message : String(err) };
  }
}
