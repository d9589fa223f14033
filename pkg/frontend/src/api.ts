import type {
  AlarmRule,
  Counters,
  NodeView,
  Reading,
  ThroughputSnapshot,
} from "./types.js";

/** Non-2xx response, carrying whatever the gateway said went wrong. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchFn = typeof fetch;

/** Thin typed client over the gateway REST API. The token lives here and
 * only here, for the lifetime of the page. */
export class ApiClient {
  constructor(
    readonly base: string,
    private token: string,
    private fetchFn: FetchFn = (...args) => fetch(...args),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await this.fetchFn(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (resp.status === 204) return undefined as T;
    const text = await resp.text();
    let parsed: unknown = null;
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      // non-JSON error bodies fall through with the raw text
    }
    if (!resp.ok) {
      const detail =
        parsed && typeof parsed === "object" && "error" in parsed
          ? String((parsed as { error: unknown }).error)
          : text || resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return parsed as T;
  }

  listNodes(): Promise<NodeView[]> {
    return this.request("GET", "/nodes");
  }

  registerNode(descriptor: Omit<NodeView, "last-seen">): Promise<NodeView> {
    return this.request("POST", "/nodes", descriptor);
  }

  patchNode(
    nodeId: string,
    change: { "capture-interval"?: number; protocols?: Record<string, string> },
  ): Promise<NodeView> {
    return this.request("PATCH", `/nodes/${encodeURIComponent(nodeId)}`, change);
  }

  readings(params: { since?: number | string; node?: string; sensor?: string } = {}): Promise<Reading[]> {
    const q = new URLSearchParams();
    if (params.since !== undefined) q.set("since", String(params.since));
    if (params.node) q.set("node", params.node);
    if (params.sensor) q.set("sensor", params.sensor);
    const qs = q.toString();
    return this.request("GET", `/readings${qs ? "?" + qs : ""}`);
  }

  throughput(window?: number): Promise<ThroughputSnapshot> {
    const qs = window !== undefined ? `?window=${window}` : "";
    return this.request("GET", `/metrics/throughput${qs}`);
  }

  listAlarms(): Promise<AlarmRule[]> {
    return this.request("GET", "/alarms");
  }

  createAlarm(rule: AlarmRule): Promise<AlarmRule> {
    return this.request("POST", "/alarms", rule);
  }

  deleteAlarm(ruleId: string): Promise<void> {
    return this.request("DELETE", `/alarms/${encodeURIComponent(ruleId)}`);
  }

  counters(): Promise<Counters> {
    return this.request("GET", "/counters");
  }

  /** Raw streaming GET of /events; the caller owns parsing and retries. */
  openStream(signal: AbortSignal): Promise<Response> {
    return this.fetchFn(this.base + "/events", {
      headers: { Authorization: `Bearer ${this.token}` },
      signal,
    });
  }
}
