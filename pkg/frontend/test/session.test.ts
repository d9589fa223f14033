import { describe, expect, it } from "vitest";
import { ApiClient, type FetchFn } from "../src/api.js";
import { UiSession } from "../src/session.js";
import type { NodeView, Reading } from "../src/types.js";

interface Call {
  method: string;
  path: string;
  body: unknown;
}

function fakeFetch(
  handler: (call: Call) => { status: number; body?: unknown },
): { fetchFn: FetchFn; calls: Call[] } {
  const calls: Call[] = [];
  const fetchFn: FetchFn = async (input, init) => {
    const url = new URL(String(input));
    const call: Call = {
      method: init?.method ?? "GET",
      path: url.pathname + url.search,
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    };
    calls.push(call);
    const { status, body } = handler(call);
    return new Response(body === undefined ? null : JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls };
}

function node(id = "n1", interval = 6): NodeView {
  return {
    "node-id": id,
    gps: "1.000000,2.000000",
    "capture-interval": interval,
    sensors: [
      { "sensor-id": "temp", magnitude: "celsius", model: "am2315" },
      { "sensor-id": "humidity", magnitude: "percent", model: "am2315" },
    ],
    protocols: { temp: "wifi", humidity: "wifi" },
    "last-seen": 1577836806,
  };
}

function session(handler: (call: Call) => { status: number; body?: unknown }) {
  const { fetchFn, calls } = fakeFetch(handler);
  const api = new ApiClient("http://gw.test", "tok", fetchFn);
  return { session: new UiSession(api, { pollMs: 0 }), calls };
}

describe("UiSession edits", () => {
  it("applies an interval change optimistically and keeps the server view", async () => {
    const updated = node("n1", 12);
    const { session: s, calls } = session(() => ({ status: 200, body: updated }));
    s.store.setNodes([node()]);
    const result = await s.setInterval("n1", 12);
    expect(result.ok).toBe(true);
    expect(calls).toEqual([
      { method: "PATCH", path: "/nodes/n1", body: { "capture-interval": 12 } },
    ]);
    expect(s.store.nodes.get("n1")?.["capture-interval"]).toBe(12);
  });

  it("refuses an interval below 1 s locally, without any request", async () => {
    const { session: s, calls } = session(() => ({ status: 500 }));
    s.store.setNodes([node()]);
    const result = await s.setInterval("n1", 0);
    expect(result.ok).toBe(false);
    expect(result.rejected).toBe(true);
    expect(result.fieldError).toMatch(/at least 1/);
    expect(calls).toHaveLength(0);
    expect(s.store.nodes.get("n1")?.["capture-interval"]).toBe(6);
  });

  it("reverts the optimistic protocol badge when the gateway says 422", async () => {
    const { session: s } = session(() => ({
      status: 422,
      body: { error: "unknown protocol: 'lora'" },
    }));
    s.store.setNodes([node()]);
    let sawOptimistic = false;
    s.store.subscribe(() => {
      if (s.store.nodes.get("n1")?.protocols.temp === "lora") sawOptimistic = true;
    });
    const result = await s.assignProtocol("n1", "temp", "lora");
    expect(result.ok).toBe(false);
    expect(result.fieldError).toContain("unknown protocol");
    expect(sawOptimistic).toBe(true);
    expect(s.store.nodes.get("n1")?.protocols.temp).toBe("wifi");
  });

  it("funnels 401 responses into the auth-failure hook", async () => {
    const { session: s } = session(() => ({ status: 401, body: { error: "bad token" } }));
    s.store.setNodes([node()]);
    let loggedOut = false;
    s.onAuthFailure = () => {
      loggedOut = true;
    };
    const result = await s.setInterval("n1", 12);
    expect(result.ok).toBe(false);
    expect(loggedOut).toBe(true);
  });

  it("validates alarm fields before sending", async () => {
    const { session: s, calls } = session(() => ({ status: 500 }));
    const result = await s.createAlarm({
      "rule-id": "hot",
      node: "*",
      sensor: "temp",
      comparator: ">",
      threshold: NaN,
      message: "",
    });
    expect(result.rejected).toBe(true);
    expect(calls).toHaveLength(0);
  });
});

describe("UiSession stream dispatch", () => {
  const dispatch = (s: UiSession, kind: string, data: Record<string, unknown>) =>
    s.stream.onEvent({ kind, data });

  it("feeds reading events into the series store", () => {
    const { session: s } = session(() => ({ status: 200, body: [] }));
    const wire: Reading = {
      "node-id": "n1",
      gps: "1.000000,2.000000",
      protocol: "wifi",
      date: "2020-01-01T00:00:06Z",
      "sensor-id": "temp",
      value: 21.5,
      magnitude: "celsius",
      "gate-id": "gw1",
      "network-id": "net1",
    };
    dispatch(s, "reading", { reading: wire as unknown as Record<string, unknown>, seq: 1 });
    expect(s.store.seriesFor("n1", "temp")).toEqual([{ t: 1577836806, v: 21.5 }]);
  });

  it("turns alarm events into banners", () => {
    const { session: s } = session(() => ({ status: 200, body: [] }));
    dispatch(s, "alarm", {
      "rule-id": "hot",
      message: "too hot",
      reading: {},
      "fired-at": 1,
    });
    expect(s.store.banners).toHaveLength(1);
    expect(s.store.banners[0].alarm["rule-id"]).toBe("hot");
  });

  it("upserts node events but keeps the known last-seen", () => {
    const { session: s } = session(() => ({ status: 200, body: [] }));
    s.store.setNodes([node()]);
    const descriptor = { ...node("n1", 12) } as Record<string, unknown>;
    delete descriptor["last-seen"]; // stream descriptors never carry it
    dispatch(s, "node", { action: "updated", node: descriptor });
    const seen = s.store.nodes.get("n1");
    expect(seen?.["capture-interval"]).toBe(12);
    expect(seen?.["last-seen"]).toBe(1577836806);
  });
});

describe("UiSession resync", () => {
  it("rebuilds nodes, alarms and readings from plain GETs", async () => {
    const { session: s, calls } = session((call) => {
      if (call.path === "/nodes") return { status: 200, body: [node()] };
      if (call.path === "/alarms")
        return {
          status: 200,
          body: [
            { "rule-id": "hot", node: "*", sensor: "temp", comparator: ">", threshold: 30, message: "" },
          ],
        };
      if (call.path.startsWith("/readings")) return { status: 200, body: [] };
      return { status: 404, body: { error: "no such route" } };
    });
    await s.resync();
    expect(s.store.nodes.size).toBe(1);
    expect(s.store.alarms).toHaveLength(1);
    expect(calls.map((c) => c.path.split("?")[0]).sort()).toEqual([
      "/alarms",
      "/nodes",
      "/readings",
    ]);
  });

  it("discards a bulk node read that started before an edit settled", async () => {
    // a reconnect resync can snapshot /nodes just before a PATCH lands and
    // deliver it just after; that snapshot must never overwrite the edit
    let nodeReads = 0;
    let releaseStale!: () => void;
    const staleGate = new Promise<void>((resolve) => (releaseStale = resolve));
    const json = (body: unknown) =>
      new Response(JSON.stringify(body), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    const fetchFn: FetchFn = async (input, init) => {
      const url = new URL(String(input));
      const method = init?.method ?? "GET";
      if (url.pathname === "/nodes" && method === "GET") {
        nodeReads += 1;
        if (nodeReads === 1) {
          await staleGate;
          return json([node("n1", 6)]);
        }
        return json([node("n1", 9)]);
      }
      if (url.pathname === "/nodes/n1" && method === "PATCH") return json(node("n1", 9));
      if (url.pathname === "/alarms") return json([]);
      if (url.pathname.startsWith("/readings")) return json([]);
      return new Response(JSON.stringify({ error: "no such route" }), { status: 404 });
    };
    const api = new ApiClient("http://gw.test", "tok", fetchFn);
    const s = new UiSession(api, { pollMs: 0 });
    s.store.setNodes([node("n1", 6)]);

    const straggler = s.resync(); // parks its GET /nodes on the gate
    await s.setInterval("n1", 9); // the edit settles while that read is in flight
    releaseStale();
    await straggler;

    expect(s.store.nodes.get("n1")?.["capture-interval"]).toBe(9);
    expect(nodeReads).toBeGreaterThanOrEqual(2); // stale snapshot was refetched, not applied
  });
});
