import { describe, expect, it, vi } from "vitest";
import { ApiClient, type FetchFn } from "../src/api.js";
import { UiSession } from "../src/session.js";
import { nodesView } from "../src/ui/nodes.js";
import { alarmsView, bannersView } from "../src/ui/alarms.js";
import { chartsView } from "../src/ui/charts.js";
import { appView, loginView } from "../src/ui/app.js";
import type { NodeView } from "../src/types.js";

const SENSORS = ["temp", "humidity", "radiation", "rainfall", "wind_speed", "wind_dir"];

function station(id: string): NodeView {
  return {
    "node-id": id,
    gps: "40.416500,-3.702560",
    "capture-interval": 6,
    sensors: SENSORS.map((s) => ({ "sensor-id": s, magnitude: "x", model: "" })),
    protocols: {
      temp: "wifi",
      humidity: "wifi",
      radiation: "zigbee",
      rainfall: "zigbee",
      wind_speed: "bluetooth",
      wind_dir: "bluetooth",
    },
    "last-seen": Date.now() / 1000,
  };
}

function quietSession(
  handler: () => { status: number; body?: unknown } = () => ({ status: 200, body: [] }),
): UiSession {
  const fetchFn: FetchFn = async () => {
    const { status, body } = handler();
    return new Response(JSON.stringify(body ?? null), { status });
  };
  return new UiSession(new ApiClient("http://gw.test", "tok", fetchFn), { pollMs: 0 });
}

describe("nodesView", () => {
  it("renders one row per node and a badge per sensor", () => {
    const s = quietSession();
    s.store.setNodes([station("n1"), station("n2")]);
    const view = nodesView(s);
    expect(view.querySelectorAll("tr[data-node]")).toHaveLength(2);
    expect(view.querySelectorAll(".badge")).toHaveLength(12);
    expect(view.querySelectorAll(".badge.proto-bluetooth")).toHaveLength(4);
  });

  it("shows an empty state with no nodes", () => {
    const view = nodesView(quietSession());
    expect(view.querySelector(".empty")?.textContent).toMatch(/No nodes/);
  });

  it("re-renders when the registry changes", () => {
    const s = quietSession();
    const view = nodesView(s);
    s.store.setNodes([station("n1")]);
    expect(view.querySelectorAll("tr[data-node]")).toHaveLength(1);
  });

  it("surfaces a rejected interval edit inline, next to the field", async () => {
    const s = quietSession(() => ({ status: 422, body: { error: "capture_interval must be >= 1 s" } }));
    s.store.setNodes([station("n1")]);
    const view = nodesView(s);
    const input = view.querySelector<HTMLInputElement>("td.interval input")!;
    input.value = "0";
    view.querySelector<HTMLButtonElement>("td.interval button")!.click();
    await vi.waitFor(() => {
      expect(view.querySelector(".field-error")?.textContent).toMatch(/at least 1/);
    });
    // the optimistic value never stuck: local validation refused to send
    expect(s.store.nodes.get("n1")?.["capture-interval"]).toBe(6);
  });
});

describe("alarm views", () => {
  it("lists rules and shows fired banners", () => {
    const s = quietSession();
    s.store.setAlarms([
      { "rule-id": "hot", node: "*", sensor: "temp", comparator: ">", threshold: 30, message: "hot" },
    ]);
    const rules = alarmsView(s);
    expect(rules.querySelectorAll(".alarm-rule")).toHaveLength(1);

    const banners = bannersView(s);
    s.store.addBanner({
      "rule-id": "hot",
      message: "too hot",
      reading: {
        "node-id": "n1",
        gps: "",
        protocol: "wifi",
        date: "2020-01-01T00:00:06Z",
        "sensor-id": "temp",
        value: 31.5,
        magnitude: "celsius",
        "gate-id": "gw1",
        "network-id": "net1",
      },
      "fired-at": 6,
    });
    expect(banners.querySelectorAll(".banner")).toHaveLength(1);
    expect(banners.textContent).toContain("too hot");
    banners.querySelector<HTMLButtonElement>(".dismiss")!.click();
    expect(banners.querySelectorAll(".banner")).toHaveLength(0);
  });
});

describe("chartsView", () => {
  it("degrades to a note when no chart runtime is present", () => {
    const view = chartsView(quietSession());
    expect(view.textContent).toContain("charts unavailable");
  });
});

describe("app shell", () => {
  it("reflects stream status changes in the header", () => {
    const s = quietSession();
    const view = appView(s);
    s.store.setStreamStatus("open");
    expect(view.querySelector(".stream-status")?.textContent).toBe("open");
    s.store.setStreamStatus("retrying", "socket closed");
    expect(view.querySelector(".stream-status")?.className).toContain("retrying");
  });

  it("hands the entered token to the session factory", () => {
    let got = "";
    const view = loginView((token) => {
      got = token;
    });
    const input = view.querySelector<HTMLInputElement>("input")!;
    input.value = "  secret ";
    view.querySelector<HTMLButtonElement>("button")!.click();
    expect(got).toBe("secret");
  });
});
