import { describe, expect, it } from "vitest";
import { SseParser, EventStream } from "../src/sse.js";
import type { ApiClient } from "../src/api.js";
import type { StreamEvent } from "../src/types.js";

describe("SseParser", () => {
  it("parses a complete event block", () => {
    const parser = new SseParser();
    const events = parser.push('event: reading\ndata: {"value": 1}\n\n');
    expect(events).toEqual([{ kind: "reading", data: { value: 1 } }]);
  });

  it("reassembles events split across arbitrary chunk boundaries", () => {
    const parser = new SseParser();
    const wire = 'event: alarm\ndata: {"rule-id": "hot"}\n\nevent: reading\ndata: {"value": 2}\n\n';
    const events: StreamEvent[] = [];
    for (const ch of wire) events.push(...parser.push(ch));
    expect(events.map((e) => e.kind)).toEqual(["alarm", "reading"]);
    expect(events[0].data["rule-id"]).toBe("hot");
  });

  it("ignores comment keep-alives and the open marker", () => {
    const parser = new SseParser();
    expect(parser.push(": stream open\n\n: keep-alive\n\n")).toEqual([]);
  });

  it("drops an unparseable data line without dying", () => {
    const parser = new SseParser();
    expect(parser.push("event: x\ndata: {broken\n\n")).toEqual([]);
    expect(parser.push('event: y\ndata: {"ok": true}\n\n')).toHaveLength(1);
  });
});

function streamResponse(blocks: string[]): Response {
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const block of blocks) controller.enqueue(new TextEncoder().encode(block));
      controller.close();
    },
  });
  return new Response(body, { status: 200 });
}

function fakeApi(connections: (() => Response | Error)[]): ApiClient {
  let i = 0;
  return {
    openStream: async () => {
      const next = connections[Math.min(i++, connections.length - 1)]();
      if (next instanceof Error) throw next;
      return next;
    },
  } as unknown as ApiClient;
}

describe("EventStream", () => {
  it("delivers events then reconnects when the stream ends", async () => {
    const api = fakeApi([
      () => streamResponse(['event: reading\ndata: {"n": 1}\n\n']),
      () => streamResponse(['event: reading\ndata: {"n": 2}\n\n']),
    ]);
    const delays: number[] = [];
    const stream = new EventStream(api, {
      minDelayMs: 10,
      sleep: async (ms) => {
        delays.push(ms);
      },
    });
    const seen: StreamEvent[] = [];
    const done = new Promise<void>((resolve) => {
      stream.onEvent = (e) => {
        seen.push(e);
        if (seen.length === 2) {
          stream.stop();
          resolve();
        }
      };
    });
    stream.start();
    await done;
    expect(seen.map((e) => e.data["n"])).toEqual([1, 2]);
    expect(delays.length).toBeGreaterThanOrEqual(1);
  });

  it("backs off exponentially while the endpoint is down", async () => {
    let failures = 0;
    const api = fakeApi([
      () => {
        failures++;
        return new Error("refused");
      },
    ]);
    const delays: number[] = [];
    const stream = new EventStream(api, {
      minDelayMs: 100,
      maxDelayMs: 400,
      sleep: async (ms) => {
        delays.push(ms);
        if (delays.length === 4) stream.stop();
      },
    });
    stream.start();
    await new Promise((r) => setTimeout(r, 20));
    expect(failures).toBeGreaterThanOrEqual(4);
    expect(delays).toEqual([100, 200, 400, 400]);
  });

  it("reports statuses around a failed connect", async () => {
    const api = fakeApi([() => new Error("refused")]);
    const statuses: string[] = [];
    const stream = new EventStream(api, {
      minDelayMs: 1,
      sleep: async () => {
        stream.stop();
      },
    });
    stream.onStatus = (s) => statuses.push(s);
    stream.start();
    await new Promise((r) => setTimeout(r, 20));
    expect(statuses[0]).toBe("connecting");
    expect(statuses).toContain("retrying");
    expect(statuses[statuses.length - 1]).toBe("stopped");
  });
});
