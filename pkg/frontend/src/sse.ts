import type { StreamEvent } from "./types.js";
import type { ApiClient } from "./api.js";

/** Incremental parser for the gateway's event stream: blocks of
 * `event:`/`data:` lines separated by a blank line. Comment lines
 * (": keep-alive") mark liveness but carry no event. */
export class SseParser {
  private buffer = "";

  push(text: string): StreamEvent[] {
    this.buffer += text;
    const events: StreamEvent[] = [];
    let split: number;
    while ((split = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const event = parseBlock(block);
      if (event) events.push(event);
    }
    return events;
  }
}

function parseBlock(block: string): StreamEvent | null {
  let kind = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith(":") || line === "") continue;
    if (line.startsWith("event:")) kind = line.slice(6).trim();
    else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
  }
  if (!dataLines.length) return null;
  try {
    return { kind, data: JSON.parse(dataLines.join("\n")) };
  } catch {
    return null; // tolerate a torn line rather than killing the stream
  }
}

export type StreamStatus = "connecting" | "open" | "retrying" | "stopped";

export interface EventStreamOptions {
  minDelayMs?: number;
  maxDelayMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

/** One long-lived /events connection. Reconnects on any failure with
 * exponential backoff; the delay resets once a connection delivers bytes. */
export class EventStream {
  onEvent: (event: StreamEvent) => void = () => {};
  onStatus: (status: StreamStatus, detail?: string) => void = () => {};

  private controller: AbortController | null = null;
  private running = false;
  private readonly minDelay: number;
  private readonly maxDelay: number;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    private readonly api: ApiClient,
    opts: EventStreamOptions = {},
  ) {
    this.minDelay = opts.minDelayMs ?? 1000;
    this.maxDelay = opts.maxDelayMs ?? 30000;
    this.sleep = opts.sleep ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    void this.run();
  }

  stop(): void {
    this.running = false;
    this.controller?.abort();
    this.onStatus("stopped");
  }

  private async run(): Promise<void> {
    let delay = this.minDelay;
    while (this.running) {
      this.controller = new AbortController();
      this.onStatus("connecting");
      try {
        const resp = await this.api.openStream(this.controller.signal);
        if (!resp.ok || !resp.body) {
          throw new Error(`stream rejected: HTTP ${resp.status}`);
        }
        this.onStatus("open");
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          delay = this.minDelay; // healthy connection, forget past failures
          for (const event of parser.push(decoder.decode(value, { stream: true }))) {
            this.onEvent(event);
          }
        }
      } catch (err) {
        if (!this.running) return;
        this.onStatus("retrying", err instanceof Error ? err.message : String(err));
      }
      if (!this.running) return;
      this.onStatus("retrying");
      await this.sleep(delay);
      delay = Math.min(delay * 2, this.maxDelay);
    }
  }
}
