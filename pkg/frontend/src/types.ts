/** Wire shapes of the gateway REST + event-stream API. Field names mirror
 * the JSON exactly (kebab-case), so views never translate keys. */

export type ProtocolName = "wifi" | "bluetooth" | "zigbee";

export const PROTOCOLS: readonly ProtocolName[] = ["wifi", "bluetooth", "zigbee"];

export interface SensorEntry {
  "sensor-id": string;
  magnitude: string;
  model: string;
}

export interface NodeView {
  "node-id": string;
  gps: string;
  "capture-interval": number;
  sensors: SensorEntry[];
  protocols: Record<string, ProtocolName>;
  "last-seen": number | null;
}

export interface Reading {
  "node-id": string;
  gps: string;
  protocol: ProtocolName;
  date: string;
  "sensor-id": string;
  value: number;
  magnitude: string;
  "gate-id": string;
  "network-id": string;
}

export interface AlarmRule {
  "rule-id": string;
  node: string;
  sensor: string;
  comparator: string;
  threshold: number;
  message: string;
}

export interface AlarmEvent {
  "rule-id": string;
  message: string;
  reading: Reading;
  "fired-at": number;
}

export interface ThroughputSnapshot {
  window: number;
  protocols: Record<string, { kbps: number; nodes: Record<string, number> }>;
}

export interface Counters {
  "per-protocol": Record<string, Record<string, number>>;
  totals: Record<string, number>;
}

/** One parsed server-sent event. `data` carries the JSON body, which the
 * gateway stamps with {event, seq}. */
export interface StreamEvent {
  kind: string;
  data: Record<string, unknown>;
}
