export function ago(epochSeconds: number | null, now = Date.now() / 1000): string {
  if (epochSeconds === null) return "never";
  const delta = Math.max(0, now - epochSeconds);
  if (delta < 2) return "just now";
  if (delta < 90) return `${Math.round(delta)} s ago`;
  if (delta < 5400) return `${Math.round(delta / 60)} min ago`;
  return `${Math.round(delta / 3600)} h ago`;
}

export function fmtValue(value: number): string {
  if (Number.isInteger(value)) return String(value);
  return value.toFixed(Math.abs(value) < 10 ? 2 : 1);
}

export function fmtClock(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().slice(11, 19);
}
