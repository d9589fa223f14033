import type { UiSession } from "../session.js";
import type { NodeView } from "../types.js";
import { PROTOCOLS } from "../types.js";
import { ago } from "../format.js";
import { clear, el, toast } from "./dom.js";

/** Registry table: one row per node, a protocol badge per sensor, and
 * inline editors for capture interval and per-sensor protocol. */
export function nodesView(session: UiSession): HTMLElement {
  const root = el("section", { class: "panel nodes-panel" });
  const render = () => {
    clear(root);
    root.append(el("h2", {}, "Nodes"));
    const nodes = [...session.store.nodes.values()];
    if (!nodes.length) {
      root.append(el("p", { class: "empty" }, "No nodes registered yet."));
      return;
    }
    const table = el("table", { class: "nodes" });
    table.append(
      el(
        "tr",
        {},
        el("th", {}, "node"),
        el("th", {}, "gps"),
        el("th", {}, "last seen"),
        el("th", {}, "interval"),
        el("th", {}, "sensors"),
      ),
    );
    for (const node of nodes) table.append(nodeRow(session, node));
    root.append(table);
  };
  session.store.subscribe((topic) => {
    if (topic === "nodes") render();
  });
  render();
  return root;
}

function nodeRow(session: UiSession, node: NodeView): HTMLTableRowElement {
  const row = el("tr", { "data-node": node["node-id"] });
  row.append(
    el("td", { class: "node-id" }, node["node-id"]),
    el("td", {}, node.gps),
    el("td", { class: "last-seen" }, ago(node["last-seen"])),
    intervalCell(session, node),
    sensorsCell(session, node),
  );
  return row;
}

function intervalCell(session: UiSession, node: NodeView): HTMLTableCellElement {
  const cell = el("td", { class: "interval" });
  const input = el("input", {
    type: "number",
    min: "1",
    step: "1",
    value: String(node["capture-interval"]),
  });
  const error = el("span", { class: "field-error" });
  const save = el("button", {}, "set");
  save.addEventListener("click", () => {
    error.textContent = "";
    void session.setInterval(node["node-id"], Number(input.value)).then((result) => {
      if (result.ok) toast(`${node["node-id"]}: interval set`);
      else error.textContent = result.fieldError ?? "failed";
    });
  });
  cell.append(input, el("span", { class: "unit" }, "s"), save, error);
  return cell;
}

function sensorsCell(session: UiSession, node: NodeView): HTMLTableCellElement {
  const cell = el("td", { class: "sensors" });
  for (const sensor of node.sensors) {
    const sid = sensor["sensor-id"];
    const proto = node.protocols[sid] ?? "wifi";
    const badge = el(
      "span",
      { class: `badge proto-${proto}`, "data-sensor": sid, title: sensor.magnitude },
      sid,
    );
    const select = el("select", { "data-sensor": sid });
    for (const name of PROTOCOLS) {
      const opt = el("option", { value: name }, name);
      if (name === proto) opt.selected = true;
      select.append(opt);
    }
    select.addEventListener("change", () => {
      void session
        .assignProtocol(node["node-id"], sid, select.value)
        .then((result) => {
          if (result.ok) toast(`${sid} now on ${select.value}`);
          else toast(result.fieldError ?? "reassignment failed", "error");
        });
    });
    cell.append(el("span", { class: "sensor" }, badge, select));
  }
  return cell;
}
