import type { UiSession } from "../session.js";
import { fmtValue } from "../format.js";
import { clear, el, toast } from "./dom.js";

const COMPARATORS = [">", ">=", "<", "<=", "==", "!="];

/** Fired-alarm banners, newest on top. Lives outside the alarm panel so a
 * banner is visible whatever the operator is looking at. */
export function bannersView(session: UiSession): HTMLElement {
  const root = el("div", { class: "banners" });
  const render = () => {
    clear(root);
    session.store.banners.forEach((banner, i) => {
      const r = banner.alarm.reading;
      const line = el(
        "div",
        { class: "banner", "data-rule": banner.alarm["rule-id"] },
        el("strong", {}, banner.alarm["rule-id"]),
        ` ${banner.alarm.message} `,
        el(
          "span",
          { class: "banner-detail" },
          `${r["node-id"]}/${r["sensor-id"]} = ${fmtValue(r.value)} ${r.magnitude}`,
        ),
      );
      const dismiss = el("button", { class: "dismiss" }, "x");
      dismiss.addEventListener("click", () => session.store.dismissBanner(i));
      line.append(dismiss);
      root.append(line);
    });
  };
  session.store.subscribe((topic) => {
    if (topic === "banners") render();
  });
  render();
  return root;
}

/** Threshold-rule CRUD against the live gateway. */
export function alarmsView(session: UiSession): HTMLElement {
  const root = el("section", { class: "panel alarms-panel" });

  const list = el("div", { class: "alarm-list" });
  const renderList = () => {
    clear(list);
    if (!session.store.alarms.length) {
      list.append(el("p", { class: "empty" }, "No alarm rules."));
      return;
    }
    for (const rule of session.store.alarms) {
      const row = el(
        "div",
        { class: "alarm-rule", "data-rule": rule["rule-id"] },
        el("code", {}, rule["rule-id"]),
        ` when ${rule.node}/${rule.sensor} ${rule.comparator} ${rule.threshold}`,
        rule.message ? ` : "${rule.message}"` : "",
      );
      const del = el("button", {}, "delete");
      del.addEventListener("click", () => {
        void session.deleteAlarm(rule["rule-id"]).then((result) => {
          if (result.ok) toast(`rule ${rule["rule-id"]} deleted`);
          else toast(result.fieldError ?? "delete failed", "error");
        });
      });
      row.append(del);
      list.append(row);
    }
  };

  const ruleId = el("input", { placeholder: "rule id" });
  const node = el("input", { placeholder: "node or *", value: "*" });
  const sensor = el("input", { placeholder: "sensor or *", value: "*" });
  const comparator = el("select", {});
  for (const c of COMPARATORS) comparator.append(el("option", { value: c }, c));
  const threshold = el("input", { placeholder: "threshold", type: "number", step: "any" });
  const message = el("input", { placeholder: "message (optional)" });
  const error = el("span", { class: "field-error" });
  const create = el("button", {}, "add rule");
  create.addEventListener("click", () => {
    error.textContent = "";
    void session
      .createAlarm({
        "rule-id": ruleId.value.trim(),
        node: node.value.trim() || "*",
        sensor: sensor.value.trim() || "*",
        comparator: comparator.value,
        threshold: Number(threshold.value === "" ? NaN : threshold.value),
        message: message.value,
      })
      .then((result) => {
        if (result.ok) {
          toast(`rule ${ruleId.value.trim()} created`);
          ruleId.value = "";
          threshold.value = "";
          message.value = "";
        } else {
          error.textContent = result.fieldError ?? "failed";
        }
      });
  });

  root.append(
    el("h2", {}, "Alarms"),
    list,
    el(
      "div",
      { class: "alarm-form" },
      ruleId,
      node,
      sensor,
      comparator,
      threshold,
      message,
      create,
      error,
    ),
  );
  session.store.subscribe((topic) => {
    if (topic === "alarms") renderList();
  });
  renderList();
  return root;
}
