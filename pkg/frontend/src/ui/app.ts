import type { UiSession } from "../session.js";
import { clear, el } from "./dom.js";
import { nodesView } from "./nodes.js";
import { chartsView } from "./charts.js";
import { alarmsView, bannersView } from "./alarms.js";

/** Top-level layout once a session is live: status header, banners, the
 * three panels. */
export function appView(session: UiSession): HTMLElement {
  const status = el("span", { class: "stream-status" });
  const render = () => {
    status.textContent = session.store.streamStatus;
    status.className = `stream-status ${session.store.streamStatus}`;
    status.title = session.store.streamDetail;
  };
  session.store.subscribe((topic) => {
    if (topic === "status") render();
  });
  render();

  return el(
    "div",
    { class: "app" },
    el("header", {}, el("h1", {}, "gateway dashboard"), el("span", {}, "stream: "), status),
    bannersView(session),
    nodesView(session),
    chartsView(session),
    alarmsView(session),
  );
}

/** Token prompt. The token is handed to the session and kept in memory
 * only; a reload always lands back here. */
export function loginView(onToken: (token: string) => void, note = ""): HTMLElement {
  const input = el("input", { type: "password", placeholder: "API token" });
  const button = el("button", {}, "connect");
  const message = el("p", { class: "field-error" }, note);
  const submit = () => {
    if (input.value.trim()) onToken(input.value.trim());
  };
  button.addEventListener("click", submit);
  input.addEventListener("keydown", (e) => {
    if ((e as KeyboardEvent).key === "Enter") submit();
  });
  return el(
    "div",
    { class: "login" },
    el("h1", {}, "gateway dashboard"),
    el("p", {}, "Enter the gateway API token to connect."),
    input,
    button,
    message,
  );
}

export function mount(root: HTMLElement, view: HTMLElement): void {
  clear(root).append(view);
}
