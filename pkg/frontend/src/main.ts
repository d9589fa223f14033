import { ApiClient } from "./api.js";
import { UiSession } from "./session.js";
import { appView, loginView, mount } from "./ui/app.js";

/** The dashboard is static files; by default it talks to whatever host
 * serves it, and `?api=http://host:port` points it elsewhere. */
function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return (override ?? window.location.origin).replace(/\/$/, "");
}

function boot(): void {
  const root = document.getElementById("root");
  if (!root) throw new Error("missing #root element");

  let session: UiSession | null = null;

  const showLogin = (note = "") => {
    session?.disconnect();
    session = null;
    mount(root, loginView(start, note));
  };

  const start = (token: string) => {
    const api = new ApiClient(apiBase(), token);
    session = new UiSession(api);
    session.onAuthFailure = () => showLogin("token rejected, try again");
    mount(root, appView(session));
    void session.connect();
  };

  showLogin();
}

boot();
