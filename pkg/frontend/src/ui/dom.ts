/** Tiny DOM builders; enough that views stay declarative without a framework. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function clear(node: HTMLElement): HTMLElement {
  node.replaceChildren();
  return node;
}

export function toast(message: string, kind: "ok" | "error" = "ok"): void {
  const note = el("div", { class: `toast ${kind}` }, message);
  document.body.append(note);
  setTimeout(() => note.remove(), 4000);
}
