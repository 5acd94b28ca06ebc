// Rendering: pure row models first, thin DOM writers second.
// The models are what the tests pin against the API payloads.

import { EventView, GlobalView, NodeView } from "./api.js";

export interface GlobalRowModel {
  node: number;
  color: string; // visual marker color, straight from the gateway
  configuration: string; // net role
  status: string;
  lastEventId: number;
  href: string; // in-app link to the node panel
}

export function globalRowModels(view: GlobalView): GlobalRowModel[] {
  return view.nodes.map((row) => ({
    node: row.node,
    color: row.color,
    configuration: row.role,
    status: row.status,
    lastEventId: row.last_event_id,
    href: `#/node/${row.node}`,
  }));
}

export interface NodeEventRowModel {
  eventId: number;
  elapsedSeconds: number;
  summary: string;
  href: string;
}

export function nodeEventRowModels(view: NodeView): NodeEventRowModel[] {
  return view.events.map((ev) => ({
    eventId: ev.event_id,
    elapsedSeconds: ev.elapsed_seconds,
    summary: ev.summary,
    href: `#/event/${ev.event_id}`,
  }));
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderGlobalTable(root: HTMLElement, view: GlobalView): void {
  const table = el("table", "global-table");
  const head = el("tr");
  for (const title of ["visual", "node", "configuration", "status", "events"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const row of globalRowModels(view)) {
    const tr = el("tr", `node-row status-${row.status.toLowerCase()}`);
    tr.dataset.node = String(row.node);

    const visual = el("td", "visual");
    const link = el("a", "icon-link");
    link.href = row.href;
    const dot = el("span", `dot ${row.color}`);
    dot.title = `open node ${row.node}`;
    link.appendChild(dot);
    visual.appendChild(link);
    tr.appendChild(visual);

    tr.appendChild(el("td", "node-id", String(row.node)));
    tr.appendChild(el("td", "configuration", row.configuration));
    tr.appendChild(el("td", `status ${row.color}`, row.status));

    const events = el("td", "events");
    const eventsLink = el("a", undefined, `#${row.lastEventId}`);
    eventsLink.href = row.href;
    events.appendChild(eventsLink);
    tr.appendChild(events);

    table.appendChild(tr);
  }
  root.replaceChildren(table);
}

export function renderRunMeta(root: HTMLElement, view: GlobalView): void {
  const state = view.system_failed
    ? "system FAILED"
    : view.run_ended
      ? "run ended"
      : view.run_active
        ? "run active"
        : "waiting for a run";
  root.replaceChildren(
    el(
      "div",
      "run-meta",
      `tick ${view.tick} · ${(view.tick * view.seconds_per_tick).toFixed(1)}s elapsed · ` +
        `${state} · update #${view.update_seq}`,
    ),
  );
}

export function renderNodePanel(
  root: HTMLElement,
  view: NodeView,
  secondsPerTick: number,
): void {
  const panel = el("div", "node-panel");
  panel.appendChild(el("h2", undefined, `Node ${view.node} events`));
  panel.appendChild(
    el(
      "div",
      "staleness",
      `as of tick ${view.as_of_tick} (event #${view.as_of_event_id})`,
    ),
  );
  const rows = nodeEventRowModels(view);
  if (rows.length === 0) {
    panel.appendChild(el("div", "empty", "nothing has happened on this node yet"));
  } else {
    const list = el("ol", "event-list");
    for (const row of rows) {
      const item = el("li", "event-row");
      item.appendChild(el("span", "elapsed", `${row.elapsedSeconds.toFixed(1)}s`));
      const link = el("a", "summary", row.summary);
      link.href = row.href;
      item.appendChild(link);
      list.appendChild(item);
    }
    panel.appendChild(list);
  }
  root.replaceChildren(panel);
}

export function renderEventPanel(root: HTMLElement, view: EventView): void {
  const panel = el("div", "event-panel");
  panel.appendChild(el("h2", undefined, `Event #${view.event.event_id}`));
  const back = el("a", "back-link", `back to node ${view.event.node}`);
  back.href = `#/node/${view.event.node}`;
  panel.appendChild(back);
  const facts = el("div", "event-facts");
  facts.appendChild(
    el(
      "div",
      undefined,
      `tick ${view.event.tick} · ${view.event.elapsed_seconds.toFixed(1)}s · ` +
        `node ${view.event.node} · ${view.event.component_id}`,
    ),
  );
  if (view.event.from && view.event.to) {
    facts.appendChild(el("div", "transition", `${view.event.from} -> ${view.event.to}`));
  }
  panel.appendChild(facts);
  panel.appendChild(el("h3", undefined, view.event.summary));
  const detail = el("pre", "detail");
  detail.textContent = view.event.detail; // verbatim, line breaks preserved
  panel.appendChild(detail);
  root.replaceChildren(panel);
}

export function renderNotFound(root: HTMLElement, what: string): void {
  root.replaceChildren(el("div", "not-found", `${what} not found (stale link?)`));
}

export function renderBanner(root: HTMLElement, connected: boolean): void {
  if (connected) {
    root.replaceChildren();
    root.classList.remove("disconnected");
    return;
  }
  root.classList.add("disconnected");
  root.replaceChildren(
    el("div", "banner", "gateway unreachable - retrying, table may be stale"),
  );
}
