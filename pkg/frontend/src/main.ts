// Page wiring: the global table updates live from the stream, the node and
// event panels open side by side from hash routes, the node panel refreshes
// itself on the gateway's suggested interval, and the injection form posts
// back through the same API the panels read from.

import { ApiClient, GlobalView } from "./api.js";
import { InjectionPanel } from "./inject.js";
import { EventSourceLike, LiveFeed } from "./stream.js";
import {
  renderBanner,
  renderEventPanel,
  renderGlobalTable,
  renderNodePanel,
  renderNotFound,
  renderRunMeta,
} from "./views.js";

const api = new ApiClient("");
let latest: GlobalView | null = null;
let nodeTimer: ReturnType<typeof setTimeout> | null = null;

const bannerEl = document.getElementById("banner") as HTMLElement;
const tableEl = document.getElementById("global") as HTMLElement;
const metaEl = document.getElementById("run-meta") as HTMLElement;
const nodeEl = document.getElementById("node-panel") as HTMLElement;
const eventEl = document.getElementById("event-panel") as HTMLElement;
const injectEl = document.getElementById("inject-panel") as HTMLElement;

const injectPanel = new InjectionPanel(api);
injectPanel.attach(injectEl);

const feed = new LiveFeed(
  api,
  (url) => new EventSource(url) as unknown as EventSourceLike,
  {
    onUpdate(view) {
      latest = view;
      renderGlobalTable(tableEl, view);
      renderRunMeta(metaEl, view);
      injectPanel.onView(view);
    },
    onStatus(connected) {
      renderBanner(bannerEl, connected);
    },
  },
);
feed.start();

type Route =
  | { kind: "none" }
  | { kind: "node"; id: number }
  | { kind: "event"; id: number };

function parseRoute(hash: string): Route {
  const node = /^#\/node\/(\d+)$/.exec(hash);
  if (node) return { kind: "node", id: Number(node[1]) };
  const event = /^#\/event\/(\d+)$/.exec(hash);
  if (event) return { kind: "event", id: Number(event[1]) };
  return { kind: "none" };
}

async function showNode(id: number): Promise<void> {
  const view = await api.node(id);
  if (view === null) {
    renderNotFound(nodeEl, `node ${id}`);
    return;
  }
  renderNodePanel(nodeEl, view, latest?.seconds_per_tick ?? 1);
  // the paper-style periodic reload: node pages refresh on a timer
  if (nodeTimer) clearTimeout(nodeTimer);
  const interval = Math.max(500, (latest?.poll_interval_seconds ?? 2) * 1000);
  nodeTimer = setTimeout(() => void showNode(id), interval);
}

async function showEvent(id: number): Promise<void> {
  const view = await api.event(id);
  if (view === null) {
    renderNotFound(eventEl, `event ${id}`);
    return;
  }
  renderEventPanel(eventEl, view);
}

function onRoute(): void {
  const route = parseRoute(location.hash);
  if (route.kind === "node") {
    void showNode(route.id);
  } else if (route.kind === "event") {
    void showEvent(route.id);
  }
}

window.addEventListener("hashchange", onRoute);
onRoute();
