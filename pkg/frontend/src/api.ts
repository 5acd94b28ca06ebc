// Typed access to the gateway HTTP API. The UI holds no authoritative
// state: everything rendered comes from these payloads, and anything with
// a status or color outside the closed sets is rejected loudly.

export type Status = "OK" | "Faulty" | "Isolated" | "Recovering" | "Killed";
export type Color = "green" | "red" | "yellow" | "gray";

export const STATUSES: readonly Status[] = ["OK", "Faulty", "Isolated", "Recovering", "Killed"];
export const COLORS: readonly Color[] = ["green", "red", "yellow", "gray"];

export interface NodeRow {
  node: number;
  role: string;
  status: Status;
  color: Color;
  last_event_id: number;
  node_link: string;
}

export interface GlobalView {
  level: "global";
  update_seq: number;
  tick: number;
  system_failed: boolean;
  run_active: boolean;
  run_ended: boolean;
  seconds_per_tick: number;
  poll_interval_seconds: number;
  threads_per_node: number;
  nodes: NodeRow[];
}

export interface NodeEventRow {
  event_id: number;
  tick: number;
  elapsed_seconds: number;
  summary: string;
  event_link: string;
}

export interface NodeView {
  level: "node";
  node: number;
  as_of_tick: number;
  as_of_event_id: number;
  events: NodeEventRow[];
}

export interface StoredEvent {
  event_id: number;
  tick: number;
  elapsed_seconds: number;
  node: number;
  component_id: string;
  from: string | null;
  to: string | null;
  summary: string;
  detail: string;
}

export interface EventView {
  level: "event";
  event: StoredEvent;
  node_link: string;
}

export interface InjectSpec {
  kind: string;
  target: number[];
  at_tick?: number | null;
  request_id?: string;
}

export interface Receipt {
  accepted: boolean;
  request_id?: string;
  routing?: string;
  scheduled_tick?: number;
  queued?: boolean;
  reason?: string;
}

export function assertGlobalView(data: unknown): GlobalView {
  const view = data as GlobalView;
  if (!view || view.level !== "global" || !Array.isArray(view.nodes)) {
    throw new Error("malformed global view payload");
  }
  for (const row of view.nodes) {
    if (!STATUSES.includes(row.status)) {
      throw new Error(`status ${String(row.status)} outside the five-value set`);
    }
    if (!COLORS.includes(row.color)) {
      throw new Error(`color ${String(row.color)} outside the gateway mapping`);
    }
  }
  return view;
}

export type Fetcher = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetcher: Fetcher = (url, init) => fetch(url, init),
  ) {}

  url(path: string): string {
    return this.base + path;
  }

  async global(): Promise<GlobalView> {
    const resp = await this.fetcher(this.url("/api/global"));
    if (!resp.ok) throw new Error(`global view unavailable (HTTP ${resp.status})`);
    return assertGlobalView(await resp.json());
  }

  async node(id: number): Promise<NodeView | null> {
    const resp = await this.fetcher(this.url(`/api/node/${id}`));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`node view unavailable (HTTP ${resp.status})`);
    return (await resp.json()) as NodeView;
  }

  async event(id: number): Promise<EventView | null> {
    const resp = await this.fetcher(this.url(`/api/event/${id}`));
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`event view unavailable (HTTP ${resp.status})`);
    return (await resp.json()) as EventView;
  }

  async inject(spec: InjectSpec): Promise<Receipt> {
    const resp = await this.fetcher(this.url("/api/inject"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
    const body = (await resp.json()) as Receipt & { error?: string };
    if (typeof body.accepted !== "boolean") {
      return { accepted: false, reason: body.error ?? `HTTP ${resp.status}` };
    }
    return body;
  }
}
