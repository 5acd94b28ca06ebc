// Live update feed: a server-sent-events subscription with automatic
// reconnect, falling back to polling the global view while the stream is
// down. All updates flow through one ordered gate, so the table can never
// regress to an older state no matter how transports interleave.

import { ApiClient, GlobalView, assertGlobalView } from "./api.js";

export interface EventSourceLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SourceFactory = (url: string) => EventSourceLike;

export class OrderedUpdates {
  lastSeq = -1;

  accept(view: GlobalView): boolean {
    if (view.update_seq <= this.lastSeq) return false;
    this.lastSeq = view.update_seq;
    return true;
  }
}

export interface FeedCallbacks {
  onUpdate(view: GlobalView): void;
  onStatus(connected: boolean): void;
}

export interface FeedOptions {
  initialBackoffMs?: number;
  maxBackoffMs?: number;
  pollIntervalMs?: number; // overrides the gateway's suggestion
}

export class LiveFeed {
  private source: EventSourceLike | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private backoffMs: number;
  private suggestedPollMs = 2000;
  private stopped = false;
  readonly order = new OrderedUpdates();

  constructor(
    private readonly api: ApiClient,
    private readonly factory: SourceFactory,
    private readonly callbacks: FeedCallbacks,
    private readonly options: FeedOptions = {},
  ) {
    this.backoffMs = options.initialBackoffMs ?? 1000;
  }

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.source) this.source.close();
    this.source = null;
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    if (this.pollTimer) clearTimeout(this.pollTimer);
  }

  private deliver(view: GlobalView): void {
    this.suggestedPollMs = this.options.pollIntervalMs
      ?? Math.max(250, view.poll_interval_seconds * 1000);
    if (this.order.accept(view)) this.callbacks.onUpdate(view);
  }

  private connect(): void {
    if (this.stopped) return;
    let source: EventSourceLike;
    try {
      source = this.factory(this.api.url("/api/stream"));
    } catch {
      this.dropped();
      return;
    }
    this.source = source;
    source.onopen = () => {
      this.backoffMs = this.options.initialBackoffMs ?? 1000;
      this.callbacks.onStatus(true);
      this.stopPolling();
    };
    source.onmessage = (ev) => {
      try {
        this.deliver(assertGlobalView(JSON.parse(ev.data)));
      } catch (err) {
        console.error("dropping malformed update", err);
      }
    };
    source.onerror = () => {
      source.close();
      if (this.source === source) this.source = null;
      this.dropped();
    };
  }

  private dropped(): void {
    if (this.stopped) return;
    this.callbacks.onStatus(false);
    this.startPolling();
    this.reconnectTimer = setTimeout(() => this.connect(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, this.options.maxBackoffMs ?? 30000);
  }

  private startPolling(): void {
    if (this.pollTimer || this.stopped) return;
    const tick = async () => {
      this.pollTimer = null;
      if (this.stopped || this.source) return;
      try {
        this.deliver(await this.api.global());
      } catch {
        // gateway still unreachable; the banner is already up
      }
      if (!this.stopped && !this.source) {
        this.pollTimer = setTimeout(tick, this.suggestedPollMs);
      }
    };
    this.pollTimer = setTimeout(tick, 0);
  }

  private stopPolling(): void {
    if (this.pollTimer) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }
}
