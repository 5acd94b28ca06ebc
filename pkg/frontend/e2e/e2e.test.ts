// @vitest-environment happy-dom
//
// End-to-end: real gateway, real run, real HTTP + SSE. Requires the Python
// package to be installed (pip install -e ..). Run via `npm run test:e2e`.
//
// Checks the full contract the UI owes its users: the global table mirrors
// /api/global row for row, a Recovering node renders yellow, node pages
// list events fresher-to-older, and an injected watchdog timeout turns its
// row red within one update cycle.
import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
// happy-dom patches globalThis.fetch with a DOM-flavored stub; the e2e
// talks to a real server, so it uses undici (node's own fetch) directly
import { fetch } from "undici";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, Fetcher, GlobalView, assertGlobalView } from "../src/api.js";
import { InjectionPanel } from "../src/inject.js";
import { globalRowModels, renderGlobalTable, renderNodePanel } from "../src/views.js";

const PYTHON = process.env.DIRMON_PYTHON ?? "python3";
const realFetch = fetch as unknown as Fetcher;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = createServer();
    server.listen(0, "127.0.0.1", () => {
      const address = server.address();
      if (address && typeof address === "object") {
        const port = address.port;
        server.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitFor<T>(
  what: string,
  probe: () => Promise<T | null>,
  timeoutMs = 30000,
  stepMs = 100,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const result = await probe();
      if (result !== null) return result;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, stepMs));
  }
  throw new Error(`timed out waiting for ${what}`);
}

interface ByteReader {
  read(): Promise<{ done: boolean; value?: Uint8Array }>;
  cancel(): Promise<unknown>;
}

/** Reads SSE `data:` payloads off a fetch stream, validated and in order. */
class StreamReader {
  private buffer = "";
  private queue: GlobalView[] = [];
  private reader!: ByteReader;
  private decoder = new TextDecoder();

  async connect(url: string): Promise<void> {
    const resp = await fetch(url);
    if (!resp.ok || !resp.body) throw new Error(`stream HTTP ${resp.status}`);
    this.reader = resp.body.getReader() as unknown as ByteReader;
  }

  async next(timeoutMs = 20000): Promise<GlobalView> {
    const deadline = Date.now() + timeoutMs;
    while (this.queue.length === 0) {
      if (Date.now() > deadline) throw new Error("no update within the deadline");
      const { done, value } = await this.reader.read();
      if (done) throw new Error("stream closed");
      this.buffer += this.decoder.decode(value, { stream: true });
      let cut: number;
      while ((cut = this.buffer.indexOf("\n\n")) >= 0) {
        const block = this.buffer.slice(0, cut);
        this.buffer = this.buffer.slice(cut + 2);
        for (const line of block.split("\n")) {
          if (line.startsWith("data: ")) {
            this.queue.push(assertGlobalView(JSON.parse(line.slice("data: ".length))));
          }
        }
      }
    }
    return this.queue.shift()!;
  }

  async nextMatching(
    predicate: (v: GlobalView) => boolean,
    timeoutMs = 30000,
  ): Promise<GlobalView> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const view = await this.next(Math.max(1, deadline - Date.now()));
      if (predicate(view)) return view;
    }
  }

  cancel(): void {
    void this.reader?.cancel().catch(() => {});
  }
}

let gateway: ChildProcess;
let runner: ChildProcess;
let base: string;
let api: ApiClient;

beforeAll(async () => {
  const httpPort = await freePort();
  const notifyPort = await freePort();
  const store = mkdtempSync(join(tmpdir(), "dirmon-e2e-"));
  base = `http://127.0.0.1:${httpPort}`;
  api = new ApiClient(base, realFetch);

  gateway = spawn(
    PYTHON,
    ["-m", "dirmon", "gateway", "--store", store,
     "--http", `127.0.0.1:${httpPort}`, "--notify", `127.0.0.1:${notifyPort}`,
     "--poll-interval", "0.5"],
    { stdio: "ignore" },
  );
  await waitFor("gateway health", async () => {
    const resp = await fetch(`${base}/api/health`);
    return resp.ok ? resp.json() : null;
  });

  runner = spawn(
    PYTHON,
    ["-m", "dirmon", "run", "--nodes", "4", "--manager", "0", "--backups", "1",
     "--store", store, "--http", `127.0.0.1:${httpPort}`,
     "--notify", `127.0.0.1:${notifyPort}`,
     "--ticks", "4000", "--seconds-per-tick", "0.05"],
    { stdio: "ignore" },
  );
  await waitFor("run attach", async () => {
    const resp = await fetch(`${base}/api/health`);
    const health = (await resp.json()) as { run_active: boolean };
    return health.run_active ? health : null;
  });
}, 60000);

afterAll(() => {
  runner?.kill("SIGTERM");
  gateway?.kill("SIGTERM");
});

describe("web ui against a live run", () => {
  it("global table matches /api/global row for row", async () => {
    const view = await api.global();
    const root = document.createElement("div");
    renderGlobalTable(root, view);
    const domRows = Array.from(root.querySelectorAll("tr.node-row"));
    expect(domRows).toHaveLength(view.nodes.length);
    view.nodes.forEach((apiRow, i) => {
      const dom = domRows[i]!;
      expect(dom.querySelector("td.node-id")?.textContent).toBe(String(apiRow.node));
      expect(dom.querySelector("td.configuration")?.textContent).toBe(apiRow.role);
      expect(dom.querySelector("td.status")?.textContent).toBe(apiRow.status);
      expect(dom.querySelector(".dot")?.className).toContain(apiRow.color);
    });
    expect(globalRowModels(view).map((r) => r.node)).toEqual(
      view.nodes.map((r) => r.node),
    );
  });

  it("a recovering node renders yellow", async () => {
    const stream = new StreamReader();
    await stream.connect(`${base}/api/stream`);
    await stream.next(); // current state

    const receipt = await api.inject({ kind: "reboot", target: [3] });
    expect(receipt.accepted).toBe(true);
    expect(receipt.routing).toBe("SystemLevel");

    const recovering = await stream.nextMatching(
      (v) => v.nodes[3]?.status === "Recovering",
    );
    const root = document.createElement("div");
    renderGlobalTable(root, recovering);
    const dot = root.querySelectorAll("tr.node-row")[3]!.querySelector(".dot");
    expect(dot?.className).toContain("yellow");

    await stream.nextMatching((v) => v.nodes[3]?.status === "OK"); // settles
    stream.cancel();
  });

  it("node pages list events fresher-to-older", async () => {
    const view = await waitFor("node 3 to have events", async () => {
      const v = await api.node(3);
      return v && v.events.length >= 2 ? v : null;
    });
    const ids = view.events.map((e) => e.event_id);
    expect(ids).toEqual([...ids].sort((a, b) => b - a));
    const root = document.createElement("div");
    renderNodePanel(root, view, 0.05);
    const summaries = Array.from(root.querySelectorAll(".event-row .summary")).map(
      (el) => el.textContent,
    );
    expect(summaries).toEqual(view.events.map((e) => e.summary));
    // every listed event is readable in full
    const detail = await api.event(ids[0]!);
    expect(detail?.event.event_id).toBe(ids[0]);
  });

  it("an injected watchdog timeout turns its row red within one update", async () => {
    const stream = new StreamReader();
    await stream.connect(`${base}/api/stream`);
    await stream.next();

    // drive the real injection panel DOM, as a user would
    const panel = new InjectionPanel(api);
    const mount = document.createElement("div");
    panel.attach(mount);
    panel.onView(await api.global());
    (mount.querySelector("select[name=kind]") as HTMLSelectElement).value =
      "watchdog-timeout";
    (mount.querySelector("select[name=node]") as HTMLSelectElement).value = "2";
    const receipt = await panel.submit();
    expect(receipt?.accepted).toBe(true);
    expect(receipt?.routing).toBe("ApplicationLevel");
    expect(mount.querySelector(".inject-outcome")?.textContent).toContain(
      "ApplicationLevel",
    );

    // the first update that moves node 2 off OK must already show red
    const changed = await stream.nextMatching((v) => v.nodes[2]?.status !== "OK");
    expect(changed.nodes[2]?.status).toBe("Faulty");
    expect(changed.nodes[2]?.color).toBe("red");
    const root = document.createElement("div");
    renderGlobalTable(root, changed);
    expect(
      root.querySelectorAll("tr.node-row")[2]!.querySelector(".dot")?.className,
    ).toContain("red");
    stream.cancel();
  });
});
