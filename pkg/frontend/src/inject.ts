// The fault-injection panel: pick a kind, pick a valid target, submit,
// see the receipt (or the rejection) inline. Target constraints come from
// the latest global view, so only nodes that exist are offered.

import { ApiClient, GlobalView, InjectSpec, Receipt } from "./api.js";

export const FAULT_KINDS = [
  "divzero",
  "segviol",
  "kill-thread",
  "watchdog-timeout",
  "link-down",
  "reboot",
] as const;

export type FaultKindName = (typeof FAULT_KINDS)[number];

export type TargetShape = "thread" | "node" | "link";

export function targetShape(kind: FaultKindName): TargetShape {
  switch (kind) {
    case "divzero":
    case "segviol":
    case "kill-thread":
    case "watchdog-timeout":
      return "thread";
    case "reboot":
      return "node";
    case "link-down":
      return "link";
  }
}

export interface InjectDraft {
  kind: FaultKindName;
  node: number;
  thread: number;
  nodeB: number;
  atTick: number | null;
}

export function validateDraft(draft: InjectDraft, view: GlobalView | null): string | null {
  if (!view || view.nodes.length === 0) return "no run to inject into";
  const nodeCount = view.nodes.length;
  const shape = targetShape(draft.kind);
  if (draft.node < 0 || draft.node >= nodeCount) {
    return `node ${draft.node} out of range (0..${nodeCount - 1})`;
  }
  if (shape === "thread" && draft.kind !== "watchdog-timeout") {
    if (draft.thread < 0 || draft.thread >= view.threads_per_node) {
      return `thread index ${draft.thread} out of range (0..${view.threads_per_node - 1})`;
    }
  }
  if (shape === "link") {
    if (draft.nodeB < 0 || draft.nodeB >= nodeCount) {
      return `node ${draft.nodeB} out of range (0..${nodeCount - 1})`;
    }
    if (draft.node === draft.nodeB) return "link endpoints must differ";
  }
  if (draft.atTick !== null && draft.atTick <= view.tick) {
    return `tick ${draft.atTick} already passed (now ${view.tick})`;
  }
  return null;
}

export function draftToSpec(draft: InjectDraft): InjectSpec {
  const shape = targetShape(draft.kind);
  const target =
    shape === "node"
      ? [draft.node]
      : shape === "link"
        ? [draft.node, draft.nodeB]
        : draft.kind === "watchdog-timeout"
          ? [draft.node]
          : [draft.node, draft.thread];
  const spec: InjectSpec = { kind: draft.kind, target };
  if (draft.atTick !== null) spec.at_tick = draft.atTick;
  return spec;
}

export function describeReceipt(receipt: Receipt): string {
  if (!receipt.accepted) return `rejected: ${receipt.reason ?? "unknown reason"}`;
  const queued = receipt.queued ? ", queued for the manager" : "";
  return `accepted as ${receipt.routing} for tick ${receipt.scheduled_tick}${queued}`;
}

export class InjectionPanel {
  private view: GlobalView | null = null;
  private form!: HTMLFormElement;
  private kindSelect!: HTMLSelectElement;
  private nodeSelect!: HTMLSelectElement;
  private threadInput!: HTMLInputElement;
  private nodeBSelect!: HTMLSelectElement;
  private tickInput!: HTMLInputElement;
  private outcome!: HTMLElement;

  constructor(private readonly api: ApiClient) {}

  attach(root: HTMLElement): void {
    this.form = document.createElement("form");
    this.form.className = "inject-form";

    const title = document.createElement("h2");
    title.textContent = "Inject a fault";
    this.form.appendChild(title);

    this.kindSelect = document.createElement("select");
    this.kindSelect.name = "kind";
    for (const kind of FAULT_KINDS) {
      const option = document.createElement("option");
      option.value = kind;
      option.textContent = kind;
      this.kindSelect.appendChild(option);
    }
    this.form.appendChild(this.labelled("fault", this.kindSelect));

    this.nodeSelect = document.createElement("select");
    this.nodeSelect.name = "node";
    this.form.appendChild(this.labelled("node", this.nodeSelect));

    this.threadInput = document.createElement("input");
    this.threadInput.type = "number";
    this.threadInput.name = "thread";
    this.threadInput.value = "0";
    this.threadInput.min = "0";
    this.form.appendChild(this.labelled("thread", this.threadInput));

    this.nodeBSelect = document.createElement("select");
    this.nodeBSelect.name = "nodeB";
    this.form.appendChild(this.labelled("peer node", this.nodeBSelect));

    this.tickInput = document.createElement("input");
    this.tickInput.type = "number";
    this.tickInput.name = "at_tick";
    this.tickInput.placeholder = "next tick";
    this.form.appendChild(this.labelled("at tick", this.tickInput));

    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "inject";
    this.form.appendChild(submit);

    this.outcome = document.createElement("div");
    this.outcome.className = "inject-outcome";
    this.form.appendChild(this.outcome);

    this.kindSelect.addEventListener("change", () => this.syncShape());
    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });

    root.replaceChildren(this.form);
    this.syncShape();
  }

  private labelled(text: string, control: HTMLElement): HTMLElement {
    const label = document.createElement("label");
    const span = document.createElement("span");
    span.textContent = text;
    label.appendChild(span);
    label.appendChild(control);
    return label;
  }

  onView(view: GlobalView): void {
    this.view = view;
    const options = view.nodes.map((r) => r.node);
    for (const select of [this.nodeSelect, this.nodeBSelect]) {
      const current = select.value;
      select.replaceChildren(
        ...options.map((n) => {
          const option = document.createElement("option");
          option.value = String(n);
          option.textContent = `node ${n}`;
          return option;
        }),
      );
      if (options.some((n) => String(n) === current)) select.value = current;
    }
    this.threadInput.max = String(Math.max(0, view.threads_per_node - 1));
  }

  draft(): InjectDraft {
    return {
      kind: this.kindSelect.value as FaultKindName,
      node: Number(this.nodeSelect.value),
      thread: Number(this.threadInput.value),
      nodeB: Number(this.nodeBSelect.value),
      atTick: this.tickInput.value === "" ? null : Number(this.tickInput.value),
    };
  }

  private syncShape(): void {
    const shape = targetShape(this.kindSelect.value as FaultKindName);
    (this.threadInput.parentElement as HTMLElement).style.display =
      shape === "thread" && this.kindSelect.value !== "watchdog-timeout" ? "" : "none";
    (this.nodeBSelect.parentElement as HTMLElement).style.display =
      shape === "link" ? "" : "none";
  }

  async submit(): Promise<Receipt | null> {
    const draft = this.draft();
    const problem = validateDraft(draft, this.view);
    if (problem !== null) {
      this.outcome.textContent = problem;
      this.outcome.className = "inject-outcome rejected";
      return null; // invalid drafts never reach the gateway
    }
    const receipt = await this.api.inject(draftToSpec(draft));
    this.outcome.textContent = describeReceipt(receipt);
    this.outcome.className = `inject-outcome ${receipt.accepted ? "accepted" : "rejected"}`;
    return receipt;
  }
}
