/** DOM wiring: live alarm table, node list, read-only rule browser, metric
 * detail pane, acknowledgement and manual dispatch. All state lives
 * server-side; this file only renders and forwards operator actions. */

import { AlarmStore } from "./alarms.js";
import { GatewayClient } from "./api.js";
import { AlarmView, NodeView, RuleView } from "./types.js";

const REFRESH_MS = 5000;

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, cls?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmtTime(ts: number): string {
  return new Date(ts * 1000).toISOString().replace("T", " ").slice(0, 19);
}

export class ConsoleApp {
  readonly store = new AlarmStore();
  private client: GatewayClient;
  private rendered = -1;
  private nodes: NodeView[] = [];
  private rules: RuleView[] = [];
  private detail: { node: string; metric: string } | null = null;
  private stopStream: (() => void) | null = null;

  constructor(private root: HTMLElement, base = "") {
    this.client = new GatewayClient(base);
  }

  operator(): string {
    const input = this.root.querySelector<HTMLInputElement>(".operator");
    return input?.value.trim() || "operator";
  }

  async start(): Promise<void> {
    this.root.innerHTML = `
      <header>
        <h1>fabric console</h1>
        <span class="conn dot down" title="event stream"></span>
        <label>operator <input class="operator" value="operator" size="10"></label>
      </header>
      <main>
        <section class="alarms"><h2>alarms</h2><div class="body"></div></section>
        <section class="nodes"><h2>nodes</h2><div class="body"></div></section>
        <section class="rules"><h2>rules</h2><div class="body"></div></section>
        <section class="detail"><h2>metric detail</h2><div class="body muted">select an alarm or service</div></section>
      </main>`;
    await this.reload();
    this.stopStream = this.client.openStream(
      (s) => {
        if (this.store.applySample(s)) this.renderAlarms();
        if (this.detail && s.node === this.detail.node && s.metric === this.detail.metric) {
          void this.renderDetail();
        }
      },
      (up) => {
        const dot = this.root.querySelector(".conn");
        if (dot) dot.className = `dot ${up ? "up" : "down"}`;
      });
    setInterval(() => void this.refreshSlow(), REFRESH_MS);
  }

  stop(): void {
    this.stopStream?.();
  }

  /** Full reconstruction from server queries (start-up and page reload). */
  async reload(): Promise<void> {
    const [alarms, nodes, rules] = await Promise.all(
      [this.client.alarms(), this.client.nodes(), this.client.rules()]);
    this.store.seed(alarms);
    this.nodes = nodes;
    this.rules = rules;
    this.renderAlarms();
    this.renderNodes();
    this.renderRules();
  }

  private async refreshSlow(): Promise<void> {
    try {
      this.nodes = await this.client.nodes();
      this.renderNodes();
    } catch {
      // gateway away; the stream indicator already shows it
    }
  }

  renderAlarms(): void {
    if (this.store.revision() === this.rendered) return;
    this.rendered = this.store.revision();
    const body = this.root.querySelector(".alarms .body")!;
    const alarms = this.store.list();
    if (alarms.length === 0) {
      body.replaceChildren(el("div", "muted", "no active alarms"));
      return;
    }
    const table = el("table");
    table.appendChild(headerRow(
      ["node", "metric", "value", "first seen", "last seen", "state", ""]));
    for (const a of alarms) {
      const tr = el("tr", a.escalation ? "escalation" : "");
      tr.append(
        cell(a.node), cell(a.metric), cell(a.value),
        cell(fmtTime(a.first_seen)), cell(fmtTime(a.last_seen)),
        cell(a.ack ? `acked by ${a.ack.by}` : "unacked",
             a.ack ? "acked" : "unacked"));
      const actions = el("td");
      if (!a.ack) {
        const btn = el("button", "", "ack");
        btn.addEventListener("click", () => void this.ackAlarm(a));
        actions.appendChild(btn);
      }
      const view = el("button", "", "series");
      view.addEventListener("click", () => {
        this.detail = { node: a.node, metric: a.metric };
        void this.renderDetail();
      });
      actions.appendChild(view);
      tr.appendChild(actions);
      table.appendChild(tr);
    }
    body.replaceChildren(table);
  }

  private async ackAlarm(a: AlarmView): Promise<void> {
    await this.client.ack(a.node, a.metric, this.operator());
    // the ack comes back as an ack.* sample on the stream; fall back to a
    // fetch in case the stream is down
    setTimeout(() => void this.reloadAlarmsOnly(), 1500);
  }

  private async reloadAlarmsOnly(): Promise<void> {
    try {
      this.store.seed(await this.client.alarms());
      this.renderAlarms();
    } catch {
      /* keep current view */
    }
  }

  renderNodes(): void {
    const body = this.root.querySelector(".nodes .body")!;
    const table = el("table");
    table.appendChild(headerRow(["node", "production", "profile", "services"]));
    for (const n of this.nodes) {
      const tr = el("tr");
      const services = Object.entries(n.services)
        .map(([svc, up]) => `${svc}:${up ? "up" : "down"}`).join(" ");
      tr.append(
        cell(n.name),
        cell(n.production_state, n.production_state === "in-production" ? "ok" : "warn"),
        cell(n.profile_version === null ? "-" : `v${n.profile_version}`),
        cell(services || "-"));
      table.appendChild(tr);
    }
    body.replaceChildren(table);
  }

  renderRules(): void {
    const body = this.root.querySelector(".rules .body")!;
    const table = el("table");
    table.appendChild(headerRow(
      ["node", "rule", "condition", "actuator", "cooldown", "", ""]));
    for (const r of this.rules) {
      const tr = el("tr", r.enabled ? "" : "disabled");
      tr.append(cell(r.node), cell(r.name), cell(r.condition, "code"),
                cell(`${r.actuator.cmd} ${r.actuator.args}`.trim(), "code"),
                cell(`${r.cooldown}s`));
      const inputs = r.inputs.map((i) =>
        i.count !== null ? `${i.var}=count(${i.metric},${i.count}s)` : `${i.var}=${i.metric}@${i.node}`)
        .join(" ");
      tr.appendChild(cell(inputs, "code"));
      const actions = el("td");
      const btn = el("button", "", "dispatch");
      btn.title = "manual actuator dispatch";
      btn.addEventListener("click", () =>
        void this.client.actuate(r.node, r.name, this.operator()));
      actions.appendChild(btn);
      tr.appendChild(actions);
      table.appendChild(tr);
    }
    body.replaceChildren(table);
  }

  async renderDetail(): Promise<void> {
    if (!this.detail) return;
    const { node, metric } = this.detail;
    const body = this.root.querySelector(".detail .body")!;
    const rows = await this.client.series(node, metric);
    const recent = rows.slice(-20).reverse();
    const table = el("table");
    table.appendChild(headerRow([`${node} ${metric}`, "value"]));
    for (const s of recent) {
      const tr = el("tr");
      tr.append(cell(fmtTime(s.timestamp)), cell(s.value, "code"));
      table.appendChild(tr);
    }
    body.replaceChildren(table);
  }
}

function headerRow(titles: string[]): HTMLTableRowElement {
  const tr = el("tr");
  for (const t of titles) tr.appendChild(el("th", "", t));
  return tr;
}

function cell(text: string, cls = ""): HTMLTableCellElement {
  return el("td", cls, text);
}
