/** Gateway HTTP client plus the server-sent-events reader. */

import { AlarmView, NodeView, RuleView, Sample } from "./types.js";

export class GatewayClient {
  constructor(private base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) throw new Error(`GET ${path}: HTTP ${resp.status}`);
    return resp.json() as Promise<T>;
  }

  async alarms(): Promise<AlarmView[]> {
    return (await this.getJson<{ alarms: AlarmView[] }>("/api/alarms")).alarms;
  }

  async rules(): Promise<RuleView[]> {
    return (await this.getJson<{ rules: RuleView[] }>("/api/rules")).rules;
  }

  async nodes(): Promise<NodeView[]> {
    return (await this.getJson<{ nodes: NodeView[] }>("/api/nodes")).nodes;
  }

  async series(node: string, metric: string, t0 = 0): Promise<Sample[]> {
    const q = `node=${encodeURIComponent(node)}&metric=${encodeURIComponent(metric)}&t0=${t0}`;
    return (await this.getJson<{ samples: Sample[] }>(`/api/series?${q}`)).samples;
  }

  async ack(node: string, metric: string, operator: string): Promise<void> {
    await this.post("/api/ack", { node, metric, operator });
  }

  async actuate(node: string, rule: string, operator: string): Promise<void> {
    await this.post("/api/actuate", { node, rule, operator });
  }

  private async post(path: string, body: unknown): Promise<void> {
    const resp = await fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new Error(`POST ${path}: HTTP ${resp.status}`);
  }

  /**
   * Subscribe to the live sample stream. Returns an abort function.
   * Implemented over fetch body streaming so it runs identically in the
   * browser and under node-based tests.
   */
  openStream(onSample: (s: Sample) => void,
             onStatus?: (connected: boolean) => void): () => void {
    const controller = new AbortController();
    const run = async () => {
      while (!controller.signal.aborted) {
        try {
          const resp = await fetch(this.base + "/api/stream",
                                   { signal: controller.signal });
          if (!resp.ok || resp.body === null) throw new Error(`HTTP ${resp.status}`);
          onStatus?.(true);
          const reader = resp.body.getReader();
          const decoder = new TextDecoder();
          let buf = "";
          for (;;) {
            const { done, value } = await reader.read();
            if (done) break;
            buf += decoder.decode(value, { stream: true });
            const frames = buf.split("\n\n");
            buf = frames.pop() ?? "";
            for (const frame of frames) {
              const sample = parseSseFrame(frame);
              if (sample) onSample(sample);
            }
          }
        } catch {
          // fall through to reconnect
        }
        onStatus?.(false);
        if (!controller.signal.aborted) {
          await new Promise((r) => setTimeout(r, 1000));
        }
      }
    };
    void run();
    return () => controller.abort();
  }
}

export function parseSseFrame(frame: string): Sample | null {
  let event = "message";
  const data: string[] = [];
  for (const line of frame.split("\n")) {
    if (line.startsWith("event:")) event = line.slice(6).trim();
    else if (line.startsWith("data:")) data.push(line.slice(5).trim());
  }
  if (event !== "sample" || data.length === 0) return null;
  try {
    return JSON.parse(data.join("\n")) as Sample;
  } catch {
    return null;
  }
}
