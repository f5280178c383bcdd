/**
 * Alarm state, derived purely from repository data.
 *
 * The store can always be rebuilt from one `GET /api/alarms` snapshot; live
 * samples from the event stream only fast-forward the same derivation:
 * liveness metrics at "0" raise or refresh an alarm, "1" clears it,
 * `ft.escalated.*` reports raise sticky escalation alarms, `ack.*` samples
 * overlay an acknowledgement, and a newer exception supersedes the ack.
 */

import { AlarmView, Sample } from "./types.js";

const key = (node: string, metric: string) => `${node}\u0000${metric}`;

export function isLiveness(metric: string): boolean {
  return metric === "daemon.alive" || metric.endsWith(".alive");
}

export function isEscalation(metric: string): boolean {
  return metric.startsWith("ft.escalated.");
}

export function parseAckValue(value: string): { by: string; at: number } | null {
  const parts = value.split(" ");
  if (parts.length !== 2) return null;
  const at = Number(parts[1]);
  return Number.isFinite(at) ? { by: parts[0], at } : null;
}

export class AlarmStore {
  private alarms = new Map<string, AlarmView>();
  private version = 0;

  /** Replace everything with a server snapshot (initial load / reload). */
  seed(snapshot: AlarmView[]): void {
    this.alarms.clear();
    for (const a of snapshot) this.alarms.set(key(a.node, a.metric), { ...a });
    this.version++;
  }

  /** Fast-forward with one live sample; returns true if anything changed. */
  applySample(s: Sample): boolean {
    if (s.metric.startsWith("ack.")) {
      const target = this.alarms.get(key(s.node, s.metric.slice(4)));
      if (!target || s.timestamp < target.last_seen) return false;
      target.ack = parseAckValue(s.value);
      this.version++;
      return true;
    }
    if (isLiveness(s.metric)) {
      const k = key(s.node, s.metric);
      const existing = this.alarms.get(k);
      if (s.value === "0") {
        if (existing) {
          existing.value = s.value;
          if (s.timestamp > existing.last_seen) {
            existing.last_seen = s.timestamp;
            existing.ack = null; // newer exception supersedes the ack
          }
        } else {
          this.alarms.set(k, {
            node: s.node, metric: s.metric, value: s.value,
            first_seen: s.timestamp, last_seen: s.timestamp,
            ack: null, escalation: false,
          });
        }
        this.version++;
        return true;
      }
      if (existing) {
        this.alarms.delete(k);
        this.version++;
        return true;
      }
      return false;
    }
    if (isEscalation(s.metric)) {
      const k = key(s.node, s.metric);
      const existing = this.alarms.get(k);
      if (existing) {
        existing.value = s.value;
        if (s.timestamp > existing.last_seen) {
          existing.last_seen = s.timestamp;
          existing.ack = null;
        }
      } else {
        this.alarms.set(k, {
          node: s.node, metric: s.metric, value: s.value,
          first_seen: s.timestamp, last_seen: s.timestamp,
          ack: null, escalation: true,
        });
      }
      this.version++;
      return true;
    }
    return false;
  }

  list(): AlarmView[] {
    return [...this.alarms.values()].sort(
      (a, b) => a.node.localeCompare(b.node) || a.metric.localeCompare(b.metric));
  }

  /** Monotonic change counter; cheap dirty-checking for renderers. */
  revision(): number {
    return this.version;
  }
}
