import { describe, expect, it } from "vitest";

import { AlarmStore, isEscalation, isLiveness, parseAckValue } from "../src/alarms.js";
import { AlarmView, Sample } from "../src/types.js";

const T = 1_060_000_000;

const s = (node: string, metric: string, timestamp: number, value: string): Sample =>
  ({ node, metric, timestamp, value });

describe("pattern helpers", () => {
  it("classifies metrics", () => {
    expect(isLiveness("daemon.alive")).toBe(true);
    expect(isLiveness("msa.sensor.node.alive")).toBe(true);
    expect(isLiveness("cpu.load")).toBe(false);
    expect(isEscalation("ft.escalated.repair")).toBe(true);
    expect(isEscalation("ft.actuator.repair.status")).toBe(false);
  });

  it("parses ack values", () => {
    expect(parseAckValue(`alice ${T}`)).toEqual({ by: "alice", at: T });
    expect(parseAckValue("garbage")).toBeNull();
  });
});

describe("AlarmStore", () => {
  it("raises on liveness 0 and clears on 1", () => {
    const store = new AlarmStore();
    expect(store.applySample(s("n1", "daemon.alive", T, "1"))).toBe(false);
    expect(store.applySample(s("n1", "daemon.alive", T + 1, "0"))).toBe(true);
    expect(store.list()).toHaveLength(1);
    expect(store.list()[0]).toMatchObject({
      node: "n1", metric: "daemon.alive", first_seen: T + 1, last_seen: T + 1,
      ack: null, escalation: false,
    });
    store.applySample(s("n1", "daemon.alive", T + 5, "0"));
    expect(store.list()[0].first_seen).toBe(T + 1);
    expect(store.list()[0].last_seen).toBe(T + 5);
    expect(store.applySample(s("n1", "daemon.alive", T + 9, "1"))).toBe(true);
    expect(store.list()).toHaveLength(0);
  });

  it("ignores unrelated metrics", () => {
    const store = new AlarmStore();
    expect(store.applySample(s("n1", "cpu.load", T, "0.4"))).toBe(false);
    expect(store.list()).toHaveLength(0);
  });

  it("overlays acks and lets a newer exception supersede them", () => {
    const store = new AlarmStore();
    store.applySample(s("n1", "daemon.alive", T, "0"));
    expect(store.applySample(s("n1", "ack.daemon.alive", T + 2, `alice ${T}`))).toBe(true);
    expect(store.list()[0].ack).toEqual({ by: "alice", at: T });
    // a newer exception sample clears the acknowledgement
    store.applySample(s("n1", "daemon.alive", T + 10, "0"));
    expect(store.list()[0].ack).toBeNull();
  });

  it("drops stale acks", () => {
    const store = new AlarmStore();
    store.applySample(s("n1", "daemon.alive", T + 10, "0"));
    expect(store.applySample(s("n1", "ack.daemon.alive", T + 5, `bob ${T}`))).toBe(false);
    expect(store.list()[0].ack).toBeNull();
  });

  it("tracks escalations as sticky alarms", () => {
    const store = new AlarmStore();
    store.applySample(s("n1", "ft.escalated.repair", T, "repair keeps failing"));
    const row = store.list()[0];
    expect(row.escalation).toBe(true);
    store.applySample(s("n1", "ack.ft.escalated.repair", T + 2, `op ${T}`));
    expect(store.list()[0].ack?.by).toBe("op");
  });

  it("seed replaces state and bumps the revision", () => {
    const store = new AlarmStore();
    store.applySample(s("n1", "daemon.alive", T, "0"));
    const before = store.revision();
    const snapshot: AlarmView[] = [{
      node: "n2", metric: "ft.escalated.x", value: "boom",
      first_seen: T, last_seen: T, ack: null, escalation: true,
    }];
    store.seed(snapshot);
    expect(store.revision()).toBeGreaterThan(before);
    expect(store.list().map((a) => a.node)).toEqual(["n2"]);
  });

  it("sorts alarms by node then metric", () => {
    const store = new AlarmStore();
    store.applySample(s("n2", "daemon.alive", T, "0"));
    store.applySample(s("n1", "svc.alive", T, "0"));
    store.applySample(s("n1", "daemon.alive", T, "0"));
    expect(store.list().map((a) => `${a.node}/${a.metric}`)).toEqual(
      ["n1/daemon.alive", "n1/svc.alive", "n2/daemon.alive"]);
  });

  it("live updates converge to the same state as a reload from samples", () => {
    // statelessness: replaying the same samples after a fresh seed([])
    // reconstructs the identical view
    const samples: Sample[] = [
      s("n1", "daemon.alive", T, "0"),
      s("n1", "ack.daemon.alive", T + 1, `alice ${T}`),
      s("n2", "ft.escalated.repair", T + 2, "boom"),
      s("n1", "daemon.alive", T + 3, "0"),
    ];
    const live = new AlarmStore();
    for (const x of samples) live.applySample(x);
    const reloaded = new AlarmStore();
    reloaded.seed([]);
    for (const x of samples) reloaded.applySample(x);
    expect(reloaded.list()).toEqual(live.list());
  });
});
