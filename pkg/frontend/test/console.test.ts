// @vitest-environment jsdom
//
// The console loop end to end against a scripted gateway: an alarm shows up
// in the rendered UI within two seconds of the fault sample, acknowledging
// it writes the ack.* sample (which is what gates escalation re-fire on the
// engine side), and a page reload reconstructs the identical alarm state
// from queries alone.

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { AlarmStore } from "../src/alarms.js";
import { ConsoleApp } from "../src/app.js";
import { GatewayStub } from "./gateway_stub.js";
import { waitFor } from "./api.test.js";

const T = 1_060_000_000;

describe("console loop", () => {
  let stub: GatewayStub;
  let app: ConsoleApp;
  let root: HTMLElement;

  beforeEach(async () => {
    stub = new GatewayStub();
    await stub.start();
    root = document.createElement("div");
    document.body.appendChild(root);
    app = new ConsoleApp(root, stub.url);
    await app.start();
    await waitFor(() => stub["clients"].size === 1);
  });

  afterEach(async () => {
    app.stop();
    root.remove();
    await stub.stop();
  });

  function alarmRows(): string[] {
    return [...root.querySelectorAll(".alarms tr")].slice(1)
      .map((tr) => tr.textContent ?? "");
  }

  it("shows a fault in the UI within two seconds", async () => {
    expect(root.querySelector(".alarms .body")!.textContent).toContain("no active alarms");
    const t0 = Date.now();
    stub.ingest({ node: "node007", metric: "daemon.alive", timestamp: T, value: "0" });
    await waitFor(() => alarmRows().length === 1);
    expect(Date.now() - t0).toBeLessThan(2000);
    expect(alarmRows()[0]).toContain("node007");
    expect(alarmRows()[0]).toContain("unacked");
  });

  it("acknowledges through the gateway and reflects the ack", async () => {
    stub.ingest({ node: "node007", metric: "ft.escalated.repair", timestamp: T,
                  value: "repair keeps failing" });
    await waitFor(() => alarmRows().length === 1);

    const input = root.querySelector<HTMLInputElement>(".operator")!;
    input.value = "alice";
    const ackButton = [...root.querySelectorAll<HTMLButtonElement>(".alarms button")]
      .find((b) => b.textContent === "ack")!;
    ackButton.click();

    await waitFor(() => stub.acked.length === 1);
    expect(stub.acked[0].metric).toBe("ack.ft.escalated.repair");
    expect(stub.acked[0].value).toBe(`alice ${T}`);
    // the ack sample comes back over the stream and flips the row
    await waitFor(() => alarmRows()[0]?.includes("acked by alice") ?? false);
    // the engine-side suppression keeps further traffic from re-raising:
    // suppression samples are not alarms and must not create rows
    stub.ingest({ node: "node007", metric: "ft.suppressed.escalate-repair",
                  timestamp: T + 5, value: "acked" });
    await new Promise((r) => setTimeout(r, 50));
    expect(alarmRows()).toHaveLength(1);
    expect(alarmRows()[0]).toContain("acked by alice");
  });

  it("reload reconstructs identical alarm state from queries alone", async () => {
    stub.ingest({ node: "node007", metric: "daemon.alive", timestamp: T, value: "0" });
    stub.ingest({ node: "node003", metric: "ft.escalated.repair", timestamp: T + 1,
                  value: "boom" });
    await waitFor(() => alarmRows().length === 2);
    const ackButton = [...root.querySelectorAll<HTMLButtonElement>(".alarms button")]
      .find((b) => b.textContent === "ack")!;
    ackButton.click();
    await waitFor(() => stub.acked.length === 1);
    await waitFor(() => alarmRows().some((r) => r.includes("acked")));

    const liveState = app.store.list();

    // a "page reload": a brand-new store seeded only from GET /api/alarms
    const reloaded = new AlarmStore();
    const resp = await fetch(`${stub.url}/api/alarms`);
    reloaded.seed((await resp.json()).alarms);
    expect(reloaded.list()).toEqual(liveState);

    // and a full second app over the same gateway renders the same rows
    const root2 = document.createElement("div");
    document.body.appendChild(root2);
    const app2 = new ConsoleApp(root2, stub.url);
    await app2.start();
    try {
      await waitFor(() => root2.querySelectorAll(".alarms tr").length ===
                          root.querySelectorAll(".alarms tr").length);
      expect(app2.store.list()).toEqual(liveState);
    } finally {
      app2.stop();
      root2.remove();
    }
  });
});
