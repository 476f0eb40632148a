import { describe, expect, it } from "vitest";
import { Ack, Frame } from "../src/frames.js";
import { GreenhouseStore } from "../src/store.js";
import { CommandCenter, CommandOutcome, ValidationError } from "../src/commands.js";
import { ApiClient } from "../src/transport.js";

function frame(topic: string, ts: number, v: Frame["v"]): Frame {
  return { t: "pub", topic, ts, wall: "2026-01-01T00:00:00+00:00", v, u: "x" };
}

interface Sent {
  kind: string;
  payload: unknown;
  id?: string;
}

class FakeClient {
  sent: Sent[] = [];
  reply: Ack | Error = { t: "ack", id: "?", ok: true };

  async command(kind: string, payload: unknown, id?: string): Promise<Ack> {
    this.sent.push({ kind, payload, id });
    if (this.reply instanceof Error) throw this.reply;
    return { ...this.reply, id: id ?? "?" };
  }
}

function center(client: FakeClient, store = new GreenhouseStore(), timeoutMs = 2000) {
  return new CommandCenter(client as unknown as ApiClient, store, timeoutMs);
}

const tick = () => new Promise((r) => setTimeout(r, 0));

describe("schedule submission", () => {
  it("sends exactly on/off minutes and confirms on the echo frame", async () => {
    const client = new FakeClient();
    const cc = center(client);
    const phases: string[] = [];
    const done = cc.submitSchedule(10, 5, (o) => phases.push(o.phase));
    await tick();
    expect(client.sent).toHaveLength(1);
    expect(client.sent[0]!.kind).toBe("set_schedule");
    expect(client.sent[0]!.payload).toEqual({ on_minutes: 10, off_minutes: 5 });
    // accepted is not confirmed: nothing happens until telemetry echoes
    expect(phases).toEqual(["sent", "accepted"]);

    cc.observe(frame("gh/config/schedule", 7,
      '{"enabled": [1,1,1,1,1,1,1,1,1], "off_minutes": 99.0, "on_minutes": 10.0,'
      + ' "phase_offset": [0,0,0,0,0,0,0,0,0], "return_lag": 60.0}'));
    await tick();
    expect(phases).toEqual(["sent", "accepted"]); // wrong off value, still waiting

    cc.observe(frame("gh/config/schedule", 8,
      '{"enabled": [1,1,1,1,1,1,1,1,1], "off_minutes": 5.0, "on_minutes": 10.0,'
      + ' "phase_offset": [0,0,0,0,0,0,0,0,0], "return_lag": 60.0}'));
    const outcome = await done;
    expect(outcome.phase).toBe("confirmed");
    expect(phases).toEqual(["sent", "accepted", "confirmed"]);
  });

  it("blocks a non-positive on time before any network call", () => {
    const client = new FakeClient();
    const cc = center(client);
    expect(() => cc.submitSchedule(0, 5)).toThrow(ValidationError);
    expect(() => cc.submitSchedule(-3, 5)).toThrow(ValidationError);
    expect(() => cc.submitSchedule(10, -1)).toThrow(ValidationError);
    expect(client.sent).toHaveLength(0);
  });

  it("reports a rejected command with the server's reason", async () => {
    const client = new FakeClient();
    client.reply = new Error("on_minutes must be positive");
    const cc = center(client);
    const outcome = await cc.submitSchedule(10, 5);
    expect(outcome.phase).toBe("rejected");
    expect(outcome.error).toBe("on_minutes must be positive");
  });

  it("treats an ok:false ack as a rejection too", async () => {
    const client = new FakeClient();
    client.reply = { t: "ack", id: "?", ok: false, error: "schedule refused" };
    const cc = center(client);
    const outcome = await cc.submitSchedule(10, 5);
    expect(outcome.phase).toBe("rejected");
    expect(outcome.error).toBe("schedule refused");
  });

  it("rejects when no confirming frame ever arrives", async () => {
    const client = new FakeClient();
    const cc = center(client, new GreenhouseStore(), 50);
    const outcome = await cc.submitSchedule(10, 5);
    expect(outcome.phase).toBe("rejected");
    expect(outcome.error).toMatch(/no confirming frame/);
  });
});

describe("setpoint submission", () => {
  it("blocks a negative deadband client-side; the server is never called", () => {
    const client = new FakeClient();
    const cc = center(client);
    expect(() => cc.submitSetpoints({ temp_set: 24, temp_deadband: -1 }))
      .toThrow(ValidationError);
    expect(() => cc.submitSetpoints({ rh_deadband: 0 })).toThrow(ValidationError);
    expect(() => cc.submitSetpoints({ rh_set: 100 })).toThrow(ValidationError);
    expect(() => cc.submitSetpoints({ led_on_hours: -2 })).toThrow(ValidationError);
    expect(() => cc.submitSetpoints({})).toThrow(ValidationError);
    expect(client.sent).toHaveLength(0);
  });

  it("sends only the fields given and matches them in the echo", async () => {
    const client = new FakeClient();
    const cc = center(client);
    const done = cc.submitSetpoints({ temp_set: 26.0, temp_deadband: 1.5 });
    await tick();
    expect(client.sent[0]!.kind).toBe("set_setpoints");
    expect(client.sent[0]!.payload).toEqual({ temp_set: 26.0, temp_deadband: 1.5 });
    cc.observe(frame("gh/config/setpoints", 3,
      '{"led_off_hours": 6.0, "led_on_hours": 18.0, "rh_deadband": 10.0,'
      + ' "rh_set": 60.0, "temp_deadband": 1.5, "temp_set": 26.0}'));
    expect((await done).phase).toBe("confirmed");
  });
});

describe("tank recharge", () => {
  it("confirms only once the level rises past the last reading", async () => {
    const store = new GreenhouseStore();
    store.ingest(frame("gh/tank1/volume", 100, 120.0), 0);
    const client = new FakeClient();
    const cc = center(client, store);
    const phases: CommandOutcome[] = [];
    const done = cc.recharge(1, 50, (o) => phases.push(o));
    await tick();
    expect(client.sent[0]!.payload).toEqual({ tank: 1, volume: 50 });

    cc.observe(frame("gh/tank1/volume", 101, 119.5)); // consumption, not the recharge
    await tick();
    expect(phases[phases.length - 1]!.phase).toBe("accepted");

    cc.observe(frame("gh/tank0/volume", 102, 400.0)); // wrong tank
    await tick();
    expect(phases[phases.length - 1]!.phase).toBe("accepted");

    cc.observe(frame("gh/tank1/volume", 103, 169.5));
    expect((await done).phase).toBe("confirmed");
  });

  it("validates tank index and volume", () => {
    const client = new FakeClient();
    const cc = center(client);
    expect(() => cc.recharge(-1, 50)).toThrow(ValidationError);
    expect(() => cc.recharge(0.5, 50)).toThrow(ValidationError);
    expect(() => cc.recharge(0, 0)).toThrow(ValidationError);
    expect(() => cc.recharge(0, -5)).toThrow(ValidationError);
    expect(client.sent).toHaveLength(0);
  });
});

describe("alert acknowledgement", () => {
  it("confirms on the acked echo for the same id only", async () => {
    const client = new FakeClient();
    const cc = center(client);
    const done = cc.ackAlert("alert-7");
    await tick();
    expect(client.sent[0]!.kind).toBe("ack_alert");
    expect(client.sent[0]!.payload).toEqual({ id: "alert-7" });

    cc.observe(frame("gh/alert/event", 5,
      '{"id": "alert-6", "rule": "tank_low", "sim_time": 4.0, "subject": "tank0", "acked": true}'));
    cc.observe(frame("gh/alert/event", 5,
      '{"id": "alert-7", "rule": "tank_low", "sim_time": 4.5, "subject": "tank0", "acked": false}'));
    await tick();

    cc.observe(frame("gh/alert/event", 6,
      '{"id": "alert-7", "rule": "tank_low", "sim_time": 4.5, "subject": "tank0", "acked": true}'));
    expect((await done).phase).toBe("confirmed");
  });
});

describe("pending acks", () => {
  it("treats a pending ack as accepted and still waits for the echo", async () => {
    const client = new FakeClient();
    client.reply = { t: "ack", id: "?", ok: false, pending: true };
    const cc = center(client);
    const phases: string[] = [];
    const done = cc.submitSchedule(2, 1, (o) => phases.push(o.phase));
    await tick();
    expect(phases).toEqual(["sent", "accepted"]);
    cc.observe(frame("gh/config/schedule", 9,
      '{"enabled": [1], "off_minutes": 1.0, "on_minutes": 2.0, "phase_offset": [0], "return_lag": 60.0}'));
    expect((await done).phase).toBe("confirmed");
  });
});
