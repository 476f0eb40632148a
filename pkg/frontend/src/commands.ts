/** Form actions with confirmation by telemetry echo.
 *
 * Nothing here updates the view optimistically. A command is "accepted"
 * when the engine acks it and "confirmed" only when the frame proving
 * the new state arrives, because the greenhouse, not the browser, is
 * the source of truth.
 */

import { Frame, jsonValue, numberValue } from "./frames.js";
import { GreenhouseStore } from "./store.js";
import { ApiClient } from "./transport.js";

export type CommandPhase = "sent" | "accepted" | "confirmed" | "rejected";

export interface CommandOutcome {
  id: string;
  phase: CommandPhase;
  error?: string;
}

export class ValidationError extends Error {}

interface Waiter {
  predicate: (frame: Frame) => boolean;
  resolve: () => void;
}

let counter = 0;

export class CommandCenter {
  private waiters = new Set<Waiter>();

  constructor(
    private client: ApiClient,
    private store: GreenhouseStore,
    private confirmTimeoutMs = 15_000,
    private setTimeoutFn: typeof setTimeout = setTimeout.bind(globalThis),
  ) {}

  /** Feed every live frame through here so confirmations can fire. */
  observe(frame: Frame): void {
    for (const waiter of [...this.waiters]) {
      if (waiter.predicate(frame)) {
        this.waiters.delete(waiter);
        waiter.resolve();
      }
    }
  }

  private nextId(): string {
    counter += 1;
    return `ui-${counter}`;
  }

  private awaitFrame(predicate: (frame: Frame) => boolean): Promise<boolean> {
    return new Promise((resolve) => {
      const waiter: Waiter = { predicate, resolve: () => resolve(true) };
      this.waiters.add(waiter);
      this.setTimeoutFn(() => {
        if (this.waiters.delete(waiter)) resolve(false);
      }, this.confirmTimeoutMs);
    });
  }

  private async run(
    kind: string,
    payload: unknown,
    confirm: (frame: Frame) => boolean,
    onPhase: (outcome: CommandOutcome) => void,
  ): Promise<CommandOutcome> {
    const id = this.nextId();
    const confirmed = this.awaitFrame(confirm);
    onPhase({ id, phase: "sent" });
    let ack;
    try {
      ack = await this.client.command(kind, payload, id);
    } catch (err) {
      const outcome: CommandOutcome = { id, phase: "rejected", error: String((err as Error).message ?? err) };
      onPhase(outcome);
      return outcome;
    }
    if (!ack.ok && !ack.pending) {
      const outcome: CommandOutcome = { id, phase: "rejected", error: ack.error ?? "rejected" };
      onPhase(outcome);
      return outcome;
    }
    onPhase({ id, phase: "accepted" });
    const landed = await confirmed;
    const outcome: CommandOutcome = landed
      ? { id, phase: "confirmed" }
      : { id, phase: "rejected", error: "no confirming frame arrived" };
    onPhase(outcome);
    return outcome;
  }

  submitSchedule(
    onMinutes: number,
    offMinutes: number,
    onPhase: (o: CommandOutcome) => void = () => {},
  ): Promise<CommandOutcome> {
    if (!Number.isFinite(onMinutes) || onMinutes <= 0) {
      throw new ValidationError("on minutes must be > 0");
    }
    if (!Number.isFinite(offMinutes) || offMinutes < 0) {
      throw new ValidationError("off minutes must be >= 0");
    }
    const payload = { on_minutes: onMinutes, off_minutes: offMinutes };
    return this.run("set_schedule", payload, (frame) => {
      if (frame.topic !== "gh/config/schedule") return false;
      const sched = jsonValue<{ on_minutes: number; off_minutes: number }>(frame);
      return sched !== null && sched.on_minutes === onMinutes && sched.off_minutes === offMinutes;
    }, onPhase);
  }

  submitSetpoints(
    fields: Partial<{
      temp_set: number;
      temp_deadband: number;
      rh_set: number;
      rh_deadband: number;
      led_on_hours: number;
      led_off_hours: number;
    }>,
    onPhase: (o: CommandOutcome) => void = () => {},
  ): Promise<CommandOutcome> {
    // mirror the server's own checks so bad input never leaves the page
    for (const [key, value] of Object.entries(fields)) {
      if (value === undefined || !Number.isFinite(value)) {
        throw new ValidationError(`${key} is not a number`);
      }
    }
    if (fields.temp_deadband !== undefined && fields.temp_deadband <= 0) {
      throw new ValidationError("temp deadband must be > 0");
    }
    if (fields.rh_deadband !== undefined && fields.rh_deadband <= 0) {
      throw new ValidationError("rh deadband must be > 0");
    }
    if (fields.rh_set !== undefined && (fields.rh_set <= 0 || fields.rh_set >= 100)) {
      throw new ValidationError("rh setpoint must be inside (0, 100)");
    }
    if ((fields.led_on_hours ?? 0) < 0 || (fields.led_off_hours ?? 0) < 0) {
      throw new ValidationError("photoperiod hours must be >= 0");
    }
    if (Object.keys(fields).length === 0) {
      throw new ValidationError("nothing to change");
    }
    return this.run("set_setpoints", fields, (frame) => {
      if (frame.topic !== "gh/config/setpoints") return false;
      const sp = jsonValue<Record<string, number>>(frame);
      return sp !== null && Object.entries(fields).every(([k, v]) => sp[k] === v);
    }, onPhase);
  }

  recharge(
    tank: number,
    volume: number,
    onPhase: (o: CommandOutcome) => void = () => {},
  ): Promise<CommandOutcome> {
    if (!Number.isInteger(tank) || tank < 0) {
      throw new ValidationError("tank must be a non-negative integer");
    }
    if (!Number.isFinite(volume) || volume <= 0) {
      throw new ValidationError("volume must be > 0");
    }
    const topic = `gh/tank${tank}/volume`;
    const before = this.store.frame(topic);
    const level = before ? numberValue(before) : null;
    return this.run("recharge_tank", { tank, volume }, (frame) => {
      if (frame.topic !== topic) return false;
      const v = numberValue(frame);
      // confirmation is the level visibly rising past what we last saw
      return v !== null && (level === null || v > level);
    }, onPhase);
  }

  ackAlert(
    alertId: string,
    onPhase: (o: CommandOutcome) => void = () => {},
  ): Promise<CommandOutcome> {
    if (!alertId) throw new ValidationError("missing alert id");
    return this.run("ack_alert", { id: alertId }, (frame) => {
      if (frame.topic !== "gh/alert/event") return false;
      const alert = jsonValue<{ id: string; acked: boolean }>(frame);
      return alert !== null && alert.id === alertId && alert.acked === true;
    }, onPhase);
  }
}
