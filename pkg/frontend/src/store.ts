/** Client-side mirror of the greenhouse, built from frames and nothing else.
 *
 * The store never computes physics. Every number it hands to the view
 * came off the wire, and every reading keeps its topic and sim time so
 * the UI can show where a value came from.
 */

import { Frame, jsonValue, numberValue, parseTopic } from "./frames.js";

export interface Sample {
  ts: number;
  v: number;
}

export interface ZoneView {
  index: number;
  temp?: Frame;
  rh?: Frame;
  lux?: Frame;
}

export interface TankView {
  index: number;
  volume: number;
  ts: number;
  /** Largest level ever seen on this tank; the bar scales against it. */
  observedMax: number;
}

export interface BoxView {
  index: number;
  flow?: Frame;
  supplyOn: boolean;
  returnOn: boolean;
  spark: Sample[];
}

export interface AlertView {
  id: string;
  rule: string;
  sim_time: number;
  subject: string;
  acked: boolean;
}

export interface DiseaseCallView {
  plant: number;
  label: string;
  p: number;
  ts: number;
}

export interface ScheduleView {
  on_minutes: number;
  off_minutes: number;
  enabled: number[];
  phase_offset: number[];
  return_lag: number;
}

export interface SetpointsView {
  temp_set: number;
  temp_deadband: number;
  rh_set: number;
  rh_deadband: number;
  led_on_hours: number;
  led_off_hours: number;
}

const SPARK_DEPTH = 240;
/** Tank alert threshold as a share of the fullest level seen. The rule
 * itself lives server-side; the marker is presentation. */
export const TANK_LOW_FRACTION = 0.1;

export class GreenhouseStore {
  private retained = new Map<string, Frame>();
  private sparks = new Map<string, Sample[]>();
  private tankMax = new Map<number, number>();
  private alertsById = new Map<string, AlertView>();
  private listeners = new Set<() => void>();

  /** Wall-clock arrival tracking for the stale indicator. */
  private lastArrival = 0;
  private arrivalGap = 0; // exponential moving average, ms

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  loadSnapshot(frames: Frame[], now: number): void {
    for (const frame of frames) this.apply(frame, now);
    this.notify();
  }

  ingest(frame: Frame, now: number): void {
    if (this.lastArrival > 0) {
      const gap = now - this.lastArrival;
      this.arrivalGap = this.arrivalGap === 0 ? gap : 0.8 * this.arrivalGap + 0.2 * gap;
    }
    this.lastArrival = now;
    this.apply(frame, now);
    this.notify();
  }

  /** True once three expected frame intervals have passed in silence. */
  isStale(now: number): boolean {
    if (this.lastArrival === 0) return false;
    const expected = Math.max(this.arrivalGap, 250);
    return now - this.lastArrival > 3 * expected;
  }

  private apply(frame: Frame, _now: number): void {
    const parsed = parseTopic(frame.topic);
    if (!parsed) return;
    this.retained.set(frame.topic, frame);

    const value = numberValue(frame);
    if (value !== null) {
      const spark = this.sparks.get(frame.topic) ?? [];
      if (spark.length === 0 || spark[spark.length - 1]!.ts !== frame.ts) {
        spark.push({ ts: frame.ts, v: value });
        if (spark.length > SPARK_DEPTH) spark.shift();
        this.sparks.set(frame.topic, spark);
      }
    }

    if (parsed.subject.kind === "tank" && parsed.quantity === "volume" && value !== null) {
      const k = parsed.subject.index;
      this.tankMax.set(k, Math.max(this.tankMax.get(k) ?? 0, value));
    }
    if (parsed.subject.kind === "alert" && parsed.quantity === "event") {
      const alert = jsonValue<AlertView>(frame);
      if (alert && alert.id) this.alertsById.set(alert.id, alert);
    }
  }

  frame(topic: string): Frame | undefined {
    return this.retained.get(topic);
  }

  spark(topic: string): Sample[] {
    return this.sparks.get(topic) ?? [];
  }

  zones(): ZoneView[] {
    const out = new Map<number, ZoneView>();
    for (const [topic, frame] of this.retained) {
      const parsed = parseTopic(topic);
      if (!parsed || parsed.subject.kind !== "zone") continue;
      const zone = out.get(parsed.subject.index) ?? { index: parsed.subject.index };
      if (parsed.quantity === "temp") zone.temp = frame;
      if (parsed.quantity === "rh") zone.rh = frame;
      if (parsed.quantity === "lux") zone.lux = frame;
      out.set(parsed.subject.index, zone);
    }
    return [...out.values()].sort((a, b) => a.index - b.index);
  }

  tanks(): TankView[] {
    const out: TankView[] = [];
    for (const [topic, frame] of this.retained) {
      const parsed = parseTopic(topic);
      if (!parsed || parsed.subject.kind !== "tank" || parsed.quantity !== "volume") continue;
      const v = numberValue(frame);
      if (v === null) continue;
      const index = parsed.subject.index;
      out.push({ index, volume: v, ts: frame.ts, observedMax: this.tankMax.get(index) ?? v });
    }
    return out.sort((a, b) => a.index - b.index);
  }

  boxes(): BoxView[] {
    const out = new Map<number, BoxView>();
    const box = (i: number): BoxView => {
      const existing = out.get(i);
      if (existing) return existing;
      const fresh: BoxView = { index: i, supplyOn: false, returnOn: false, spark: [] };
      out.set(i, fresh);
      return fresh;
    };
    for (const [topic, frame] of this.retained) {
      const parsed = parseTopic(topic);
      if (!parsed || parsed.subject.kind !== "box") continue;
      const b = box(parsed.subject.index);
      if (parsed.quantity === "flow") {
        b.flow = frame;
        b.spark = this.spark(topic);
      } else if (parsed.quantity === "pumps" && typeof frame.v === "string") {
        b.supplyOn = frame.v[0] === "1";
        b.returnOn = frame.v[1] === "1";
      }
    }
    return [...out.values()].sort((a, b) => a.index - b.index);
  }

  actuators(): Record<string, number> | null {
    const frame = this.retained.get("gh/zone0/actuators");
    return frame ? jsonValue<Record<string, number>>(frame) : null;
  }

  energyTotal(): Frame | undefined {
    return this.retained.get("gh/zone0/energy");
  }

  energyByDevice(): Record<string, number> | null {
    const frame = this.retained.get("gh/zone0/energy_by_device");
    return frame ? jsonValue<Record<string, number>>(frame) : null;
  }

  alerts(): AlertView[] {
    return [...this.alertsById.values()].sort((a, b) => a.sim_time - b.sim_time);
  }

  openAlertCount(): number {
    const frame = this.retained.get("gh/alert/open");
    const v = frame ? numberValue(frame) : null;
    return v ?? this.alerts().filter((a) => !a.acked).length;
  }

  disease(): DiseaseCallView[] {
    const out: DiseaseCallView[] = [];
    for (const [topic, frame] of this.retained) {
      const parsed = parseTopic(topic);
      if (!parsed || parsed.subject.kind !== "plant" || parsed.quantity !== "disease") continue;
      const body = jsonValue<{ label: string; p: number }>(frame);
      if (body) out.push({ plant: parsed.subject.index, label: body.label, p: body.p, ts: frame.ts });
    }
    return out.sort((a, b) => a.plant - b.plant);
  }

  schedule(): ScheduleView | null {
    const frame = this.retained.get("gh/config/schedule");
    return frame ? jsonValue<ScheduleView>(frame) : null;
  }

  setpoints(): SetpointsView | null {
    const frame = this.retained.get("gh/config/setpoints");
    return frame ? jsonValue<SetpointsView>(frame) : null;
  }
}
