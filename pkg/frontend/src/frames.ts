/** Telemetry wire records as the HTTP API hands them out. */

export interface Frame {
  t: "pub";
  topic: string;
  ts: number;
  wall: string;
  v: number | string | boolean | unknown[];
  u: string;
}

export interface Ack {
  t: "ack";
  id: string;
  ok: boolean;
  pending?: boolean;
  error?: string;
}

export type Subject =
  | { kind: "zone"; index: number }
  | { kind: "box"; index: number }
  | { kind: "tank"; index: number }
  | { kind: "plant"; index: number }
  | { kind: "config" }
  | { kind: "alert" };

export interface ParsedTopic {
  subject: Subject;
  quantity: string;
}

const INDEXED = /^(zone|box|tank|plant)(\d+)$/;

export function parseTopic(topic: string): ParsedTopic | null {
  const parts = topic.split("/");
  if (parts.length !== 3 || parts[0] !== "gh") return null;
  const [, subject, quantity] = parts;
  if (subject === undefined || quantity === undefined || quantity === "") return null;
  if (subject === "config") return { subject: { kind: "config" }, quantity };
  if (subject === "alert") return { subject: { kind: "alert" }, quantity };
  const m = INDEXED.exec(subject);
  if (!m) return null;
  return {
    subject: { kind: m[1] as "zone" | "box" | "tank" | "plant", index: Number(m[2]) },
    quantity,
  };
}

/** Frames carrying structured payloads put them in `v` as a JSON string. */
export function jsonValue<T>(frame: Frame): T | null {
  if (typeof frame.v !== "string") return null;
  try {
    return JSON.parse(frame.v) as T;
  } catch {
    return null;
  }
}

export function numberValue(frame: Frame): number | null {
  return typeof frame.v === "number" && Number.isFinite(frame.v) ? frame.v : null;
}
