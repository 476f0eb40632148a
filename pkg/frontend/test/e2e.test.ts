/** Scripted browser session against a live `serve` process.
 *
 * The dashboard runs in a happy-dom page wired to the real HTTP API
 * of a paced simulation. Everything below goes through the same code
 * paths the browser build uses, with fetch standing in for EventSource.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcess, spawn } from "node:child_process";
import { fileURLToPath } from "node:url";
import { Window } from "happy-dom";
import { ApiClient, fetchStreamOpener } from "../src/transport.js";
import { App, boot } from "../src/app.js";

const REPO_ROOT = fileURLToPath(new URL("../..", import.meta.url));

async function waitFor(pred: () => boolean, timeoutMs: number, label: string): Promise<void> {
  const t0 = Date.now();
  for (;;) {
    if (pred()) return;
    if (Date.now() - t0 > timeoutMs) throw new Error(`timed out waiting for ${label}`);
    await new Promise((r) => setTimeout(r, 25));
  }
}

function startServer(): Promise<{ proc: ChildProcess; base: string; logs: string[] }> {
  const proc = spawn("python3", [
    "-m", "aerogreen", "serve",
    "--listen-http", "127.0.0.1:0",
    "--duration", "500000",
    "--accel", "120",
    "--seed", "5",
  ], {
    cwd: REPO_ROOT,
    env: { ...process.env, PYTHONUNBUFFERED: "1" },
    stdio: ["ignore", "pipe", "pipe"],
  });
  const logs: string[] = [];
  proc.stderr!.on("data", (d: Buffer) => logs.push(d.toString()));
  return new Promise((resolve, reject) => {
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`server never came up:\n${out}\n${logs.join("")}`)), 30_000);
    proc.stdout!.on("data", (d: Buffer) => {
      out += d.toString();
      logs.push(d.toString());
      const m = /listening on ([\d.]+):(\d+) \(http\)/.exec(out);
      if (m) {
        clearTimeout(timer);
        resolve({ proc, base: `http://${m[1]}:${m[2]}`, logs });
      }
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code}):\n${out}\n${logs.join("")}`));
    });
  });
}

describe("dashboard against a live server", () => {
  const win = new Window();
  let proc: ChildProcess;
  let app: App;
  let root: HTMLElement;
  let client: ApiClient;

  beforeAll(async () => {
    (globalThis as Record<string, unknown>)["document"] = win.document;
    const server = await startServer();
    proc = server.proc;
    root = win.document.createElement("div") as unknown as HTMLElement;
    win.document.body.appendChild(root as never);
    const fetchFn: typeof fetch = (input, init) => fetch(input, init);
    client = new ApiClient(server.base, {
      fetchFn,
      opener: fetchStreamOpener(fetchFn),
      backoffBase: 200,
    });
    app = await boot(root, client);
  });

  afterAll(async () => {
    app?.stop();
    if (proc && proc.exitCode === null) {
      proc.kill("SIGTERM");
      await new Promise<void>((resolve) => {
        const hard = setTimeout(() => { proc.kill("SIGKILL"); resolve(); }, 5000);
        proc.on("exit", () => { clearTimeout(hard); resolve(); });
      });
    }
    delete (globalThis as Record<string, unknown>)["document"];
  });

  it("shows a freshly published temperature within two seconds", async () => {
    const snapTs = app.store.frame("gh/zone0/temp")?.ts ?? -1;
    await waitFor(
      () => (app.store.frame("gh/zone0/temp")?.ts ?? -1) > snapTs,
      2000, "a newer gh/zone0/temp frame");

    const gauge = root.querySelector(".zone-card dd.gauge") as HTMLElement;
    expect(gauge).not.toBeNull();
    expect(gauge.textContent).toMatch(/°C$/);
    expect(gauge.title).toMatch(/^gh\/zone0\/temp @ t=\d/);
  });

  it("confirms a 10/5 schedule only after the config frame echoes it", async () => {
    const form = root.querySelector(".schedule-form") as HTMLFormElement;
    (form.querySelector('input[name="on_minutes"]') as HTMLInputElement).value = "10";
    (form.querySelector('input[name="off_minutes"]') as HTMLInputElement).value = "5";
    const status = form.querySelector(".form-status") as HTMLElement;
    form.dispatchEvent(new win.Event("submit", { bubbles: true, cancelable: true }) as unknown as Event);

    await waitFor(() => status.textContent === "confirmed", 20_000, "schedule confirmation");
    const sched = app.store.schedule();
    expect(sched).not.toBeNull();
    expect(sched!.on_minutes).toBe(10);
    expect(sched!.off_minutes).toBe(5);
  });

  it("raises the tank bar after a recharge", async () => {
    await waitFor(() => root.querySelector(".tanks .tank-bar") !== null, 5000, "a tank bar");
    const level = () =>
      Number((root.querySelector(".tanks .tank-bar") as HTMLElement).dataset["volume"]);
    const before = level();

    const form = root.querySelector(".recharge-form") as HTMLFormElement;
    (form.querySelector('input[name="tank"]') as HTMLInputElement).value = "0";
    (form.querySelector('input[name="volume"]') as HTMLInputElement).value = "50";
    const status = form.querySelector(".form-status") as HTMLElement;
    form.dispatchEvent(new win.Event("submit", { bubbles: true, cancelable: true }) as unknown as Event);

    await waitFor(() => status.textContent === "confirmed", 20_000, "recharge confirmation");
    expect(level()).toBeGreaterThan(before);
  });

  it("rejects a bad command with the server's reason", async () => {
    // past the client-side guard, the server still refuses and says why
    const ack = await client.command("set_schedule", { on_minutes: -4, off_minutes: 5 });
    expect(ack.ok).toBe(false);
    expect(ack.error).toMatch(/on_minutes/);
  });
});
