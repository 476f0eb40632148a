/** DOM construction for the dashboard.
 *
 * Widgets are rebuilt wholesale on every store change; only the forms
 * persist, so half-typed input never gets clobbered by telemetry.
 * Every displayed figure carries a title of the form "topic @ t=Ns"
 * naming the frame it came from.
 */

import { Frame } from "./frames.js";
import { GreenhouseStore, TANK_LOW_FRACTION } from "./store.js";
import { CommandCenter, CommandOutcome, ValidationError } from "./commands.js";
import { sparklinePath } from "./charts.js";
import { ConnectionStatus } from "./transport.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function tracedAt(node: HTMLElement, topic: string, ts: number): HTMLElement {
  node.title = `${topic} @ t=${ts}s`;
  return node;
}

function traced(node: HTMLElement, frame: Frame): HTMLElement {
  return tracedAt(node, frame.topic, frame.ts);
}

function fmt(v: number, digits = 1): string {
  return v.toFixed(digits);
}

export class Dashboard {
  private status: ConnectionStatus = "connecting";
  private statusEl: HTMLElement;
  private zonesEl: HTMLElement;
  private tanksEl: HTMLElement;
  private boxesEl: HTMLElement;
  private energyEl: HTMLElement;
  private alertsEl: HTMLElement;
  private diseaseEl: HTMLElement;
  private scheduleStatusEl: HTMLElement;
  private setpointStatusEl: HTMLElement;
  private rechargeStatusEl: HTMLElement;

  constructor(
    root: HTMLElement,
    private store: GreenhouseStore,
    private commands: CommandCenter,
    private now: () => number = () => Date.now(),
  ) {
    root.textContent = "";
    const header = el("header");
    header.append(el("h1", undefined, "aerogreen"));
    this.statusEl = el("span", "status", "connecting");
    header.append(this.statusEl);
    root.append(header);

    const grid = el("main", "grid");
    this.zonesEl = el("section", "panel zones");
    this.tanksEl = el("section", "panel tanks");
    this.boxesEl = el("section", "panel boxes");
    this.energyEl = el("section", "panel energy");
    this.alertsEl = el("section", "panel alerts");
    this.diseaseEl = el("section", "panel disease");
    const forms = el("section", "panel forms");

    this.scheduleStatusEl = el("span", "form-status");
    this.setpointStatusEl = el("span", "form-status");
    this.rechargeStatusEl = el("span", "form-status");
    forms.append(this.buildScheduleForm(), this.buildSetpointForm(), this.buildRechargeForm());

    grid.append(
      this.zonesEl, this.tanksEl, this.boxesEl,
      this.energyEl, this.alertsEl, this.diseaseEl, forms,
    );
    root.append(grid);
  }

  setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.renderStatus();
  }

  /** Re-evaluate the stale indicator between frames. */
  tick(): void {
    this.renderStatus();
  }

  /** Redraw every data panel from the store. */
  render(): void {
    this.renderStatus();
    this.renderZones();
    this.renderTanks();
    this.renderBoxes();
    this.renderEnergy();
    this.renderAlerts();
    this.renderDisease();
  }

  private renderStatus(): void {
    const stale = this.store.isStale(this.now());
    let text: string = this.status;
    if (this.status === "live" && stale) text = "stale";
    this.statusEl.textContent = text;
    this.statusEl.className = `status status-${text}`;
  }

  private renderZones(): void {
    this.zonesEl.textContent = "";
    this.zonesEl.append(el("h2", undefined, "zones"));
    for (const zone of this.store.zones()) {
      const card = el("div", "zone-card");
      card.append(el("h3", undefined, `zone ${zone.index}`));
      const dl = el("dl");
      const gauge = (label: string, frame: Frame | undefined, unit: string, digits: number) => {
        if (!frame) return;
        dl.append(el("dt", undefined, label));
        const dd = el("dd", "gauge", `${fmt(frame.v as number, digits)} ${unit}`);
        dl.append(traced(dd, frame));
      };
      gauge("temp", zone.temp, "°C", 1);
      gauge("rh", zone.rh, "%", 1);
      gauge("lux", zone.lux, "lx", 0);
      card.append(dl);
      this.zonesEl.append(card);
    }
    const act = this.store.actuators();
    const actFrame = this.store.frame("gh/zone0/actuators");
    if (act && actFrame) {
      const line = el("div", "actuators");
      line.textContent = Object.entries(act)
        .map(([name, on]) => `${name}:${on ? "on" : "off"}`)
        .join("  ");
      this.zonesEl.append(traced(line, actFrame));
    }
  }

  private renderTanks(): void {
    this.tanksEl.textContent = "";
    this.tanksEl.append(el("h2", undefined, "tanks"));
    for (const tank of this.store.tanks()) {
      const row = el("div", "tank-row");
      row.append(el("span", "tank-name", `tank ${tank.index}`));
      const bar = el("div", "tank-bar");
      bar.dataset["volume"] = String(tank.volume);
      const scale = tank.observedMax || 1;
      const fill = el("div", "tank-fill");
      fill.style.width = `${Math.min(100, (tank.volume / scale) * 100)}%`;
      const marker = el("div", "tank-low-marker");
      marker.style.left = `${TANK_LOW_FRACTION * 100}%`;
      marker.title = "low-level threshold";
      bar.append(fill, marker);
      row.append(bar);
      const label = el("span", "tank-volume", `${fmt(tank.volume)} L`);
      row.append(tracedAt(label, `gh/tank${tank.index}/volume`, tank.ts));
      this.tanksEl.append(row);
    }
  }

  private renderBoxes(): void {
    this.boxesEl.textContent = "";
    this.boxesEl.append(el("h2", undefined, "grow boxes"));
    for (const box of this.store.boxes()) {
      const card = el("div", "box-card");
      card.append(el("h3", undefined, `box ${box.index}`));
      if (box.flow) {
        const flow = el("span", "flow", `${fmt(box.flow.v as number, 2)} L/min`);
        card.append(traced(flow, box.flow));
      }
      const pumpsFrame = this.store.frame(`gh/box${box.index}/pumps`);
      if (pumpsFrame) {
        const pumps = el("span", "pumps",
          `supply ${box.supplyOn ? "on" : "off"} / return ${box.returnOn ? "on" : "off"}`);
        card.append(traced(pumps, pumpsFrame));
      }
      if (box.spark.length > 1) {
        const svg = document.createElementNS(SVG_NS, "svg");
        svg.setAttribute("viewBox", "0 0 120 28");
        svg.setAttribute("class", "spark");
        const path = document.createElementNS(SVG_NS, "path");
        path.setAttribute("d", sparklinePath(
          box.spark.map((s) => ({ t: s.ts, v: s.v })), 120, 28));
        path.setAttribute("fill", "none");
        svg.append(path);
        card.append(svg);
      }
      this.boxesEl.append(card);
    }
  }

  private renderEnergy(): void {
    this.energyEl.textContent = "";
    this.energyEl.append(el("h2", undefined, "energy"));
    const total = this.store.energyTotal();
    if (total) {
      const line = el("div", "energy-total", `${fmt(total.v as number, 3)} kWh total`);
      this.energyEl.append(traced(line, total));
    }
    const byDevice = this.store.energyByDevice();
    const byDeviceFrame = this.store.frame("gh/zone0/energy_by_device");
    if (byDevice && byDeviceFrame) {
      const table = el("table", "energy-table");
      const entries = Object.entries(byDevice).sort((a, b) => b[1] - a[1]);
      for (const [device, kwh] of entries) {
        const tr = el("tr");
        tr.append(el("td", undefined, device));
        tr.append(el("td", "num", fmt(kwh, 3)));
        table.append(traced(tr, byDeviceFrame));
      }
      this.energyEl.append(table);
    }
  }

  private renderAlerts(): void {
    this.alertsEl.textContent = "";
    const open = this.store.openAlertCount();
    this.alertsEl.append(el("h2", undefined, `alerts (${open} open)`));
    const list = el("ul", "alert-list");
    for (const alert of this.store.alerts()) {
      const li = el("li", alert.acked ? "alert acked" : "alert open");
      li.append(el("span", "alert-rule", alert.rule));
      li.append(el("span", "alert-subject", alert.subject));
      li.append(el("span", "alert-time", `t=${fmt(alert.sim_time, 0)}s`));
      if (!alert.acked) {
        const btn = el("button", "ack", "ack") as HTMLButtonElement;
        btn.addEventListener("click", () => {
          btn.disabled = true;
          this.commands.ackAlert(alert.id, () => {}).catch(() => {});
        });
        li.append(btn);
      }
      tracedAt(li, "gh/alert/event", alert.sim_time);
      list.append(li);
    }
    this.alertsEl.append(list);
  }

  private renderDisease(): void {
    this.diseaseEl.textContent = "";
    const cells = this.store.disease();
    if (cells.length === 0) return;
    this.diseaseEl.append(el("h2", undefined, "plant health"));
    const grid = el("div", "disease-grid");
    for (const cell of cells) {
      const tile = el("div", `disease-tile ${cell.label}`);
      tile.append(el("span", undefined, `plant ${cell.plant}`));
      tile.append(el("span", undefined, `${cell.label} ${fmt(cell.p * 100, 0)}%`));
      grid.append(tracedAt(tile, `gh/plant${cell.plant}/disease`, cell.ts));
    }
    this.diseaseEl.append(grid);
  }

  private phaseReporter(target: HTMLElement): (o: CommandOutcome) => void {
    return (outcome) => {
      switch (outcome.phase) {
        case "sent":
          target.textContent = "sending…";
          break;
        case "accepted":
          target.textContent = "accepted, waiting for telemetry…";
          break;
        case "confirmed":
          target.textContent = "confirmed";
          break;
        case "rejected":
          target.textContent = `rejected: ${outcome.error}`;
          break;
      }
      target.className = `form-status form-${outcome.phase}`;
    };
  }

  private numberInput(name: string, step: string, value = ""): HTMLInputElement {
    const input = document.createElement("input");
    input.type = "number";
    input.name = name;
    input.step = step;
    input.value = value;
    return input;
  }

  private buildScheduleForm(): HTMLFormElement {
    const form = document.createElement("form");
    form.className = "schedule-form";
    form.append(el("h3", undefined, "irrigation schedule"));
    const on = this.numberInput("on_minutes", "0.5");
    const off = this.numberInput("off_minutes", "0.5");
    form.append(labelled("on (min)", on), labelled("off (min)", off));
    const submit = el("button", undefined, "apply") as HTMLButtonElement;
    submit.type = "submit";
    form.append(submit, this.scheduleStatusEl);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const report = this.phaseReporter(this.scheduleStatusEl);
      try {
        this.commands
          .submitSchedule(Number(on.value), Number(off.value), report)
          .catch(() => {});
      } catch (err) {
        if (err instanceof ValidationError) {
          this.scheduleStatusEl.textContent = err.message;
          this.scheduleStatusEl.className = "form-status form-invalid";
        } else throw err;
      }
    });
    return form;
  }

  private buildSetpointForm(): HTMLFormElement {
    const form = document.createElement("form");
    form.className = "setpoint-form";
    form.append(el("h3", undefined, "climate setpoints"));
    const fields: [string, string, string][] = [
      ["temp_set", "temp (°C)", "0.1"],
      ["temp_deadband", "temp band", "0.1"],
      ["rh_set", "rh (%)", "0.5"],
      ["rh_deadband", "rh band", "0.5"],
    ];
    const inputs = new Map<string, HTMLInputElement>();
    for (const [name, label, step] of fields) {
      const input = this.numberInput(name, step);
      inputs.set(name, input);
      form.append(labelled(label, input));
    }
    const submit = el("button", undefined, "apply") as HTMLButtonElement;
    submit.type = "submit";
    form.append(submit, this.setpointStatusEl);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const payload: Record<string, number> = {};
      for (const [name, input] of inputs) {
        if (input.value.trim() !== "") payload[name] = Number(input.value);
      }
      const report = this.phaseReporter(this.setpointStatusEl);
      try {
        this.commands.submitSetpoints(payload, report).catch(() => {});
      } catch (err) {
        if (err instanceof ValidationError) {
          this.setpointStatusEl.textContent = err.message;
          this.setpointStatusEl.className = "form-status form-invalid";
        } else throw err;
      }
    });
    return form;
  }

  private buildRechargeForm(): HTMLFormElement {
    const form = document.createElement("form");
    form.className = "recharge-form";
    form.append(el("h3", undefined, "recharge tank"));
    const tank = this.numberInput("tank", "1", "0");
    const volume = this.numberInput("volume", "1");
    form.append(labelled("tank", tank), labelled("litres", volume));
    const submit = el("button", undefined, "recharge") as HTMLButtonElement;
    submit.type = "submit";
    form.append(submit, this.rechargeStatusEl);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const report = this.phaseReporter(this.rechargeStatusEl);
      try {
        this.commands
          .recharge(Number(tank.value), Number(volume.value), report)
          .catch(() => {});
      } catch (err) {
        if (err instanceof ValidationError) {
          this.rechargeStatusEl.textContent = err.message;
          this.rechargeStatusEl.className = "form-status form-invalid";
        } else throw err;
      }
    });
    return form;
  }
}

function labelled(text: string, input: HTMLInputElement): HTMLElement {
  const label = el("label");
  label.append(el("span", undefined, text), input);
  return label;
}
