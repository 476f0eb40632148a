"""Closed-loop engine: physics, sensing, control, telemetry, logging.

One thread owns the tick loop. Each tick at sim time t:

  1. sensors due at t observe the state and publish readings,
  2. on control ticks, queued operator commands are drained and applied,
  3. on control ticks, the controller recomputes the actuator bank
     (changes are published as actuation frames),
  4. physics advances one timestep under that bank,
  5. alert rules run against the new state,
  6. energy snapshots are appended on their cadence.

Everything downstream of the master seed is deterministic, so two runs
of the same manifest write byte-identical logs.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict
from threading import Event
from typing import Sequence

from .config import ConfigError, SimConfig
from .controller import Alert, Controller, OperatorCommand
from .datalog import DataLog
from .sensors import (
    SensorChannel,
    SensorReading,
    SensorSpec,
    build_channels,
    default_sensor_suite,
    flow_from_pulses,
    volume_from_distance,
)
from .simcore import ActuatorBank, GreenhouseState, initial_state, step
from .telemetry import Broker

CLIMATE_DEVICES = ("heater", "fan", "humidifier", "led", "uv")


def _steps(period: float, dt: float, name: str) -> int:
    n = period / dt
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ConfigError(f"{name} must be a positive multiple of the timestep")
    return int(round(n))


class Engine:
    def __init__(
        self,
        cfg: SimConfig,
        log_dir: str | None = None,
        suite: Sequence[SensorSpec] | None = None,
        controller: Controller | None = None,
    ) -> None:
        self.cfg = cfg
        self.datalog = DataLog(log_dir) if log_dir else None
        self.broker = Broker(self.datalog, wall_epoch=cfg.wall_epoch)
        self.controller = controller or Controller(cfg)
        self.channels: list[SensorChannel] = build_channels(
            suite if suite is not None else default_sensor_suite(cfg), cfg
        )
        self.state: GreenhouseState = initial_state(cfg)
        self.bank: ActuatorBank = ActuatorBank.all_off(cfg.n_boxes)
        self._readings: dict[str, SensorReading] = {}
        self._chan_steps = [
            _steps(c.spec.sample_period, cfg.timestep, f"{c.spec.id} sample_period")
            for c in self.channels
        ]
        self._control_steps = _steps(cfg.control_period, cfg.timestep, "control_period")
        self._snap_steps = _steps(cfg.energy_snapshot_period, cfg.timestep,
                                  "energy_snapshot_period")
        self._sht_period = max(
            [c.spec.sample_period for c in self.channels
             if c.spec.kind in ("sht75_temp", "sht75_rh")],
            default=cfg.control_period,
        )
        self._faulted_sensors: set[str] = set()
        self._recharged_volume = 0.0
        self._initial_water = sum(self.state.tank_volume)

    # ---- publishing helpers ---------------------------------------------

    def _publish_reading(self, chan: SensorChannel, reading: SensorReading) -> None:
        spec = chan.spec
        kind, target = spec.kind, spec.target
        if kind == "sht75_temp":
            self.broker.publish(f"gh/zone{target}/temp", reading.sim_time,
                                reading.value, "degC")
        elif kind == "sht75_rh":
            self.broker.publish(f"gh/zone{target}/rh", reading.sim_time,
                                reading.value, "%")
        elif kind == "srf05":
            try:
                volume = volume_from_distance(reading.value, self.cfg)
            except ValueError:
                self._sensor_fault(spec.id, reading.sim_time)
                return
            self._faulted_sensors.discard(spec.id)
            self.broker.publish(f"gh/tank{target}/volume", reading.sim_time,
                                volume, "L")
        elif kind == "yf_s201":
            flow = flow_from_pulses(reading.value, spec.sample_period)
            self.broker.publish(f"gh/box{target}/flow", reading.sim_time,
                                flow, "L/min")
        elif kind == "gy302":
            self.broker.publish(f"gh/zone{target}/lux", reading.sim_time,
                                reading.value, "lux")
        else:  # tcs3200
            self.broker.publish(f"gh/zone{target}/spectrum", reading.sim_time,
                                list(reading.value), "rgb")

    def _sensor_fault(self, sensor_id: str, now: float) -> None:
        if sensor_id in self._faulted_sensors:
            return
        self._faulted_sensors.add(sensor_id)
        alert = self.controller.open_alert("sensor_fault", now, sensor_id)
        self._publish_alert(alert)

    def _publish_alert(self, alert: Alert) -> None:
        self.broker.publish("gh/alert/event", alert.sim_time,
                            json.dumps(asdict(alert), sort_keys=True), "json")
        self.broker.publish("gh/alert/open", alert.sim_time,
                            self.controller.open_unacked, "count")

    def _publish_config(self, now: float) -> None:
        sp = asdict(self.controller.setpoints)
        self.broker.publish("gh/config/setpoints", now,
                            json.dumps(sp, sort_keys=True), "json")
        sched = asdict(self.controller.schedule)
        sched["enabled"] = [int(x) for x in sched["enabled"]]
        sched["phase_offset"] = list(sched["phase_offset"])
        self.broker.publish("gh/config/schedule", now,
                            json.dumps(sched, sort_keys=True), "json")

    def _publish_actuation(self, now: float, old: ActuatorBank, new: ActuatorBank) -> None:
        if any(getattr(old, d) != getattr(new, d) for d in CLIMATE_DEVICES):
            value = json.dumps({d: int(getattr(new, d)) for d in CLIMATE_DEVICES})
            self.broker.publish("gh/zone0/actuators", now, value, "json")
        for b in range(self.cfg.n_boxes):
            if (old.supply_pumps[b] != new.supply_pumps[b]
                    or old.return_pumps[b] != new.return_pumps[b]):
                value = f"{int(new.supply_pumps[b])}{int(new.return_pumps[b])}"
                self.broker.publish(f"gh/box{b}/pumps", now, value, "supply_return")

    def _energy_snapshot(self, state: GreenhouseState) -> None:
        if self.datalog is not None:
            self.datalog.append(state.sim_time, "energy", {
                "by_device": dict(state.energy_by_device),
                "total": state.energy_total,
            })
        self.broker.publish("gh/zone0/energy", state.sim_time,
                            state.energy_total, "kWh")
        self.broker.publish("gh/zone0/energy_by_device", state.sim_time,
                            json.dumps(dict(state.energy_by_device),
                                       sort_keys=True), "json")

    # ---- command path ----------------------------------------------------

    def _apply_commands(self, now: float) -> None:
        for raw in self.broker.take_commands():
            cmd = OperatorCommand(kind=str(raw.get("kind")),
                                  payload=raw.get("payload") or {},
                                  command_id=str(raw.get("id")))
            self.state, result = self.controller.apply_command(cmd, self.state)
            ack = {"t": "ack", "id": cmd.command_id, "ok": result.ok}
            if result.error:
                ack["error"] = result.error
            if self.datalog is not None:
                self.datalog.append(now, "command",
                                    {"cmd": dict(raw), "ack": dict(ack)})
            if result.ok:
                if cmd.kind in ("set_setpoints", "set_schedule"):
                    self._publish_config(now)
                elif cmd.kind == "recharge_tank":
                    tank = result.detail["tank"]
                    self._recharged_volume += result.detail["added"]
                    if self.datalog is not None:
                        self.datalog.append(now, "event",
                                            {"event": "recharge", **result.detail})
                    self.broker.publish(f"gh/tank{tank}/volume", now,
                                        self.state.tank_volume[tank], "L")
                elif cmd.kind == "ack_alert":
                    alert = self.controller.alerts[cmd.payload["id"]]
                    self._publish_alert(alert)
            self.broker.resolve_command(cmd.command_id, ack)

    # ---- main loop -------------------------------------------------------

    def run(
        self,
        duration: float,
        pace: bool = False,
        stop: Event | None = None,
    ) -> GreenhouseState:
        """Advance the plant `duration` simulated seconds.

        With pace=True the loop sleeps so simulated time advances at
        cfg.time_acceleration times wall time (serve mode); otherwise it
        runs flat out. `stop` ends the run early but still finalizes.
        """
        if duration <= 0:
            raise ConfigError("duration must be > 0")
        dt = self.cfg.timestep
        steps = _steps(duration, dt, "duration")
        self._publish_config(0.0)
        self._energy_snapshot(self.state)
        snapshot_done_at = 0.0
        wall_start = time.monotonic()
        for k in range(steps):
            if stop is not None and stop.is_set():
                break
            t = k * dt
            for chan, n in zip(self.channels, self._chan_steps):
                if k % n == 0:
                    reading = chan.read(self.state, self.cfg)
                    self._readings[chan.spec.id] = reading
                    self._publish_reading(chan, reading)
            if k % self._control_steps == 0:
                self._apply_commands(t)
                new_bank, fault_alerts = self.controller.control_tick(
                    t, list(self._readings.values()), self._sht_period)
                for alert in fault_alerts:
                    self._publish_alert(alert)
                self._publish_actuation(t, self.bank, new_bank)
                self.bank = new_bank
            self.state, events = step(self.state, self.bank, self.cfg, dt)
            for alert in self.controller.check_alerts(self.state, events):
                self._publish_alert(alert)
            if (k + 1) % self._snap_steps == 0:
                self._energy_snapshot(self.state)
                snapshot_done_at = self.state.sim_time
            if pace:
                target = (k + 1) * dt / self.cfg.time_acceleration
                lag = target - (time.monotonic() - wall_start)
                if lag > 0:
                    time.sleep(lag)
        if self.state.sim_time != snapshot_done_at:
            self._energy_snapshot(self.state)
        if self.datalog is not None:
            self.datalog.flush()
        return self.state

    def close(self) -> None:
        if self.datalog is not None:
            self.datalog.close()

    # ---- reporting -------------------------------------------------------

    def summary(self) -> dict:
        consumed = (self._initial_water + self._recharged_volume
                    - sum(self.state.tank_volume))
        return {
            "sim_time": self.state.sim_time,
            "air_temp": self.state.air_temp,
            "rel_humidity": self.state.rel_humidity,
            "tank_volume": list(self.state.tank_volume),
            "water_consumed": consumed,
            "energy_by_device": dict(self.state.energy_by_device),
            "energy_total": self.state.energy_total,
            "alerts": len(self.controller.alerts),
            "open_unacked": self.controller.open_unacked,
        }
