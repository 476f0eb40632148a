"""Climate, irrigation, and lighting control plus alerting.

The climate loop is plain two-point hysteresis over the median of the
fresh SHT readings. Irrigation and disinfection are open-loop schedules
on simulated time. All decision functions are pure; the Controller
object only carries the setpoints, schedules, open alerts, and the
rearm flags that make alerts edge-triggered.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

from .config import ConfigError, SimConfig
from .sensors import SensorReading
from .simcore import ActuatorBank, GreenhouseState, SimulationError, StepEvent, recharge_tank


class StaleDataError(Exception):
    """No fresh reading available for a quantity the climate loop needs."""


@dataclass(frozen=True)
class Setpoints:
    temp_set: float = 24.0        # degC
    temp_deadband: float = 1.0
    rh_set: float = 70.0          # %
    rh_deadband: float = 5.0
    led_on_hours: float = 16.0    # photoperiod, on block first
    led_off_hours: float = 8.0

    def __post_init__(self) -> None:
        if self.temp_deadband <= 0 or self.rh_deadband <= 0:
            raise ConfigError("deadbands must be > 0")
        if not 0.0 < self.rh_set < 100.0:
            raise ConfigError("rh_set must be inside (0, 100)")
        if self.led_on_hours < 0 or self.led_off_hours < 0:
            raise ConfigError("photoperiod hours must be >= 0")
        if self.led_on_hours + self.led_off_hours <= 0:
            raise ConfigError("photoperiod must have positive length")


@dataclass(frozen=True)
class IrrigationSchedule:
    on_minutes: float = 10.0
    off_minutes: float = 5.0
    enabled: tuple[bool, ...] = ()
    phase_offset: tuple[float, ...] = ()   # s per box
    return_lag: float = 0.0                # s, return pump trails supply

    def __post_init__(self) -> None:
        if self.on_minutes <= 0:
            raise ConfigError("on_minutes must be > 0")
        if self.off_minutes < 0:
            raise ConfigError("off_minutes must be >= 0")
        if self.return_lag < 0:
            raise ConfigError("return_lag must be >= 0")
        if len(self.enabled) != len(self.phase_offset):
            raise ConfigError("enabled and phase_offset must have equal width")

    @classmethod
    def default(cls, n_boxes: int) -> "IrrigationSchedule":
        return cls(enabled=(True,) * n_boxes, phase_offset=(0.0,) * n_boxes)

    @property
    def cycle_seconds(self) -> float:
        return (self.on_minutes + self.off_minutes) * 60.0


@dataclass(frozen=True)
class UvSchedule:
    period: float = 6 * 3600.0    # s
    duration: float = 30 * 60.0   # s on at the start of each period

    def __post_init__(self) -> None:
        if self.period <= 0 or not 0 <= self.duration <= self.period:
            raise ConfigError("uv duration must lie within a positive period")


@dataclass(frozen=True)
class AlertRules:
    tank_low_threshold: float = 20.0   # L, default 10 % of a 200 L tank
    rearm_factor: float = 1.05         # refill must clear threshold * factor

    def __post_init__(self) -> None:
        if self.tank_low_threshold <= 0 or self.rearm_factor < 1.0:
            raise ConfigError("bad alert rule")


@dataclass(frozen=True)
class Alert:
    id: str
    rule: str          # tank_low | dry_run | sensor_fault
    sim_time: float
    subject: str
    acked: bool = False


@dataclass(frozen=True)
class OperatorCommand:
    kind: str
    payload: Mapping
    command_id: str


@dataclass(frozen=True)
class CommandResult:
    command_id: str
    ok: bool
    error: str | None = None
    detail: Mapping | None = None


def aggregate_climate(
    readings: Iterable[SensorReading],
    now: float,
    sample_period: float,
) -> tuple[float, float]:
    """Median temperature and humidity over the fresh SHT readings.

    Fresh means taken within the last three sample periods. Raises
    StaleDataError when either quantity has no fresh reading at all.
    """
    horizon = 3.0 * sample_period
    temps = [r.value for r in readings
             if r.kind == "sht75_temp" and now - r.sim_time <= horizon]
    rhs = [r.value for r in readings
           if r.kind == "sht75_rh" and now - r.sim_time <= horizon]
    if not temps or not rhs:
        raise StaleDataError("no fresh climate readings")
    return statistics.median(temps), statistics.median(rhs)


def climate_decide(
    temp: float, rh: float, sp: Setpoints, prev: ActuatorBank
) -> tuple[bool, bool, bool]:
    """(heater, fan, humidifier) by two-point hysteresis.

    The fan serves both cooling and dehumidification: it latches on when
    either quantity exceeds its upper band and releases only when both
    are back under their lower bands.
    """
    t_lo, t_hi = sp.temp_set - sp.temp_deadband, sp.temp_set + sp.temp_deadband
    h_lo, h_hi = sp.rh_set - sp.rh_deadband, sp.rh_set + sp.rh_deadband

    if temp < t_lo:
        heater = True
    elif temp > t_hi:
        heater = False
    else:
        heater = prev.heater

    if temp > t_hi or rh > h_hi:
        fan = True
    elif temp < t_lo and rh < h_lo:
        fan = False
    else:
        fan = prev.fan

    if rh < h_lo:
        humidifier = True
    elif rh > h_hi:
        humidifier = False
    else:
        humidifier = prev.humidifier

    return heater, fan, humidifier


def irrigation_tick(
    sim_time: float, schedule: IrrigationSchedule
) -> tuple[tuple[bool, ...], tuple[bool, ...]]:
    """Supply and return pump commands per box for this instant."""
    cycle = schedule.cycle_seconds
    on_s = schedule.on_minutes * 60.0
    supply = []
    ret = []
    for enabled, phase in zip(schedule.enabled, schedule.phase_offset):
        if not enabled:
            supply.append(False)
            ret.append(False)
            continue
        supply.append((sim_time - phase) % cycle < on_s)
        ret.append((sim_time - phase - schedule.return_lag) % cycle < on_s)
    return tuple(supply), tuple(ret)


def uv_tick(sim_time: float, uv: UvSchedule) -> bool:
    return sim_time % uv.period < uv.duration


def led_tick(sim_time: float, sp: Setpoints) -> bool:
    period = (sp.led_on_hours + sp.led_off_hours) * 3600.0
    return sim_time % period < sp.led_on_hours * 3600.0


class Controller:
    """Holds control configuration and alert state; driven by the engine.

    Single-threaded by contract: every method runs on the simulation
    tick thread. Operator commands reach it through a queue owned by
    the engine and are applied between sensor sampling and the control
    decision of the same tick.
    """

    def __init__(
        self,
        cfg: SimConfig,
        setpoints: Setpoints | None = None,
        schedule: IrrigationSchedule | None = None,
        uv: UvSchedule | None = None,
        rules: AlertRules | None = None,
    ) -> None:
        self.cfg = cfg
        self.setpoints = setpoints or Setpoints()
        self.schedule = schedule or IrrigationSchedule.default(cfg.n_boxes)
        self.uv = uv or UvSchedule()
        self.rules = rules or AlertRules(tank_low_threshold=0.10 * cfg.tank_capacity)
        self.alerts: dict[str, Alert] = {}
        self._alert_seq = 0
        self._tank_low_armed = [True] * cfg.n_tanks
        self._dry_run_armed = [True] * cfg.n_tanks
        self._climate_fresh = True  # False while a sensor_fault episode is open
        self.last_bank = ActuatorBank.all_off(cfg.n_boxes)

    # ---- control ---------------------------------------------------------

    def control_tick(
        self, now: float, readings: Sequence[SensorReading], sht_period: float
    ) -> tuple[ActuatorBank, list[Alert]]:
        """Compute the actuator bank for this instant.

        On stale climate data the heater/fan/humidifier hold their last
        commanded state and one sensor_fault alert opens per episode;
        schedules are open-loop and keep running regardless.
        """
        new_alerts: list[Alert] = []
        try:
            temp, rh = aggregate_climate(readings, now, sht_period)
        except StaleDataError:
            heater, fan, hum = (self.last_bank.heater, self.last_bank.fan,
                                self.last_bank.humidifier)
            if self._climate_fresh:
                new_alerts.append(self.open_alert("sensor_fault", now, "climate"))
                self._climate_fresh = False
        else:
            heater, fan, hum = climate_decide(temp, rh, self.setpoints, self.last_bank)
            self._climate_fresh = True
        supply, ret = irrigation_tick(now, self.schedule)
        bank = ActuatorBank(
            heater=heater, fan=fan, humidifier=hum,
            led=led_tick(now, self.setpoints),
            uv=uv_tick(now, self.uv),
            supply_pumps=supply, return_pumps=ret,
        )
        self.last_bank = bank
        return bank, new_alerts

    # ---- alerts ----------------------------------------------------------

    def open_alert(self, rule: str, now: float, subject: str) -> Alert:
        """Open a new alert with a fresh unique id."""
        self._alert_seq += 1
        alert = Alert(id=f"a-{self._alert_seq}", rule=rule, sim_time=now,
                      subject=subject)
        self.alerts[alert.id] = alert
        return alert

    def check_alerts(
        self, state: GreenhouseState, events: Sequence[StepEvent]
    ) -> list[Alert]:
        """Edge-triggered tank_low and dry_run alerts with rearm.

        tank_low fires once per excursion below the threshold and rearms
        only after the level clears threshold * rearm_factor. dry_run
        fires once per tank until that tank is recharged.
        """
        out: list[Alert] = []
        thr = self.rules.tank_low_threshold
        for k, volume in enumerate(state.tank_volume):
            if self._tank_low_armed[k] and volume < thr:
                out.append(self.open_alert("tank_low", state.sim_time, f"tank{k}"))
                self._tank_low_armed[k] = False
            elif not self._tank_low_armed[k] and volume >= thr * self.rules.rearm_factor:
                self._tank_low_armed[k] = True
        for ev in events:
            if ev.kind != "dry_run":
                continue
            if self._dry_run_armed[ev.tank]:
                out.append(self.open_alert("dry_run", state.sim_time,
                                            f"tank{ev.tank}/box{ev.box}"))
                self._dry_run_armed[ev.tank] = False
        return out

    # ---- commands --------------------------------------------------------

    def apply_command(
        self, cmd: OperatorCommand, state: GreenhouseState
    ) -> tuple[GreenhouseState, CommandResult]:
        """Validate and apply one operator command; never raises.

        Returns the (possibly updated) simulation state and the
        acknowledgment to send back. Rejected commands change nothing.
        """
        detail = None
        try:
            if cmd.kind == "set_setpoints":
                self.setpoints = _merge_dataclass(self.setpoints, cmd.payload)
            elif cmd.kind == "set_schedule":
                self.schedule = _merge_schedule(self.schedule, cmd.payload,
                                                self.cfg.n_boxes)
            elif cmd.kind == "recharge_tank":
                state, detail = self._recharge(cmd.payload, state)
            elif cmd.kind == "ack_alert":
                self._ack(cmd.payload)
            else:
                raise ConfigError(f"unknown command kind {cmd.kind!r}")
        except (ConfigError, SimulationError) as exc:
            return state, CommandResult(cmd.command_id, ok=False, error=str(exc))
        return state, CommandResult(cmd.command_id, ok=True, detail=detail)

    def _recharge(
        self, payload: Mapping, state: GreenhouseState
    ) -> tuple[GreenhouseState, Mapping]:
        try:
            tank = int(payload["tank"])
            volume = float(payload["volume"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("recharge_tank payload needs tank and volume") from None
        state, overflow = recharge_tank(state, tank, volume, self.cfg)
        self._dry_run_armed[tank] = True
        return state, {"tank": tank, "added": volume - overflow, "overflow": overflow}

    def _ack(self, payload: Mapping) -> None:
        alert_id = payload.get("id")
        if alert_id not in self.alerts:
            raise ConfigError(f"unknown alert id {alert_id!r}")
        self.alerts[alert_id] = replace(self.alerts[alert_id], acked=True)

    @property
    def open_unacked(self) -> int:
        return sum(1 for a in self.alerts.values() if not a.acked)


def _merge_dataclass(current: Setpoints, payload: Mapping) -> Setpoints:
    allowed = {f.name for f in fields(Setpoints)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown setpoint fields: {sorted(unknown)}")
    try:
        return replace(current, **{k: float(v) for k, v in payload.items()})
    except (TypeError, ValueError):
        raise ConfigError("setpoint values must be numbers") from None


def _merge_schedule(
    current: IrrigationSchedule, payload: Mapping, n_boxes: int
) -> IrrigationSchedule:
    allowed = {f.name for f in fields(IrrigationSchedule)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown schedule fields: {sorted(unknown)}")
    kwargs = dict(payload)
    if "enabled" in kwargs:
        flags = kwargs["enabled"]
        if not isinstance(flags, (list, tuple)) or len(flags) != n_boxes:
            raise ConfigError(f"enabled must list {n_boxes} flags")
        kwargs["enabled"] = tuple(bool(x) for x in flags)
    if "phase_offset" in kwargs:
        offs = kwargs["phase_offset"]
        if not isinstance(offs, (list, tuple)) or len(offs) != n_boxes:
            raise ConfigError(f"phase_offset must list {n_boxes} values")
        kwargs["phase_offset"] = tuple(float(x) for x in offs)
    for key in ("on_minutes", "off_minutes", "return_lag"):
        if key in kwargs:
            try:
                kwargs[key] = float(kwargs[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a number") from None
    return replace(current, **kwargs)
