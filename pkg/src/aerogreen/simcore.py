"""Deterministic fixed-timestep physical model of the greenhouse.

Single air zone with first-order lumped dynamics, nutrient tanks with
recirculating irrigation, and per-device energy metering. States are
immutable snapshots; `step` is a pure function, so identical inputs
give bitwise-identical trajectories.

Energy bookkeeping accrues per-device ON-time in seconds (exact float
additions for integral timesteps) and derives kWh as power * on_time /
3600 at read time; the total is always the fixed-order sum of the
per-device values, which keeps totals and per-device figures additive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from .config import SimConfig

AIR_DENSITY = 1.2          # kg/m^3
AIR_CP = 1.006             # kJ/(kg K)
VAPOR_GAS_CONSTANT = 461.5  # J/(kg K)

DAY_SECONDS = 86400.0

HEALTH_CLASSES = ("healthy", "drought", "rust")

# Seed-stream tag for the plant-health assignment, kept distinct from the
# per-sensor streams derived in `sensors`.
_PLANT_STREAM = 0x706C616E74  # "plant"


class SimulationError(Exception):
    """Invalid operation against the physical model (bad tank id, ...)."""


@dataclass(frozen=True)
class ActuatorBank:
    """Commanded on/off states for every device, pumps per box."""
    heater: bool = False
    fan: bool = False
    humidifier: bool = False
    led: bool = False
    uv: bool = False
    supply_pumps: tuple[bool, ...] = ()
    return_pumps: tuple[bool, ...] = ()

    @classmethod
    def all_off(cls, n_boxes: int) -> "ActuatorBank":
        off = (False,) * n_boxes
        return cls(supply_pumps=off, return_pumps=off)

    def to_dict(self) -> dict:
        return {
            "heater": int(self.heater),
            "fan": int(self.fan),
            "humidifier": int(self.humidifier),
            "led": int(self.led),
            "uv": int(self.uv),
            "supply_pumps": [int(x) for x in self.supply_pumps],
            "return_pumps": [int(x) for x in self.return_pumps],
        }


@dataclass(frozen=True)
class StepEvent:
    """Side event raised while stepping (currently only pump dry-run)."""
    kind: str
    tank: int
    box: int
    shortfall: float  # litres requested but not delivered


@dataclass(frozen=True)
class GreenhouseState:
    sim_time: float                      # s since epoch 0
    air_temp: float                      # degC
    rel_humidity: float                  # % in [0, 100]
    lux: float
    tank_volume: tuple[float, ...]       # L per tank
    box_flow: tuple[float, ...]          # L/min actually dispensed last step
    actuators: ActuatorBank
    on_seconds: Mapping[str, float]      # accrued on-time per device, s
    energy_by_device: Mapping[str, float]  # kWh, derived from on_seconds
    energy_total: float                  # kWh, fixed-order sum of the above
    plant_health: tuple[str, ...]


def device_names(cfg: SimConfig) -> list[str]:
    names = ["heater", "fan", "humidifier", "led", "uv"]
    names += [f"supply_pump{i}" for i in range(cfg.n_boxes)]
    names += [f"return_pump{i}" for i in range(cfg.n_boxes)]
    return names


def device_power(cfg: SimConfig, device: str) -> float:
    """Rated draw in kW for one device name."""
    if device.startswith("supply_pump") or device.startswith("return_pump"):
        return cfg.pump_power
    return {
        "heater": cfg.heater_power,
        "fan": cfg.fan_power,
        "humidifier": cfg.humidifier_power,
        "led": cfg.led_power,
        "uv": cfg.uv_power,
    }[device]


def _derive_energy(cfg: SimConfig, on_seconds: Mapping[str, float]) -> tuple[dict, float]:
    energy = {d: device_power(cfg, d) * (t / 3600.0) for d, t in on_seconds.items()}
    return energy, sum(energy.values())


def saturation_vapor_density(temp_c: float) -> float:
    """kg/m^3 of water vapor at saturation (Magnus formula + ideal gas)."""
    es = 610.94 * math.exp((17.625 * temp_c) / (243.04 + temp_c))  # Pa
    return es / (VAPOR_GAS_CONSTANT * (temp_c + 273.15))


def ambient_profile(t: float, cfg: SimConfig) -> tuple[float, float]:
    """Deterministic sinusoidal diurnal (T_out degC, RH_out %) at time t.

    Phase is computed from t mod 86400 so outputs are bitwise periodic.
    """
    if t < 0:
        raise SimulationError("ambient_profile: t must be >= 0")
    phase = math.fmod(t, DAY_SECONDS) / DAY_SECONDS
    t_out = cfg.ambient_temp_mean + cfg.ambient_temp_amp * math.sin(math.tau * phase)
    rh_out = cfg.ambient_rh_mean + cfg.ambient_rh_amp * math.sin(math.tau * phase)
    return t_out, min(100.0, max(0.0, rh_out))


def initial_state(cfg: SimConfig) -> GreenhouseState:
    on_seconds = {d: 0.0 for d in device_names(cfg)}
    energy, total = _derive_energy(cfg, on_seconds)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _PLANT_STREAM]))
    p_drought, p_rust = cfg.plant_disease_rates
    draws = rng.random(cfg.n_plants)
    health = tuple(
        "drought" if u < p_drought else ("rust" if u < p_drought + p_rust else "healthy")
        for u in draws
    )
    return GreenhouseState(
        sim_time=0.0,
        air_temp=cfg.initial_temp,
        rel_humidity=cfg.initial_rh,
        lux=0.0,
        tank_volume=(cfg.tank_capacity * cfg.initial_tank_fill,) * cfg.n_tanks,
        box_flow=(0.0,) * cfg.n_boxes,
        actuators=ActuatorBank.all_off(cfg.n_boxes),
        on_seconds=on_seconds,
        energy_by_device=energy,
        energy_total=total,
        plant_health=health,
    )


def step(
    state: GreenhouseState,
    actuators: ActuatorBank,
    cfg: SimConfig,
    dt: float,
) -> tuple[GreenhouseState, list[StepEvent]]:
    """Advance the plant one timestep under the given actuator commands.

    Forward-Euler thermal and moisture balances; tanks lose what the
    supply pumps dispense and recover return_fraction of it when the
    matching return pump runs. A pump on an empty tank delivers only
    the remaining volume and raises a dry_run event (volume never goes
    negative).
    """
    if len(actuators.supply_pumps) != cfg.n_boxes or len(actuators.return_pumps) != cfg.n_boxes:
        raise SimulationError("actuator bank pump width does not match n_boxes")

    t = state.sim_time
    t_out, rh_out = ambient_profile(t, cfg)
    events: list[StepEvent] = []

    # --- Irrigation / tanks ---------------------------------------------
    tank_volume = list(state.tank_volume)
    box_flow = [0.0] * cfg.n_boxes
    dispensed_total = 0.0  # L this step, feeds the mist term below
    want = cfg.nozzle_flow * dt / 60.0  # L per box per step
    for b in range(cfg.n_boxes):
        if not actuators.supply_pumps[b]:
            continue
        tank = cfg.tank_of_box(b)
        dispensed = want if tank_volume[tank] >= want else tank_volume[tank]
        if dispensed < want:
            events.append(StepEvent("dry_run", tank=tank, box=b, shortfall=want - dispensed))
        tank_volume[tank] -= dispensed
        if actuators.return_pumps[b]:
            tank_volume[tank] += cfg.return_fraction * dispensed
        box_flow[b] = dispensed * 60.0 / dt
        dispensed_total += dispensed
    capacity = cfg.tank_capacity
    tank_volume = [min(capacity, max(0.0, v)) for v in tank_volume]

    # --- Thermal balance (kW, kJ) ---------------------------------------
    vent_ua = AIR_DENSITY * AIR_CP * cfg.air_volume * cfg.vent_exchange_rate / 3600.0  # kW/degC
    q = 0.0
    if actuators.heater:
        q += cfg.heater_power
    q -= cfg.envelope_UA * (state.air_temp - t_out)
    if actuators.fan:
        q -= vent_ua * (state.air_temp - t_out)
    air_temp = state.air_temp + q * dt / cfg.thermal_capacitance

    # --- Moisture balance ------------------------------------------------
    flux = 0.0  # kg water vapor per second into the zone
    if actuators.humidifier:
        flux += cfg.humidifier_rate / 1000.0
    if dispensed_total > 0.0:
        flux += cfg.mist_evaporation * dispensed_total / 1000.0 / dt
    if actuators.fan:
        exch = cfg.air_volume * cfg.vent_exchange_rate / 3600.0  # m^3/s
        v_in = state.rel_humidity / 100.0 * saturation_vapor_density(state.air_temp)
        v_out = rh_out / 100.0 * saturation_vapor_density(t_out)
        flux += exch * (v_out - v_in)
    if flux == 0.0 and air_temp == state.air_temp:
        rel_humidity = state.rel_humidity  # exact fixed point when nothing moves
    else:
        vapor = state.rel_humidity / 100.0 * saturation_vapor_density(state.air_temp) * cfg.air_volume
        vapor = max(0.0, vapor + flux * dt)
        rel_humidity = vapor / (saturation_vapor_density(air_temp) * cfg.air_volume) * 100.0
        rel_humidity = min(100.0, max(0.0, rel_humidity))

    # --- Energy ----------------------------------------------------------
    on_seconds = dict(state.on_seconds)
    for device, on in _active_devices(actuators):
        if on:
            on_seconds[device] += dt
    energy, total = _derive_energy(cfg, on_seconds)

    new_state = GreenhouseState(
        sim_time=t + dt,
        air_temp=air_temp,
        rel_humidity=rel_humidity,
        lux=cfg.led_lux if actuators.led else 0.0,
        tank_volume=tuple(tank_volume),
        box_flow=tuple(box_flow),
        actuators=actuators,
        on_seconds=on_seconds,
        energy_by_device=energy,
        energy_total=total,
        plant_health=state.plant_health,
    )
    return new_state, events


def _active_devices(actuators: ActuatorBank) -> Iterable[tuple[str, bool]]:
    yield "heater", actuators.heater
    yield "fan", actuators.fan
    yield "humidifier", actuators.humidifier
    yield "led", actuators.led
    yield "uv", actuators.uv
    for i, on in enumerate(actuators.supply_pumps):
        yield f"supply_pump{i}", on
    for i, on in enumerate(actuators.return_pumps):
        yield f"return_pump{i}", on


def recharge_tank(
    state: GreenhouseState, tank_id: int, volume: float, cfg: SimConfig
) -> tuple[GreenhouseState, float]:
    """Add volume (L) to one tank, clamped at capacity.

    Returns the new state and the overflow amount that did not fit.
    """
    if not 0 <= tank_id < cfg.n_tanks:
        raise SimulationError(f"unknown tank {tank_id}")
    if volume <= 0:
        raise SimulationError("recharge volume must be > 0")
    capacity = cfg.tank_capacity
    old = state.tank_volume[tank_id]
    new = min(capacity, old + volume)
    overflow = old + volume - new
    volumes = list(state.tank_volume)
    volumes[tank_id] = new
    return replace(state, tank_volume=tuple(volumes)), overflow
