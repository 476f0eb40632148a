"""Simulation configuration.

One flat key/value document (JSON) mirrors the field names below
exactly; unknown keys are rejected so typos fail loudly at load time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Rejected configuration document or field value."""


@dataclass(frozen=True)
class SimConfig:
    # Structure (SI unless noted)
    floor_area: float = 9.0            # m^2
    height: float = 2.0                # m
    n_boxes: int = 9
    box_dims: tuple[float, float, float] = (0.53, 0.33, 0.28)  # m, L x W x H
    n_tanks: int = 3
    tank_cross_section: float = 0.25   # m^2
    tank_height: float = 0.8           # m

    # Device powers, kW
    pump_power: float = 0.25
    heater_power: float = 2.0
    fan_power: float = 0.1
    humidifier_power: float = 0.05
    led_power: float = 0.4
    uv_power: float = 0.03

    # Lumped thermal / moisture model
    thermal_capacitance: float = 65.0  # kJ/degC
    envelope_UA: float = 0.02          # kW/degC, conduction through the shell
    vent_exchange_rate: float = 20.0   # air changes per hour with the fan on
    humidifier_rate: float = 0.5       # g water per second
    mist_evaporation: float = 1.0      # g water evaporated per litre dispensed

    # Irrigation hardware
    nozzle_flow: float = 1.2           # L/min dispensed per box while its pump runs
    return_fraction: float = 0.98      # share of dispensed volume recovered per step

    # Lighting
    led_lux: float = 8000.0
    led_spectrum: tuple[float, float, float] = (0.30, 0.45, 0.25)  # RGB shares

    # Ambient diurnal profile (sinusoidal, period 24 h)
    ambient_temp_mean: float = 15.0    # degC
    ambient_temp_amp: float = 5.0      # degC
    ambient_rh_mean: float = 60.0      # %
    ambient_rh_amp: float = 10.0       # %

    # Initial conditions
    initial_temp: float = 20.0         # degC
    initial_rh: float = 60.0           # %
    initial_tank_fill: float = 1.0     # fraction of capacity

    # Plants (disease tags only; they drive synthetic imaging)
    n_plants: int = 9
    plant_disease_rates: tuple[float, float] = (0.0, 0.0)  # P(drought), P(rust)

    # Timing
    timestep: float = 1.0              # s
    control_period: float = 10.0       # s between control decisions
    energy_snapshot_period: float = 60.0  # s between logged energy snapshots
    seed: int = 42
    time_acceleration: float = 1.0     # simulated seconds per wall second in serve mode
    wall_epoch: str = "2021-06-01T00:00:00Z"  # wall-clock origin for sim_time 0

    def __post_init__(self) -> None:
        positive = [
            "floor_area", "height", "tank_cross_section", "tank_height",
            "pump_power", "heater_power", "fan_power", "humidifier_power",
            "led_power", "uv_power", "thermal_capacitance", "envelope_UA",
            "nozzle_flow", "led_lux", "timestep", "control_period",
            "energy_snapshot_period",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("vent_exchange_rate", "humidifier_rate", "mist_evaporation"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.n_boxes < 1 or self.n_tanks < 1:
            raise ConfigError("n_boxes and n_tanks must be >= 1")
        if self.n_boxes % self.n_tanks != 0:
            raise ConfigError("n_boxes must be a multiple of n_tanks")
        if not 0.0 <= self.return_fraction <= 1.0:
            raise ConfigError("return_fraction must be in [0, 1]")
        if not 0.0 <= self.initial_rh <= 100.0:
            raise ConfigError("initial_rh must be in [0, 100]")
        if not 0.0 <= self.initial_tank_fill <= 1.0:
            raise ConfigError("initial_tank_fill must be in [0, 1]")
        if len(self.box_dims) != 3 or any(d <= 0 for d in self.box_dims):
            raise ConfigError("box_dims must be three positive lengths")
        if len(self.led_spectrum) != 3 or any(s < 0 for s in self.led_spectrum):
            raise ConfigError("led_spectrum must be three non-negative shares")
        if self.time_acceleration < 1.0:
            raise ConfigError("time_acceleration must be >= 1")
        if self.n_plants < 1:
            raise ConfigError("n_plants must be >= 1")
        p_drought, p_rust = self.plant_disease_rates
        if p_drought < 0 or p_rust < 0 or p_drought + p_rust > 1.0:
            raise ConfigError("plant_disease_rates must be non-negative and sum to <= 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    @property
    def tank_capacity(self) -> float:
        """L per tank."""
        return self.tank_cross_section * self.tank_height * 1000.0

    @property
    def air_volume(self) -> float:
        """m^3 of greenhouse air."""
        return self.floor_area * self.height

    @property
    def boxes_per_tank(self) -> int:
        return self.n_boxes // self.n_tanks

    def tank_of_box(self, box: int) -> int:
        """Each tank serves a contiguous run of boxes (3 of 9 by default)."""
        return box // self.boxes_per_tank

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for f in fields(cls):
            if f.name not in doc:
                continue
            value = doc[f.name]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> SimConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return SimConfig.from_dict(doc)


def save_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
