"""Sensor emulation: noisy, quantized, range-limited observers of the state.

Five families are modelled: SHT75 temperature/humidity probes, SRF05
ultrasonic level sounders on the tanks, YF-S201 hall-effect flow meters
on the box feed lines, a GY-302 lux meter, and a TCS3200 colour sensor
under the LED array. Every reading follows the same pipeline:

    clamp(quantize(true_value + gaussian(0, sigma)), range)

with round-half-even quantization. Each sensor owns an RNG stream split
from the master seed by a stable hash of its id, so streams do not
interact and the whole reading sequence is reproducible bitwise.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import ConfigError, SimConfig
from .simcore import GreenhouseState

KINDS = ("sht75_temp", "sht75_rh", "srf05", "yf_s201", "gy302", "tcs3200")

UNITS = {
    "sht75_temp": "degC",
    "sht75_rh": "%",
    "srf05": "cm",
    "yf_s201": "pulses",
    "gy302": "lux",
    "tcs3200": "rgb",
}

PULSES_PER_LITER = 450.0  # YF-S201 nominal K-factor


@dataclass(frozen=True)
class SensorSpec:
    id: str
    kind: str
    target: int            # zone index (climate/light), tank (srf05), box (yf_s201)
    noise_sigma: float     # in sensor units
    quantization: float    # 0 disables
    range: tuple[float, float]
    sample_period: float   # s

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown sensor kind {self.kind!r}")
        if self.sample_period <= 0:
            raise ConfigError(f"{self.id}: sample_period must be > 0")
        if self.noise_sigma < 0 or self.quantization < 0:
            raise ConfigError(f"{self.id}: noise and quantization must be >= 0")
        if not self.range[0] < self.range[1]:
            raise ConfigError(f"{self.id}: range min must be < max")


@dataclass(frozen=True)
class SensorReading:
    sensor_id: str
    kind: str
    value: float | tuple[float, float, float]
    unit: str
    sim_time: float
    seq: int


def quantize(x: float, q: float) -> float:
    if q == 0.0:
        return x
    return round(x / q) * q


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def srf05_distance(volume: float, cfg: SimConfig) -> float:
    """cm from the sounder at the tank top down to the water surface."""
    return (cfg.tank_height - volume / (1000.0 * cfg.tank_cross_section)) * 100.0


def volume_from_distance(distance: float, cfg: SimConfig) -> float:
    """Inverse of srf05_distance. Out-of-range distances are a sensor fault."""
    if not 0.0 <= distance <= cfg.tank_height * 100.0:
        raise ValueError(f"distance {distance} cm outside tank geometry")
    return (cfg.tank_height - distance / 100.0) * 1000.0 * cfg.tank_cross_section


def yfs201_pulses(flow: float, dt: float) -> int:
    """Hall pulses emitted for `flow` L/min sustained over dt seconds."""
    liters = flow * dt / 60.0
    return int(round(PULSES_PER_LITER * liters))


def flow_from_pulses(pulses: float, dt: float) -> float:
    """L/min recovered from a pulse count over a dt-second window."""
    return pulses / (PULSES_PER_LITER * dt / 60.0)


def _true_value(spec: SensorSpec, state: GreenhouseState, cfg: SimConfig):
    if spec.kind == "sht75_temp":
        return state.air_temp
    if spec.kind == "sht75_rh":
        return state.rel_humidity
    if spec.kind == "srf05":
        return srf05_distance(state.tank_volume[spec.target], cfg)
    if spec.kind == "yf_s201":
        return float(yfs201_pulses(state.box_flow[spec.target], spec.sample_period))
    if spec.kind == "gy302":
        return state.lux
    # tcs3200: channel intensities proportional to the LED spectrum, 0..255
    scale = 255.0 if state.lux > 0.0 else 0.0
    return tuple(share * scale for share in cfg.led_spectrum)


def sample(
    spec: SensorSpec,
    state: GreenhouseState,
    rng: np.random.Generator,
    cfg: SimConfig,
    seq: int = 0,
) -> SensorReading:
    """One observation of `state` through this sensor's imperfections.

    A noise variate is always drawn (even with sigma 0) so a sensor's
    stream position depends only on how many samples it has taken.
    """
    true = _true_value(spec, state, cfg)
    lo, hi = spec.range
    if isinstance(true, tuple):
        noise = rng.standard_normal(len(true))
        value = tuple(
            _clamp(quantize(t + spec.noise_sigma * n, spec.quantization), lo, hi)
            for t, n in zip(true, noise)
        )
    else:
        noisy = true + spec.noise_sigma * rng.standard_normal()
        value = _clamp(quantize(noisy, spec.quantization), lo, hi)
    return SensorReading(
        sensor_id=spec.id,
        kind=spec.kind,
        value=value,
        unit=UNITS[spec.kind],
        sim_time=state.sim_time,
        seq=seq,
    )


def sensor_rng(master_seed: int, sensor_id: str) -> np.random.Generator:
    """Independent stream per sensor, stable across runs and suite order."""
    digest = hashlib.sha256(sensor_id.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([master_seed, tag]))


@dataclass
class SensorChannel:
    """A spec bound to its RNG stream and sequence counter."""
    spec: SensorSpec
    rng: np.random.Generator
    seq: int = 0

    def read(self, state: GreenhouseState, cfg: SimConfig) -> SensorReading:
        self.seq += 1
        return sample(self.spec, state, self.rng, cfg, seq=self.seq)


def default_sensor_suite(cfg: SimConfig) -> list[SensorSpec]:
    """The reference installation: three SHT75 pairs spread through the
    zone, one SRF05 per tank, one YF-S201 per box, one lux and one colour
    sensor. Noise and quantization defaults follow the datasheets; sample
    periods are emulation defaults.
    """
    suite: list[SensorSpec] = []
    for z in range(3):
        suite.append(SensorSpec(
            id=f"sht{z}.temp", kind="sht75_temp", target=z,
            noise_sigma=0.1, quantization=0.01, range=(-40.0, 120.0),
            sample_period=10.0,
        ))
        suite.append(SensorSpec(
            id=f"sht{z}.rh", kind="sht75_rh", target=z,
            noise_sigma=0.8, quantization=0.03, range=(0.0, 100.0),
            sample_period=10.0,
        ))
    for k in range(cfg.n_tanks):
        suite.append(SensorSpec(
            id=f"srf05.{k}", kind="srf05", target=k,
            noise_sigma=0.2, quantization=0.1, range=(0.0, cfg.tank_height * 100.0),
            sample_period=30.0,
        ))
    for b in range(cfg.n_boxes):
        # Pulse windows widened from the 1 s hardware gate time to keep
        # day-long logs a manageable size; the count is exact either way.
        suite.append(SensorSpec(
            id=f"yf.{b}", kind="yf_s201", target=b,
            noise_sigma=0.0, quantization=1.0, range=(0.0, 1e9),
            sample_period=10.0,
        ))
    suite.append(SensorSpec(
        id="gy302", kind="gy302", target=0,
        noise_sigma=5.0, quantization=1.0, range=(0.0, 65535.0),
        sample_period=10.0,
    ))
    suite.append(SensorSpec(
        id="tcs3200", kind="tcs3200", target=0,
        noise_sigma=1.0, quantization=1.0, range=(0.0, 255.0),
        sample_period=10.0,
    ))
    return suite


def validate_suite(suite: Sequence[SensorSpec], cfg: SimConfig) -> None:
    """Startup check: ids unique, targets bound, periods on the step grid."""
    seen: set[str] = set()
    for spec in suite:
        if spec.id in seen:
            raise ConfigError(f"duplicate sensor id {spec.id!r}")
        seen.add(spec.id)
        if spec.kind == "srf05" and not 0 <= spec.target < cfg.n_tanks:
            raise ConfigError(f"{spec.id}: tank {spec.target} does not exist")
        if spec.kind == "yf_s201" and not 0 <= spec.target < cfg.n_boxes:
            raise ConfigError(f"{spec.id}: box {spec.target} does not exist")
        steps = spec.sample_period / cfg.timestep
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ConfigError(
                f"{spec.id}: sample_period {spec.sample_period} is not a "
                f"multiple of the {cfg.timestep} s timestep"
            )


def build_channels(suite: Sequence[SensorSpec], cfg: SimConfig) -> list[SensorChannel]:
    validate_suite(suite, cfg)
    return [SensorChannel(spec, sensor_rng(cfg.seed, spec.id)) for spec in suite]
