"""Constant-power energy and CO2e estimates from measured runtime.

Power draw is a fixed fraction of the CPU's TDP plus a per-GB RAM term, so
emissions are proportional to runtime for a given machine.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, TypeVar

from .errors import InvalidArgumentError

T = TypeVar("T")

JOULES_PER_KWH = 3.6e6


@dataclass(frozen=True)
class PowerModel:
    cpu_tdp_w: float
    carbon_intensity: float  # gCO2e / kWh
    cpu_load_factor: float = 0.5
    ram_gb: float = 0.0
    ram_w_per_gb: float = 0.375
    pue: float = 1.0

    def __post_init__(self):
        checks = [
            ("cpu_tdp_w", self.cpu_tdp_w > 0),
            ("carbon_intensity", self.carbon_intensity >= 0),
            ("cpu_load_factor", 0 < self.cpu_load_factor <= 1),
            ("ram_gb", self.ram_gb >= 0),
            ("ram_w_per_gb", self.ram_w_per_gb >= 0),
            ("pue", self.pue >= 1),
        ]
        for name, ok in checks:
            value = getattr(self, name)
            if not (math.isfinite(value) and ok):
                raise InvalidArgumentError(f"invalid {name}: {value!r}")

    @property
    def power_w(self) -> float:
        return self.cpu_tdp_w * self.cpu_load_factor + self.ram_gb * self.ram_w_per_gb

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EmissionsEstimate:
    runtime_s: float
    power_w: float
    energy_kwh: float
    gco2e: float
    power_model: PowerModel

    def to_dict(self) -> dict:
        out = asdict(self)
        out["power_model"] = self.power_model.to_dict()
        return out


def estimate(runtime_s: float, model: PowerModel) -> EmissionsEstimate:
    if not (math.isfinite(runtime_s) and runtime_s >= 0):
        raise InvalidArgumentError(f"runtime must be a non-negative number, got {runtime_s!r}")
    power = model.power_w
    energy = power * runtime_s / JOULES_PER_KWH
    gco2e = energy * model.carbon_intensity * model.pue
    return EmissionsEstimate(float(runtime_s), power, energy, gco2e, model)


def timed(task: Callable[[], T]) -> tuple[T, float]:
    """Run ``task`` and return its result with the wall-clock seconds it took."""
    t0 = time.perf_counter()
    result = task()
    return result, time.perf_counter() - t0
