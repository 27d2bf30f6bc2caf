"""Lockstep multiplexing of the mocap, control and physics rates on one base tick."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

MOCAP, CONTROL, PHYSICS = "mocap", "control", "physics"
# order in which due events fire within one base tick
FIRE_ORDER = (MOCAP, CONTROL, PHYSICS)


@dataclass(frozen=True)
class RateConfig:
    mocap_hz: int = 120
    control_hz: int = 50
    physics_hz: int = 400

    def __post_init__(self):
        for name in ("mocap_hz", "control_hz", "physics_hz"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))

    @property
    def base_hz(self) -> int:
        return math.lcm(self.mocap_hz, self.control_hz, self.physics_hz)

    def period(self, event: str) -> int:
        """Base ticks between firings of ``event``."""
        return self.base_hz // {MOCAP: self.mocap_hz, CONTROL: self.control_hz, PHYSICS: self.physics_hz}[event]

    @property
    def physics_per_control(self) -> int:
        if self.physics_hz % self.control_hz:
            raise ValueError("physics rate must be a multiple of the control rate")
        return self.physics_hz // self.control_hz

    def num_ticks(self, duration: float) -> int:
        ticks = duration * self.base_hz
        n = int(round(ticks))
        if abs(ticks - n) > 1e-6:
            raise ValueError(f"duration {duration} s is not a whole number of base ticks")
        return n

    def to_dict(self) -> dict:
        return {"mocap_hz": self.mocap_hz, "control_hz": self.control_hz, "physics_hz": self.physics_hz}

    @classmethod
    def from_dict(cls, doc: dict) -> "RateConfig":
        return cls(**doc)


def schedule(rates: RateConfig, num_ticks: int) -> Iterator[tuple[int, tuple[str, ...]]]:
    """(tick, due events in fire order) for every tick with at least one event."""
    periods = [(e, rates.period(e)) for e in FIRE_ORDER]
    for k in range(num_ticks):
        due = tuple(e for e, p in periods if k % p == 0)
        if due:
            yield k, due


def count_events(rates: RateConfig, num_ticks: int) -> dict[str, int]:
    counts = dict.fromkeys(FIRE_ORDER, 0)
    for _, due in schedule(rates, num_ticks):
        for e in due:
            counts[e] += 1
    return counts
