"""Multiplicative curriculum over training difficulty parameters.

Each parameter grows by ``(1 + rate)`` on every update whose motion
completion ratio exceeds the threshold, and is clamped to its range.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class CurriculumParam:
    name: str
    rate: float
    lo: float
    hi: float


# name, adaptation rate, range
DEFAULT_PARAMS = (
    CurriculumParam("reward_penalty", 3e-6, 0.05, 1.0),
    CurriculumParam("reward_limits", 2.5e-7, 0.9, 0.95),
    CurriculumParam("push_interval", 1.5e-5, 1.0, 50.0),
    CurriculumParam("observation_preshift", 5e-6, 1.0, 2.0),
    CurriculumParam("termination_distance", 3e-6, 2.5, 3.0),
    CurriculumParam("termination_scale", 1e-5, 0.8, 4.0),
    CurriculumParam("noise", 3e-6, 0.05, 1.0),
)


class CurriculumState:
    """Live curriculum values. Single writer; ``snapshot`` for readers."""

    def __init__(self, params: Iterable[CurriculumParam] = DEFAULT_PARAMS, threshold: float = 0.8):
        self.params = tuple(params)
        if not 0.0 < threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        for p in self.params:
            if not p.rate > 0:
                raise ValueError(f"{p.name}: rate must be > 0")
            if p.lo > p.hi:
                raise ValueError(f"{p.name}: empty range")
        self.threshold = threshold
        self.names = tuple(p.name for p in self.params)
        self._index = {name: i for i, name in enumerate(self.names)}
        self._growth = [1.0 + p.rate for p in self.params]
        self._hi = [p.hi for p in self.params]
        self._values = [p.lo for p in self.params]
        # parameters not yet clamped at their upper bound
        self._active = [i for i, p in enumerate(self.params) if p.lo < p.hi]
        self.iteration = 0

    @property
    def values(self) -> np.ndarray:
        return np.array(self._values)

    def update(self, eta: float) -> "CurriculumState":
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"completion ratio must be in [0, 1], got {eta}")
        if eta > self.threshold and self._active:
            vals, growth, hi = self._values, self._growth, self._hi
            still = []
            for i in self._active:
                v = vals[i] * growth[i]
                if v >= hi[i]:
                    vals[i] = hi[i]
                else:
                    vals[i] = v
                    still.append(i)
            self._active = still
        self.iteration += 1
        return self

    def current(self, name: str) -> float:
        try:
            return self._values[self._index[name]]
        except KeyError:
            raise KeyError(f"unknown curriculum parameter {name!r}") from None

    def snapshot(self) -> dict[str, float]:
        return dict(zip(self.names, self._values))

    def log_row(self, eta: float) -> str:
        return ",".join([str(self.iteration), repr(float(eta))] + [repr(v) for v in self._values])

    def log_header(self) -> str:
        return ",".join(["iteration", "eta", *self.names])

    @classmethod
    def from_dict(cls, doc: dict) -> "CurriculumState":
        params = [
            CurriculumParam(p["name"], float(p["rate"]), float(p["range"][0]), float(p["range"][1]))
            for p in doc.get("params", [])
        ] or DEFAULT_PARAMS
        return cls(params, float(doc.get("threshold", 0.8)))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "params": [{"name": p.name, "rate": p.rate, "range": [p.lo, p.hi]} for p in self.params],
        }


def update(state: CurriculumState, eta: float) -> CurriculumState:
    return state.update(eta)


def load_curriculum(path) -> CurriculumState:
    return CurriculumState.from_dict(json.loads(Path(path).read_text()))


class CompletionTracker:
    """Motion completion ratio over the last ``window`` episodes."""

    def __init__(self, window: int = 100):
        self._done = deque(maxlen=window)

    def record(self, reached_clip_end: bool) -> None:
        self._done.append(bool(reached_clip_end))

    @property
    def ratio(self) -> float:
        return sum(self._done) / len(self._done) if self._done else 0.0


# -- consumers ----------------------------------------------------------------

PUSH_INTERVAL_WINDOW = (3.0, 6.0)


def push_interval_range(state: CurriculumState, window=PUSH_INTERVAL_WINDOW) -> tuple[float, float]:
    """Larger curriculum value means more frequent pushes: the upper end of the
    interval window slides from its maximum down to its minimum."""
    p = state.params[state._index["push_interval"]]
    frac = 0.0 if p.hi == p.lo else (state.current("push_interval") - p.lo) / (p.hi - p.lo)
    lo, hi = window
    return lo, hi - frac * (hi - lo)


def preshift_max_seconds(state: CurriculumState) -> float:
    return state.current("observation_preshift")
