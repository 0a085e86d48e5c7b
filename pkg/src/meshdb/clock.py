"""Injectable clocks; nothing in the package reads wall time ambiently."""

from __future__ import annotations

import time


class VirtualClock:
    """Deterministic, manually advanced clock for simulation and tests."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def __call__(self) -> float:
        return self._now

    def set(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"virtual clock cannot go backwards ({t} < {self._now})")
        self._now = float(t)

    def advance(self, dt: float) -> float:
        self.set(self._now + dt)
        return self._now


def wall_clock() -> float:
    return time.time()
