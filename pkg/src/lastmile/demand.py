"""Stochastic demand waves.

Each wave draws a customer count, then per-customer quadrant + location,
order quantity, and a service window anchored at the wave time. Counts,
locations, quantities and windows come from separate named substreams so the
distributions can be changed independently without disturbing each other
under a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import substream
from .world import Order, Point


@dataclass
class DemandParams:
    count_low: int = 20
    count_high: int = 40
    quantity_low: int = 1
    quantity_high: int = 10
    open_frac_low: float = 0.2    # window opens at t + U(0.2T, 0.8T)
    open_frac_high: float = 0.8
    width_frac_low: float = 0.1   # window closes open + U(0.1T, 2T) later
    width_frac_high: float = 2.0
    quadrant_weights: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)

    def validate(self) -> list[str]:
        problems = []
        if self.count_low < 0 or self.count_high < self.count_low:
            problems.append(f"demand counts must satisfy 0 <= low <= high, got ({self.count_low}, {self.count_high})")
        if self.quantity_low < 1 or self.quantity_high < self.quantity_low:
            problems.append(
                f"demand quantities must satisfy 1 <= low <= high, got ({self.quantity_low}, {self.quantity_high})"
            )
        if not 0 <= self.open_frac_low <= self.open_frac_high:
            problems.append("demand window open fractions must satisfy 0 <= low <= high")
        if not 0 < self.width_frac_low <= self.width_frac_high:
            problems.append("demand window width fractions must satisfy 0 < low <= high")
        if len(self.quadrant_weights) != 4:
            problems.append(f"demand.quadrant_weights needs 4 entries, got {len(self.quadrant_weights)}")
        else:
            if any(w < 0 for w in self.quadrant_weights):
                problems.append("demand.quadrant_weights must be non-negative")
            if abs(sum(self.quadrant_weights) - 1.0) > 1e-9:
                problems.append(f"demand.quadrant_weights must sum to 1, got {sum(self.quadrant_weights)}")
        return problems


class DemandStreams:
    """Named child generators for one wave; one stream per sampled quantity."""

    def __init__(self, seed: int, episode: int, wave: int):
        self.counts = substream(seed, "demand.count", episode, wave)
        self.locations = substream(seed, "demand.location", episode, wave)
        self.quantities = substream(seed, "demand.quantity", episode, wave)
        self.windows = substream(seed, "demand.window", episode, wave)


# Quadrant sign conventions match the warehouse layout in world.py.
_QUADRANT_SIGNS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


def sample_demand(rng: np.random.Generator, low: int = 1, high: int = 10) -> int:
    """One order quantity from the discrete uniform U{low..high}."""
    return int(rng.integers(low, high + 1))


def sample_time_window(
    rng: np.random.Generator,
    t: float,
    wave_period: float,
    open_frac: tuple[float, float] = (0.2, 0.8),
    width_frac: tuple[float, float] = (0.1, 2.0),
) -> tuple[float, float]:
    """Service window anchored at wave time t; close is open plus a random width."""
    opens = t + rng.uniform(open_frac[0] * wave_period, open_frac[1] * wave_period)
    closes = opens + rng.uniform(width_frac[0] * wave_period, width_frac[1] * wave_period)
    return opens, closes


def sample_wave(
    streams: DemandStreams,
    t: float,
    params: DemandParams,
    wave_period: float,
    start_id: int,
    capacity: int,
) -> list[Order]:
    """One wave of fresh orders at wave time t, ids start_id onwards.

    Quantities are capped at the vehicle capacity so every order is servable
    by a single (fresh) vehicle on the capacity axis.
    """
    count = int(streams.counts.integers(params.count_low, params.count_high + 1))
    if count == 0:
        return []

    weights = np.asarray(params.quadrant_weights, dtype=float)
    quadrants = streams.locations.choice(4, size=count, p=weights / weights.sum())
    offsets = streams.locations.uniform(0.0, 1.0, size=(count, 2))
    quantities = streams.quantities.integers(params.quantity_low, params.quantity_high + 1, size=count)
    open_offsets = streams.windows.uniform(
        params.open_frac_low * wave_period, params.open_frac_high * wave_period, size=count
    )
    widths = streams.windows.uniform(
        params.width_frac_low * wave_period, params.width_frac_high * wave_period, size=count
    )

    orders = []
    for i in range(count):
        sx, sy = _QUADRANT_SIGNS[int(quadrants[i])]
        location = Point(sx * float(offsets[i, 0]), sy * float(offsets[i, 1]))
        opens = t + float(open_offsets[i])
        orders.append(Order(
            id=start_id + i,
            location=location,
            quantity=min(int(quantities[i]), capacity),
            created_at=t,
            window_open=opens,
            window_close=opens + float(widths[i]),
        ))
    return orders
