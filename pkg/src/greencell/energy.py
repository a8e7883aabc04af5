"""Battery dynamics, opportunistic sleep, and the grid-deficit rule.

Batteries have unlimited capacity. Within a slot the battery can deliver all
of its stored energy; the grid only covers whatever battery plus harvest
cannot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import NetworkAction, PowerConstants

ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class BatteryState:
    e_c: np.ndarray  # Wh per BS

    def __post_init__(self):
        e = np.array(self.e_c, dtype=float)
        if not np.isfinite(e).all() or (e < 0).any():
            raise ValueError("battery energy must be finite and >= 0")
        e.setflags(write=False)
        object.__setattr__(self, "e_c", e)

    @classmethod
    def empty(cls, B: int) -> "BatteryState":
        return cls(np.zeros(B))


@dataclass(frozen=True)
class SlotEnergyOutcome:
    p_g: np.ndarray  # W per BS
    p_in: np.ndarray  # W per BS
    consumption: np.ndarray  # Wh per BS
    next: BatteryState


def sleep_ratio_from_input(p_bs: float, p_in: float, p_s: float) -> float:
    """Fraction of the slot an active BS must sleep to live on ``p_in`` watts."""
    if p_bs <= p_s:
        raise ValueError("active power must exceed sleep power")
    if p_in < p_s:
        raise ValueError(f"input power {p_in} W cannot sustain sleep mode ({p_s} W)")
    if p_in >= p_bs:
        return 0.0
    return (p_bs - p_in) / (p_bs - p_s)


def average_power(pc: PowerConstants, s, n, phi):
    """Slot-average draw in watts: (1-phi) P_BS(n) + phi P_S when on, else 0."""
    s = np.asarray(s)
    n = np.asarray(n)
    phi = np.asarray(phi, dtype=float)
    on = (1.0 - phi) * pc.active_power(n) + phi * pc.p_s
    return np.where(s == 1, on, 0.0)


def required_grid_power(e_c, p_h, s, n, phi, pc: PowerConstants, L: float):
    """Grid draw that exactly covers the deficit left by battery and harvest."""
    draw = average_power(pc, s, n, phi)
    return np.maximum(0.0, draw - np.asarray(e_c, dtype=float) / L - np.asarray(p_h, dtype=float))


def step_battery(
    state: BatteryState, action: NetworkAction, p_h_slot, pc: PowerConstants, L: float
) -> SlotEnergyOutcome:
    p_h = np.asarray(p_h_slot, dtype=float)
    draw = average_power(pc, action.s, action.n, action.phi)
    p_g = required_grid_power(state.e_c, p_h, action.s, action.n, action.phi, pc, L)
    consumption = L * draw
    nxt = state.e_c + L * (p_h + p_g) - consumption
    # the grid fills the deficit exactly; only rounding can push below zero
    nxt = np.where(p_g > 0, 0.0, np.maximum(nxt, 0.0))
    return SlotEnergyOutcome(p_g, draw, consumption, BatteryState(nxt))
