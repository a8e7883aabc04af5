"""Baseline policies: on/off rules, subcarrier rules, and the grid-budget rule.

A heuristic runs slot by slot. The on/off rule picks the active set, the
subcarrier rule picks n for every active BS, and the energy rule spends
battery and harvest first, then grid energy up to a per-BS budget for the
whole horizon. Whatever demand is still uncovered is met by opportunistic
sleep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .blocking import BlockingModel
from .energy import ENERGY_TOL, sleep_ratio_from_input
from .optimizer import PolicySchedule, assemble_schedule
from .scenario import NetworkAction, PowerConstants, Scenario, service_groups

ONOFF_POLICIES = ("non_sleep", "threshold")
N_POLICIES = ("max_util", "traffic_aware", "traffic_energy_aware")


def _ceil(x: float) -> int:
    # guard against 0.18 * 5 * 600 landing at 540.0000000000001
    return int(math.ceil(x - 1e-9))


@dataclass(frozen=True)
class ThresholdPolicy:
    """Active pattern per traffic band: band i is (theta_{i-1}, theta_i], theta_0 = 0."""

    thresholds: Tuple[float, ...]
    patterns: Tuple[Tuple[int, ...], ...]
    b_min: int = 1

    def __post_init__(self):
        th = tuple(float(x) for x in self.thresholds)
        pats = tuple(tuple(int(v) for v in p) for p in self.patterns)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "patterns", pats)
        if len(th) != len(pats):
            raise ValueError("need one pattern per threshold")
        if any(b <= a for a, b in zip(th, th[1:])) or (th and th[0] <= 0):
            raise ValueError("thresholds must be positive and strictly ascending")
        for p in pats:
            if sum(p) < self.b_min:
                raise ValueError(f"pattern {p} has fewer than b_min={self.b_min} active BSs")

    @classmethod
    def from_scenario(cls, scn: Scenario) -> "ThresholdPolicy":
        h = scn.heuristics
        return cls(h.thresholds, h.patterns, h.b_min)


@dataclass(frozen=True)
class HeuristicConfig:
    eta1: float = 0.18
    eta2: float = 0.26
    grid_budget_per_bs: float = math.inf  # W averaged over the horizon

    def __post_init__(self):
        if not (self.eta1 > 0 and self.eta2 > 0):
            raise ValueError("eta1 and eta2 must be positive")
        if not self.grid_budget_per_bs >= 0:
            raise ValueError("grid budget must be >= 0")


def threshold_onoff(rho_total_t: float, policy: ThresholdPolicy, B: int) -> Tuple[int, ...]:
    for theta, pattern in zip(policy.thresholds, policy.patterns):
        if rho_total_t <= theta:
            return pattern
    return (1,) * B


def traffic_aware_n(rho_t: float, eta1: float, N: int) -> int:
    """min(N, ceil(eta1 * rho * N))."""
    return min(N, _ceil(eta1 * rho_t * N))


def traffic_energy_aware_n(
    rho_t: float,
    eta2: float,
    e_b: float,
    e_g: float,
    p_h: float,
    L: float,
    remaining: float,
    pc: PowerConstants,
    N: int,
) -> int:
    """Subcarriers in proportion to traffic and to the energy left per remaining hour.

    ``remaining`` is the total length of this and all later slots (hours).
    """
    if remaining <= 0:
        return 0
    x = eta2 * rho_t * (e_b + e_g + L * p_h) / (remaining * pc.full_power) * N
    if not math.isfinite(x):
        return N
    return min(N, _ceil(x))


@dataclass(frozen=True)
class SlotEnergy:
    p_g: float
    phi: float
    consumption: float  # Wh
    e_b: float  # next battery, Wh
    e_g: float  # next grid budget, Wh
    forced_sleep: bool = False


def heuristic_slot_energy(e_b: float, e_g: float, p_h: float, n: int, pc: PowerConstants, L: float) -> SlotEnergy:
    """Spend battery and harvest, then grid up to the remaining budget.

    If even the sleep power cannot be sustained, the BS sleeps for the whole
    slot (phi = 1), draws no grid power and consumes at most what battery and
    harvest hold.
    """
    p_bs = float(pc.active_power(n))
    own = e_b / L + p_h
    p_g = min(e_g / L, max(0.0, p_bs - own))
    p_in = min(p_bs, own + p_g)
    if p_in < pc.p_s - ENERGY_TOL:
        cons = min(pc.p_s * L, e_b + L * p_h)
        return SlotEnergy(0.0, 1.0, cons, max(0.0, e_b + L * p_h - cons), e_g, True)
    phi = sleep_ratio_from_input(p_bs, max(p_in, pc.p_s), pc.p_s)
    cons = L * p_in
    nxt = e_b + L * (p_h + p_g) - cons
    nxt = 0.0 if p_g > 0 or nxt < ENERGY_TOL else nxt
    return SlotEnergy(p_g, phi, cons, nxt, max(0.0, e_g - L * p_g))


def _served_rho(scn: Scenario, s: Sequence[int], t: int) -> np.ndarray:
    """Total intensity in each active BS's current coverage."""
    rho = np.zeros(scn.B)
    if any(s):
        for g in service_groups(scn, s):
            rho[g.bs] += scn.traffic[t][list(g.regions)].sum()
    return rho


def run_heuristic(
    scn: Scenario,
    onoff_policy: str = "non_sleep",
    n_policy: str = "max_util",
    hcfg: Optional[HeuristicConfig] = None,
    threshold: Optional[ThresholdPolicy] = None,
    model: Optional[BlockingModel] = None,
) -> PolicySchedule:
    if onoff_policy not in ONOFF_POLICIES:
        raise ValueError(f"unknown on/off policy {onoff_policy!r}; choose from {ONOFF_POLICIES}")
    if n_policy not in N_POLICIES:
        raise ValueError(f"unknown subcarrier policy {n_policy!r}; choose from {N_POLICIES}")
    if hcfg is None:
        hcfg = HeuristicConfig(scn.heuristics.eta1, scn.heuristics.eta2)
    if onoff_policy == "threshold" and threshold is None:
        threshold = ThresholdPolicy.from_scenario(scn)
    model = model or BlockingModel(scn)
    T, B, N, pc, L = scn.T, scn.B, scn.N, scn.power, scn.slot_lengths
    remaining = np.cumsum(L[::-1])[::-1]

    e_b = np.zeros(B)
    e_g = np.full(B, hcfg.grid_budget_per_bs * L.sum())
    grid = np.zeros((T, B))
    batt = np.zeros((T + 1, B))
    actions: List[NetworkAction] = []
    for t in range(T):
        if onoff_policy == "threshold":
            s = threshold_onoff(float(scn.traffic[t].sum()), threshold, B)
        else:
            s = (1,) * B
        rho_b = _served_rho(scn, s, t)
        n = [0] * B
        phi = [1.0] * B
        for b in range(B):
            if not s[b]:
                continue
            if n_policy == "max_util":
                n[b] = N
            elif n_policy == "traffic_aware":
                n[b] = traffic_aware_n(rho_b[b], hcfg.eta1, N)
            else:
                n[b] = traffic_energy_aware_n(
                    rho_b[b], hcfg.eta2, e_b[b], e_g[b], scn.harvest[t, b], L[t], remaining[t], pc, N
                )
            out = heuristic_slot_energy(e_b[b], e_g[b], scn.harvest[t, b], n[b], pc, L[t])
            grid[t, b], phi[b], e_b[b], e_g[b] = out.p_g, out.phi, out.e_b, out.e_g
        for b in range(B):
            if not s[b]:
                e_b[b] += L[t] * scn.harvest[t, b]
        batt[t + 1] = e_b
        actions.append(NetworkAction.build(s, n, phi))
    return assemble_schedule(scn, actions, grid, batt, model, 0.0, f"{onoff_policy}+{n_policy}")


@dataclass(frozen=True)
class HeuristicPoint:
    budget: float
    avg_grid_power: float
    weighted_blocking: float
    schedule: Optional[PolicySchedule] = field(default=None, repr=False, compare=False)


def budget_sweep(
    scn: Scenario,
    budgets: Sequence[float],
    onoff_policy: str = "non_sleep",
    n_policy: str = "max_util",
    eta1: Optional[float] = None,
    eta2: Optional[float] = None,
    model: Optional[BlockingModel] = None,
) -> List[HeuristicPoint]:
    """One heuristic run per per-BS grid budget (W)."""
    model = model or BlockingModel(scn)
    eta1 = scn.heuristics.eta1 if eta1 is None else eta1
    eta2 = scn.heuristics.eta2 if eta2 is None else eta2
    pts = []
    for budget in budgets:
        sched = run_heuristic(scn, onoff_policy, n_policy, HeuristicConfig(eta1, eta2, float(budget)), model=model)
        pts.append(HeuristicPoint(float(budget), sched.avg_grid_power, sched.weighted_blocking, sched))
    return pts
