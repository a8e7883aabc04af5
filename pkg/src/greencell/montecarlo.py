"""Discrete-event oracles for the analytic blocking model.

``simulate_loss_system`` runs a multi-class loss system with Poisson arrivals
and admission rule ``z + phi_bar_k < 1``; ``evaluate_policy_mc`` runs one such
system per slot and active BS to estimate a schedule's weighted blocking.

Confidence intervals use batch means: the post-warmup arrivals are split into
equal batches and the ratio estimator's variance is taken across batches.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .blocking import BlockingModel
from .optimizer import PolicySchedule
from .scenario import Scenario, service_groups

RNG_ALGORITHM = "numpy.random.PCG64 (SeedSequence-spawned streams)"
HOLDING = ("exponential", "deterministic")


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    arrivals_target: int = 1_000_000
    warmup_fraction: float = 0.1
    batches: int = 20
    holding: str = "exponential"
    confidence: float = 0.95

    def __post_init__(self):
        if self.arrivals_target <= 0:
            raise ValueError("arrivals_target must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.batches < 2:
            raise ValueError("need at least two batches")
        if self.holding not in HOLDING:
            raise ValueError(f"holding must be one of {HOLDING}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class EmpiricalBlocking:
    offered: np.ndarray  # per class, post-warmup arrivals
    blocked: np.ndarray
    estimate: np.ndarray  # 0 where nothing was offered
    std_error: np.ndarray
    half_width: np.ndarray  # CI half-width at ``confidence``
    confidence: float = 0.95
    rng: str = RNG_ALGORITHM

    def contains(self, value, sigmas: Optional[float] = None) -> np.ndarray:
        """Whether ``value`` lies inside the CI (or within ``sigmas`` standard errors)."""
        width = self.half_width if sigmas is None else sigmas * self.std_error
        return np.abs(np.asarray(value) - self.estimate) <= width


def _ratio_stats(blocked_b: np.ndarray, offered_b: np.ndarray, confidence: float):
    """Pooled ratio and its batch-means standard error, per class.

    Inputs are (batches x K). A binomial standard error with one added
    success keeps the error positive when no blocking was observed.
    """
    nb = blocked_b.shape[0]
    blocked = blocked_b.sum(axis=0)
    offered = offered_b.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(offered > 0, blocked / np.maximum(offered, 1), 0.0)
        mean_off = offered / nb
        resid = blocked_b - p[None, :] * offered_b
        var = (resid**2).sum(axis=0) / ((nb - 1) * nb * np.maximum(mean_off, 1e-300) ** 2)
        p_floor = (blocked + 1.0) / (offered + 2.0)
        floor = p_floor * (1.0 - p_floor) / np.maximum(offered, 1)
    se = np.where(offered > 0, np.sqrt(np.maximum(var, floor)), 0.0)
    q = stats.t.ppf(0.5 + confidence / 2.0, nb - 1)
    return offered, blocked, p, se, q * se


def _run(phi, lam, mean_hold, sleep, n_arrivals, warmup, batches, holding, rng):
    """Event loop; returns (batches x K) blocked and offered counts."""
    K = len(phi)
    total = lam.sum()
    offered_b = np.zeros((batches, K), dtype=np.int64)
    blocked_b = np.zeros((batches, K), dtype=np.int64)
    if total <= 0 or n_arrivals <= warmup:
        return blocked_b, offered_b
    gaps = rng.exponential(1.0 / total, n_arrivals)
    times = np.cumsum(gaps)
    cls = rng.choice(K, size=n_arrivals, p=lam / total)
    if holding == "exponential":
        hold = rng.exponential(1.0, n_arrivals) * mean_hold[cls]
    else:
        hold = mean_hold[cls].astype(float)
    asleep = rng.random(n_arrivals) < sleep if sleep > 0 else np.zeros(n_arrivals, dtype=bool)
    batch_of = np.minimum((np.arange(n_arrivals) - warmup) * batches // (n_arrivals - warmup), batches - 1)

    phi_l = [float(x) for x in phi]
    users = [0] * K
    departures: List[tuple] = []
    pop, push = heapq.heappop, heapq.heappush
    for i, (t, k, h, zz) in enumerate(zip(times.tolist(), cls.tolist(), hold.tolist(), asleep.tolist())):
        while departures and departures[0][0] <= t:
            users[pop(departures)[1]] -= 1
        counted = i >= warmup
        if counted:
            offered_b[batch_of[i], k] += 1
        if zz:
            if counted:
                blocked_b[batch_of[i], k] += 1
            continue
        z = 0.0
        for j in range(K):
            if users[j]:
                z += users[j] * phi_l[j]
        if z + phi_l[k] < 1.0:
            users[k] += 1
            push(departures, (t + h, k))
        elif counted:
            blocked_b[batch_of[i], k] += 1
    return blocked_b, offered_b


def simulate_loss_system(
    phi_bar: Sequence[float],
    rho: Sequence[float],
    cfg: SimConfig = SimConfig(),
    mu: Optional[Sequence[float]] = None,
    sleep_ratio: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> EmpiricalBlocking:
    """Simulate one loss system; classes are the flattened entries of ``phi_bar``.

    Class k arrives at rate rho_k * mu_k and holds for mean 1/mu_k. With
    ``sleep_ratio`` > 0 each arrival is independently blocked with that
    probability before admission is tried (opportunistic sleep).
    """
    phi = np.asarray(phi_bar, dtype=float).ravel()
    rho = np.asarray(rho, dtype=float).ravel()
    mu = np.ones_like(rho) if mu is None else np.broadcast_to(np.asarray(mu, dtype=float), rho.shape)
    if phi.shape != rho.shape:
        raise ValueError("phi_bar and rho must have the same shape")
    if (rho < 0).any() or (mu <= 0).any():
        raise ValueError("need rho >= 0 and mu > 0")
    if not 0.0 <= sleep_ratio <= 1.0:
        raise ValueError("sleep_ratio must lie in [0, 1]")
    rng = rng if rng is not None else np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    lam = rho * mu
    # classes that can never be admitted still count as offered and blocked
    phi = np.where(np.isfinite(phi), phi, 2.0)
    n = int(cfg.arrivals_target)
    warmup = int(cfg.warmup_fraction * n)
    blocked_b, offered_b = _run(phi, lam, 1.0 / mu, sleep_ratio, n, warmup, cfg.batches, cfg.holding, rng)
    offered, blocked, p, se, hw = _ratio_stats(blocked_b, offered_b, cfg.confidence)
    return EmpiricalBlocking(offered, blocked, p, se, hw, cfg.confidence)


@dataclass
class PolicyMcResult:
    avg_grid_power: float
    grid_power: np.ndarray  # T x B
    weighted_blocking: float
    weighted_std_error: float
    weighted_half_width: float
    analytic_weighted_blocking: float
    p_blk_b: np.ndarray  # T x B empirical, NaN for sleeping BSs
    std_error_b: np.ndarray  # T x B
    analytic_p_blk_b: np.ndarray  # T x B
    confidence: float = 0.95
    rng: str = RNG_ALGORITHM
    systems: List[EmpiricalBlocking] = field(default_factory=list, repr=False)

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.weighted_blocking - self.analytic_weighted_blocking) <= sigmas * self.weighted_std_error


def evaluate_policy_mc(
    scn: Scenario,
    schedule: PolicySchedule,
    cfg: SimConfig = SimConfig(),
    mu: Optional[Sequence[float]] = None,
    model: Optional[BlockingModel] = None,
) -> PolicyMcResult:
    """Estimate a schedule's weighted blocking by simulating every slot.

    Each slot's loss systems start empty and run to stationarity
    independently; ``cfg.arrivals_target`` arrivals are split evenly over
    the (slot, active BS) systems that carry traffic. Opportunistic sleep
    blocks each arrival with probability phi. Energy is deterministic given
    the schedule, so the grid draw is taken from the schedule's own ledger
    (the heuristics' budget rule cannot be rebuilt from the actions alone).
    """
    model = model or BlockingModel(scn)
    mu_k = np.array([c.mu for c in scn.classes]) if mu is None else np.asarray(mu, dtype=float)
    T, B = scn.T, scn.B
    if len(schedule.actions) != T:
        raise ValueError(f"schedule has {len(schedule.actions)} slots, scenario has {T}")

    jobs = []
    for t, a in enumerate(schedule.actions):
        if not any(a.s):
            continue
        tab = model.table(a.s, a.n)
        groups = service_groups(scn, a.s)
        for b in range(B):
            if not a.s[b]:
                continue
            mine = [g for g in groups if g.bs == b]
            rho = np.concatenate([scn.traffic[t][list(g.regions)].sum(axis=0) for g in mine])
            if rho.sum() > 0:
                phi = np.concatenate([tab.phi_bar_g[list(tab.group_regions).index(g.regions)] for g in mine])
                jobs.append((t, b, phi, rho))
    streams = np.random.SeedSequence(cfg.seed).spawn(max(1, len(jobs)))
    per_job = max(1, cfg.arrivals_target // max(1, len(jobs)))
    sub_cfg = SimConfig(cfg.seed, per_job, cfg.warmup_fraction, cfg.batches, cfg.holding, cfg.confidence)

    p_emp = np.full((T, B), np.nan)
    se = np.full((T, B), np.nan)
    systems = []
    for (t, b, phi, rho), ss in zip(jobs, streams):
        a = schedule.actions[t]
        mus = np.tile(mu_k, len(rho) // len(mu_k))
        res = simulate_loss_system(phi, rho, sub_cfg, mus, a.phi[b], np.random.Generator(np.random.PCG64(ss)))
        systems.append(res)
        w = rho / rho.sum()
        p_emp[t, b] = float(np.dot(w, res.estimate))
        se[t, b] = float(np.sqrt(np.dot(w**2, res.std_error**2)))

    analytic = np.full((T, B), np.nan)
    wb = 0.0
    var = 0.0
    for t, a in enumerate(schedule.actions):
        rep = model.report(a, scn.traffic[t], scn.weights[t])
        analytic[t] = rep.p_blk_b
        w = scn.weights[t]
        if not any(a.s):
            wb += float(w.sum()) if scn.traffic[t].sum() > 0 else 0.0
            continue
        for b in range(B):
            if not a.s[b]:
                continue
            if np.isnan(p_emp[t, b]):
                # no traffic in coverage: only sleep can block, and nothing arrives
                p_emp[t, b], se[t, b] = analytic[t, b], 0.0
            wb += w[b] * p_emp[t, b]
            var += (w[b] * se[t, b]) ** 2

    grid = np.array(schedule.grid_power, dtype=float)
    L = scn.slot_lengths
    avg = float(np.dot(L, grid.sum(axis=1)) / L.sum())
    sd = math.sqrt(var)
    q = stats.norm.ppf(0.5 + cfg.confidence / 2.0)
    return PolicyMcResult(avg, grid, wb, sd, q * sd, schedule.weighted_blocking, p_emp, se, analytic, cfg.confidence, systems=systems)
