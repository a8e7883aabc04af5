"""Finite-horizon DP solvers and the multiplier sweep.

All solvers minimise, over a T-slot horizon,

    avg grid power  +  beta * sum_t sum_b omega_tb * p_blk_tb

where the grid only covers each BS's deficit (see ``energy``). The state is
the battery vector; it starts empty.

Search runs forward from the empty battery. Successor states are bucketed on
a ``battery_quantum`` grid and each bucket keeps its cheapest arrival, with
its exact (unrounded) energy. Because the cost-to-go never increases with
stored energy, a state that has both less energy and a higher cost than
another is dropped without loss. Energy beyond everything the BS could still
consume is clipped, which is also exact. Each reported schedule is replayed
through the energy and blocking models, so costs are exact for the returned
actions; the bucketing only limits which alternatives are explored.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .blocking import BlockingModel, BlockingReport
from .energy import BatteryState, average_power, required_grid_power, step_battery
from .scenario import NetworkAction, Scenario

log = logging.getLogger(__name__)

SOLVERS = ("optimal", "two_stage", "first_stage")
_CHUNK = 1 << 21


class StateCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class DpConfig:
    beta: float = 0.0
    n_levels: Optional[Tuple[int, ...]] = None
    phi_levels: Tuple[float, ...] = (0.0,)
    battery_quantum: Optional[float] = None
    max_stage2_iters: int = 20
    state_cap: int = 2_000_000
    backend: str = "recursion"

    def resolved(self, scn: Scenario) -> "DpConfig":
        """Fill scenario-dependent defaults and check invariants."""
        N = scn.N
        levels = self.n_levels
        if levels is None:
            levels = range(N + 1) if scn.B == 1 else (0, N // 4, N // 2, 3 * N // 4, N)
        levels = tuple(sorted({int(x) for x in levels}))
        phis = tuple(sorted({float(x) for x in self.phi_levels}))
        q = self.battery_quantum
        if q is None:
            q = scn.power.p_s * float(scn.slot_lengths.min()) / 10.0
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if N not in levels or levels[0] < 0 or levels[-1] > N:
            raise ValueError(f"n_levels must lie in 0..{N} and contain {N}")
        if 0.0 not in phis or phis[0] < 0 or phis[-1] >= 1:
            raise ValueError("phi_levels must lie in [0, 1) and contain 0")
        if not q > 0:
            raise ValueError("battery_quantum must be positive")
        return replace(self, n_levels=levels, phi_levels=phis, battery_quantum=float(q))


@dataclass
class PolicySchedule:
    actions: List[NetworkAction]
    grid_power: np.ndarray  # T x B, W
    battery: np.ndarray  # (T+1) x B, Wh at slot boundaries
    blocking: List[BlockingReport]
    avg_grid_power: float
    weighted_blocking: float
    total_cost: float
    beta: float
    solver: str = ""
    converged: bool = True
    cost_history: List[float] = field(default_factory=list)

    @property
    def onoff(self) -> np.ndarray:
        return np.array([a.s for a in self.actions])

    @property
    def n(self) -> np.ndarray:
        return np.array([a.n for a in self.actions])

    @property
    def phi(self) -> np.ndarray:
        return np.array([a.phi for a in self.actions])


@dataclass(frozen=True)
class TradeoffPoint:
    beta: float
    avg_grid_power: float
    weighted_blocking: float
    schedule: Optional[PolicySchedule] = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------------------
# schedule evaluation


def assemble_schedule(
    scn: Scenario,
    actions: Sequence[NetworkAction],
    grid_power: np.ndarray,
    battery: np.ndarray,
    model: BlockingModel,
    beta: float,
    solver: str = "",
) -> PolicySchedule:
    reports = [model.report(a, scn.traffic[t], scn.weights[t]) for t, a in enumerate(actions)]
    L = scn.slot_lengths
    avg = float(np.dot(L, grid_power.sum(axis=1)) / L.sum())
    wb = float(sum(r.weighted for r in reports))
    return PolicySchedule(list(actions), grid_power, battery, reports, avg, wb, avg + beta * wb, beta, solver)


def evaluate_schedule(
    scn: Scenario,
    actions: Sequence[NetworkAction],
    beta: float,
    model: Optional[BlockingModel] = None,
    solver: str = "",
) -> PolicySchedule:
    """Replay ``actions`` from an empty battery under the deficit rule."""
    model = model or BlockingModel(scn)
    state = BatteryState.empty(scn.B)
    grid = np.zeros((scn.T, scn.B))
    batt = np.zeros((scn.T + 1, scn.B))
    for t, a in enumerate(actions):
        out = step_battery(state, a, scn.harvest[t], scn.power, scn.slot_lengths[t])
        grid[t] = out.p_g
        state = out.next
        batt[t + 1] = state.e_c
    return assemble_schedule(scn, actions, grid, batt, model, beta, solver)


def per_stage_cost(
    action: NetworkAction,
    state: BatteryState,
    t: int,
    scn: Scenario,
    cfg: DpConfig,
    model: Optional[BlockingModel] = None,
) -> float:
    model = model or BlockingModel(scn, cfg.backend)
    L = scn.slot_lengths[t]
    p_g = required_grid_power(state.e_c, scn.harvest[t], action.s, action.n, action.phi, scn.power, L)
    blk = model.weighted_blocking(action.s, action.n, action.phi, scn.traffic[t], scn.weights[t])
    return float(L * p_g.sum() / scn.total_time + cfg.beta * blk)


# ---------------------------------------------------------------------------
# action tables


def _sorted_actions(options_per_bs: Sequence[Sequence[Tuple[int, int, float]]]) -> List[NetworkAction]:
    combos = list(itertools.product(*options_per_bs))
    # tie-break order: fewer active BSs, then fewer subcarriers, then less sleep
    combos.sort(key=lambda c: (sum(o[0] for o in c), sum(o[1] for o in c), sum(o[2] for o in c if o[0])))
    return [NetworkAction(tuple(o[0] for o in c), tuple(o[1] for o in c), tuple(o[2] for o in c)) for c in combos]


def _bs_options(cfg: DpConfig) -> List[Tuple[int, int, float]]:
    return [(0, 0, 1.0)] + [(1, n, p) for n in cfg.n_levels for p in cfg.phi_levels]


def _blocking_table(
    scn: Scenario, actions: Sequence[NetworkAction], model: BlockingModel, slots: Optional[Sequence[int]] = None
) -> np.ndarray:
    """(slots x A) weighted blocking for a fixed action list."""
    slots = range(scn.T) if slots is None else list(slots)
    s = np.array([a.s for a in actions])
    phi = np.array([a.phi for a in actions])
    configs: Dict[tuple, int] = {}
    cfg_idx = np.empty(len(actions), dtype=int)
    for i, a in enumerate(actions):
        cfg_idx[i] = configs.setdefault((a.s, a.n), len(configs))
    out = np.empty((len(slots), len(actions)))
    all_off = s.sum(axis=1) == 0
    for row, t in enumerate(slots):
        rho, w = scn.traffic[t], scn.weights[t]
        p_b = np.zeros((len(configs), scn.B))
        for (cs, cn), ci in configs.items():
            if any(cs):
                p_b[ci] = np.nan_to_num(model.service(cs, cn, rho)[1])
        blk = 1.0 - (1.0 - p_b[cfg_idx]) * (1.0 - phi)
        out[row] = np.sum(np.where(s == 1, blk, 0.0) * w[None, :], axis=1)
        out[row, all_off] = w.sum() if rho.sum() > 0 else 0.0
    return out


# ---------------------------------------------------------------------------
# forward DP engine


def _bucket_keys(E: np.ndarray, quantum: float) -> np.ndarray:
    k = np.floor(E / quantum).astype(np.int64)
    if k.shape[1] == 1:
        return k[:, 0]
    radix = k.max(axis=0) + 1
    if np.prod(radix.astype(float)) < 2.0**62:
        mult = np.concatenate([[1], np.cumprod(radix[:-1])])
        return k @ mult
    return np.unique(k, axis=0, return_inverse=True)[1].ravel()


def _reduce(E, cost, parent, action, quantum):
    keys = _bucket_keys(E, quantum)
    order = np.lexsort((parent, action, cost, keys))
    ks = keys[order]
    first = np.ones(len(ks), dtype=bool)
    first[1:] = ks[1:] != ks[:-1]
    sel = order[first]
    return E[sel], cost[sel], parent[sel], action[sel]


def _prune_dominated(E, cost, parent, action):
    """Drop states with no more energy (every BS) and no lower cost than another."""
    if len(cost) <= 1:
        return E, cost, parent, action
    if E.shape[1] == 1:
        order = np.lexsort((cost, -E[:, 0]))
        c = cost[order]
        best_above = np.minimum.accumulate(np.concatenate([[np.inf], c[:-1]]))
        keep = order[c < best_above]
    else:
        # sweep in cost order; a candidate survives unless an earlier survivor
        # holds at least as much energy at every BS
        order = np.lexsort((-E.sum(axis=1), cost))
        Es = E[order]
        kept = np.empty((E.shape[1], len(order)))
        kept_pos: List[np.ndarray] = []
        n_kept = 0
        for i0 in range(0, len(order), 256):
            pos = np.arange(i0, min(len(order), i0 + 256))
            blk = Es[pos]
            dom = np.zeros((len(pos), n_kept), dtype=bool)
            if n_kept:
                dom[:] = True
                for b in range(E.shape[1]):
                    dom &= kept[b, None, :n_kept] >= blk[:, b : b + 1]
            pos = pos[~dom.any(axis=1)]
            # survivors of one block still screen each other
            cand = Es[pos]
            ge = np.all(cand[None, :, :] >= cand[:, None, :], axis=2) & np.tri(len(pos), k=-1, dtype=bool)
            pos = pos[~ge.any(axis=1)]
            kept[:, n_kept : n_kept + len(pos)] = Es[pos].T
            n_kept += len(pos)
            kept_pos.append(pos)
        keep = order[np.concatenate(kept_pos)]
    keep = np.sort(keep)
    return E[keep], cost[keep], parent[keep], action[keep]


@dataclass
class _DpResult:
    choice: List[int]
    cost: float
    states_per_stage: List[int]


def _forward_dp(
    draws: Sequence[np.ndarray],
    extras: Sequence[np.ndarray],
    harvest: np.ndarray,
    L: np.ndarray,
    quantum: float,
    state_cap: int,
) -> _DpResult:
    """Minimum-cost action sequence from an empty battery.

    ``draws[t]`` is (A_t x B) average power per action and BS, ``extras[t]``
    the non-grid cost of each action. Stage grid cost is the grid energy
    divided by the horizon length.
    """
    T, B = harvest.shape
    norm = float(L.sum())
    max_draw = np.array([d.max(axis=0) for d in draws])  # T x B
    need = np.concatenate([np.cumsum((L[:, None] * max_draw)[::-1], axis=0)[::-1], np.zeros((1, B))])

    E = np.zeros((1, B))
    acc = np.zeros(1)
    trail: List[Tuple[np.ndarray, np.ndarray]] = []
    sizes = []
    for t in range(T):
        draw, extra = draws[t], extras[t]
        A = draw.shape[0]
        avail = E + L[t] * harvest[t]  # S x B
        per = max(1, _CHUNK // max(1, len(E) * B))
        best = None
        for a0 in range(0, A, per):
            a1 = min(A, a0 + per)
            cons = L[t] * draw[a0:a1]  # C x B
            deficit = cons[None, :, :] - avail[:, None, :]
            grid_wh = np.maximum(deficit, 0.0).sum(axis=2)
            nxt = np.minimum(np.maximum(-deficit, 0.0), need[t + 1])
            cost = acc[:, None] + grid_wh / norm + extra[None, a0:a1]
            S, C = cost.shape
            cand = (
                nxt.reshape(S * C, B),
                cost.ravel(),
                np.repeat(np.arange(S), C),
                np.tile(np.arange(a0, a1), S),
            )
            if best is not None:
                cand = tuple(np.concatenate([x, y]) for x, y in zip(best, cand))
            best = _reduce(*cand, quantum)
        E, acc, parent, action = _prune_dominated(*best)
        if len(E) > state_cap:
            raise StateCapExceeded(
                f"{len(E)} battery states at slot {t} exceed state_cap={state_cap}; "
                "use the two_stage solver or a coarser battery_quantum"
            )
        trail.append((parent, action))
        sizes.append(len(E))
    i = int(np.argmin(acc))
    total = float(acc[i])
    choice = []
    for parent, action in reversed(trail):
        choice.append(int(action[i]))
        i = int(parent[i])
    choice.reverse()
    return _DpResult(choice, total, sizes)


def _solve_joint(
    scn: Scenario,
    cfg: DpConfig,
    actions: List[NetworkAction],
    model: BlockingModel,
    solver: str,
) -> PolicySchedule:
    draw = average_power(
        scn.power,
        np.array([a.s for a in actions]),
        np.array([a.n for a in actions]),
        np.array([a.phi for a in actions]),
    )
    blk = _blocking_table(scn, actions, model)
    res = _forward_dp(
        [draw] * scn.T,
        [cfg.beta * blk[t] for t in range(scn.T)],
        scn.harvest,
        scn.slot_lengths,
        cfg.battery_quantum,
        cfg.state_cap,
    )
    sched = evaluate_schedule(scn, [actions[c] for c in res.choice], cfg.beta, model, solver)
    if abs(sched.total_cost - res.cost) > 1e-6 * max(1.0, abs(res.cost)):
        log.warning("DP cost %.9g differs from replayed cost %.9g", res.cost, sched.total_cost)
    sched.cost_history = [sched.total_cost]
    return sched


def _model_for(scn: Scenario, cfg: DpConfig, model: Optional[BlockingModel]) -> BlockingModel:
    return model if model is not None else BlockingModel(scn, cfg.backend)


def optimal_dp(scn: Scenario, cfg: DpConfig, model: Optional[BlockingModel] = None) -> PolicySchedule:
    """Joint on/off, subcarrier and sleep-ratio DP over every BS at once."""
    cfg = cfg.resolved(scn)
    actions = _sorted_actions([_bs_options(cfg)] * scn.B)
    return _solve_joint(scn, cfg, actions, _model_for(scn, cfg, model), "optimal")


def first_stage_dp(scn: Scenario, cfg: DpConfig, model: Optional[BlockingModel] = None) -> PolicySchedule:
    """On/off DP with every active BS at all subcarriers and no sleep.

    The optimal on/off schedule is ``result.onoff``.
    """
    cfg = cfg.resolved(scn)
    actions = _sorted_actions([[(0, 0, 1.0), (1, scn.N, 0.0)]] * scn.B)
    return _solve_joint(scn, cfg, actions, _model_for(scn, cfg, model), "first_stage")


def _per_bs_solve(
    scn: Scenario,
    cfg: DpConfig,
    current: List[NetworkAction],
    b: int,
    model: BlockingModel,
) -> List[NetworkAction]:
    draws, extras, slot_actions = [], [], []
    for t, a in enumerate(current):
        if a.s[b]:
            opts = []
            for n in cfg.n_levels:
                for p in cfg.phi_levels:
                    nn, pp = list(a.n), list(a.phi)
                    nn[b], pp[b] = n, p
                    opts.append(NetworkAction(a.s, tuple(nn), tuple(pp)))
        else:
            opts = [a]
        draw = average_power(
            scn.power, np.array([o.s[b] for o in opts]), np.array([o.n[b] for o in opts]), np.array([o.phi[b] for o in opts])
        )[:, None]
        blk = _blocking_table(scn, opts, model, [t])[0]
        draws.append(draw)
        extras.append(cfg.beta * blk)
        slot_actions.append(opts)
    res = _forward_dp(draws, extras, scn.harvest[:, [b]], scn.slot_lengths, cfg.battery_quantum, cfg.state_cap)
    return [slot_actions[t][c] for t, c in enumerate(res.choice)]


def second_stage_iterate(
    scn: Scenario,
    cfg: DpConfig,
    s_star,
    model: Optional[BlockingModel] = None,
) -> PolicySchedule:
    """Round-robin per-BS subcarrier/sleep DPs on a fixed on/off schedule.

    A per-BS result replaces the incumbent only when it strictly lowers the
    global objective, so the cost history is non-increasing. Stops after a
    round without changes, on a repeated schedule, or after
    ``max_stage2_iters`` rounds (then ``converged`` is False).
    """
    cfg = cfg.resolved(scn)
    model = _model_for(scn, cfg, model)
    s_star = np.asarray(s_star, dtype=int).reshape(scn.T, scn.B)
    current = [NetworkAction.full(tuple(s_star[t]), scn.N) for t in range(scn.T)]
    best = evaluate_schedule(scn, current, cfg.beta, model, "two_stage")
    history = [best.total_cost]
    seen = {_fingerprint(current)}
    converged = False
    for _ in range(cfg.max_stage2_iters):
        changed = False
        for b in range(scn.B):
            if not s_star[:, b].any():
                continue
            cand = _per_bs_solve(scn, cfg, current, b, model)
            if cand == current:
                continue
            sched = evaluate_schedule(scn, cand, cfg.beta, model, "two_stage")
            if sched.total_cost < best.total_cost - 1e-12 * max(1.0, abs(best.total_cost)):
                current, best, changed = cand, sched, True
            history.append(best.total_cost)
        fp = _fingerprint(current)
        if not changed:
            converged = True
            break
        if fp in seen:
            converged = True
            break
        seen.add(fp)
    best.converged = converged
    best.cost_history = history
    return best


def _fingerprint(actions: Sequence[NetworkAction]) -> tuple:
    return tuple((a.n, a.phi) for a in actions)


def two_stage(scn: Scenario, cfg: DpConfig, model: Optional[BlockingModel] = None) -> PolicySchedule:
    cfg = cfg.resolved(scn)
    model = _model_for(scn, cfg, model)
    first = first_stage_dp(scn, cfg, model)
    return second_stage_iterate(scn, cfg, first.onoff, model)


def solve(scn: Scenario, cfg: DpConfig, solver: str, model: Optional[BlockingModel] = None) -> PolicySchedule:
    if solver == "optimal":
        return optimal_dp(scn, cfg, model)
    if solver == "two_stage":
        return two_stage(scn, cfg, model)
    if solver == "first_stage":
        return first_stage_dp(scn, cfg, model)
    raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")


# ---------------------------------------------------------------------------
# tradeoff frontier


def pareto_filter(points: Sequence[TradeoffPoint]) -> List[TradeoffPoint]:
    """Non-dominated points sorted by blocking ascending (power then falls)."""
    pts = sorted(points, key=lambda p: (p.weighted_blocking, p.avg_grid_power, p.beta))
    out: List[TradeoffPoint] = []
    for p in pts:
        if out and p.avg_grid_power >= out[-1].avg_grid_power:
            continue
        out.append(p)
    return out


def tradeoff_sweep(
    scn: Scenario,
    cfg_template: DpConfig,
    betas: Sequence[float],
    solver: str = "two_stage",
    model: Optional[BlockingModel] = None,
    keep_all: bool = False,
) -> List[TradeoffPoint]:
    """Solve once per multiplier and return the Pareto frontier."""
    betas = list(betas)
    if not betas:
        raise ValueError("need at least one beta")
    if any(b < 0 for b in betas):
        raise ValueError("betas must be non-negative")
    cfg = cfg_template.resolved(scn)
    model = _model_for(scn, cfg, model)
    pts = []
    for beta in betas:
        sched = solve(scn, replace(cfg, beta=float(beta)), solver, model)
        pts.append(TradeoffPoint(float(beta), sched.avg_grid_power, sched.weighted_blocking, sched))
    return pts if keep_all else pareto_filter(pts)


def frontier_power_at(frontier: Sequence[TradeoffPoint], p_target: float) -> Optional[TradeoffPoint]:
    """Cheapest frontier point whose blocking does not exceed ``p_target``."""
    ok = [p for p in frontier if p.weighted_blocking <= p_target]
    return min(ok, key=lambda p: p.avg_grid_power) if ok else None


def frontier_blocking_at(frontier: Sequence[TradeoffPoint], power: float) -> Optional[float]:
    """Blocking of the frontier's lower envelope at ``power`` (linear between points).

    Returns None outside the frontier's power range.
    """
    pts = sorted(frontier, key=lambda p: p.avg_grid_power)
    xs = np.array([p.avg_grid_power for p in pts])
    ys = np.array([p.weighted_blocking for p in pts])
    if not len(xs) or power < xs[0] - 1e-9 or power > xs[-1] + 1e-9:
        return None
    return float(np.interp(power, xs, ys))
