"""Exhaustive policy search for tiny instances.

Every action sequence is evaluated directly from the energy and blocking
models, with no state merging or pruning. Used to check the DP solvers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .blocking import BlockingModel
from .energy import average_power
from .scenario import NetworkAction, Scenario

MAX_POLICIES = 2_000_000


@dataclass
class OracleResult:
    cost: float
    actions: List[NetworkAction]
    n_policies: int


def all_actions(scn: Scenario, n_levels: Sequence[int], phi_levels: Sequence[float]) -> List[NetworkAction]:
    per_bs = [(0, 0, 1.0)] + [(1, int(n), float(p)) for n in n_levels for p in phi_levels]
    return [
        NetworkAction(tuple(o[0] for o in c), tuple(o[1] for o in c), tuple(o[2] for o in c))
        for c in itertools.product(per_bs, repeat=scn.B)
    ]


def exhaustive_search(
    scn: Scenario,
    beta: float,
    n_levels: Sequence[int] = (),
    phi_levels: Sequence[float] = (0.0,),
    actions: Optional[Sequence] = None,
    model: Optional[BlockingModel] = None,
) -> OracleResult:
    """Minimum of avg grid power + beta * weighted blocking over all policies.

    ``actions`` overrides the action set: either one list used in every slot
    or a list of per-slot lists.
    """
    model = model or BlockingModel(scn)
    T, B = scn.T, scn.B
    if actions is None:
        per_slot = [all_actions(scn, n_levels, phi_levels)] * T
    elif actions and isinstance(actions[0], NetworkAction):
        per_slot = [list(actions)] * T
    else:
        per_slot = [list(a) for a in actions]
    count = int(np.prod([len(a) for a in per_slot], dtype=float))
    if count > MAX_POLICIES:
        raise ValueError(f"{count} policies exceed the oracle limit of {MAX_POLICIES}")
    L = scn.slot_lengths
    draw = [
        np.array([[average_power(scn.power, a.s[b], a.n[b], a.phi[b]) for b in range(B)] for a in acts])
        for acts in per_slot
    ]
    blk = [
        np.array([model.weighted_blocking(a.s, a.n, a.phi, scn.traffic[t], scn.weights[t]) for a in acts])
        for t, acts in enumerate(per_slot)
    ]
    idx = np.array(list(itertools.product(*[range(len(a)) for a in per_slot])), dtype=int).reshape(-1, T)
    energy = np.zeros((len(idx), B))
    grid_wh = np.zeros(len(idx))
    penalty = np.zeros(len(idx))
    for t in range(T):
        need = L[t] * draw[t][idx[:, t]]
        have = energy + L[t] * scn.harvest[t]
        grid_wh += np.maximum(need - have, 0.0).sum(axis=1)
        energy = np.maximum(have - need, 0.0)
        penalty += blk[t][idx[:, t]]
    cost = grid_wh / L.sum() + beta * penalty
    best = int(np.argmin(cost))
    return OracleResult(float(cost[best]), [per_slot[t][i] for t, i in enumerate(idx[best])], len(idx))
