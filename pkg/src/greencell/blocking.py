"""Erlang-approximation blocking probabilities.

Users of class k in a service area are given the area-averaged normalised
bandwidth requirement ``phi_bar`` (rate requirement over achievable rate), so
each BS becomes a multi-class loss system with product-form stationary law
truncated to ``sum(U * phi_bar) < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .energy import sleep_ratio_from_input
from .scenario import NetworkAction, Scenario, service_groups

DEFAULT_GRID = 6000
DEFAULT_STATE_CAP = 5_000_000
BACKENDS = ("enumerate", "recursion")


class StateSpaceTooLarge(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# rates and bandwidth requirements


def _sinr(scn: Scenario, gains: np.ndarray, serving: int, s: Sequence[int], n: Sequence[int]) -> np.ndarray:
    pc = scn.power
    noise = scn.channel.noise_power(pc.w0)
    interf = np.zeros(gains.shape[0])
    for b in range(scn.B):
        if b != serving and s[b] and n[b] > 0:
            interf += n[b] / pc.n_total * pc.p_t * gains[:, b]
    return pc.p_t * gains[:, serving] / (noise + interf)


def rate_at(pos, serving: int, action: NetworkAction, scn: Scenario) -> float:
    """Achievable rate (bits/s) at ``pos`` when served by BS ``serving``."""
    if not action.s[serving]:
        raise ValueError(f"serving BS {serving} is not active")
    gains = scn.gains_at(np.asarray(pos, dtype=float)[None, :])
    sinr = _sinr(scn, gains, serving, action.s, action.n)[0]
    return action.n[serving] * scn.power.w0 / scn.N * math.log2(1.0 + sinr)


def _area_rates(scn: Scenario, regions: Sequence[int], serving: int, s, n) -> Tuple[np.ndarray, np.ndarray]:
    gains = np.concatenate([scn.region_gains[m] for m in regions])
    w = np.concatenate([np.full(scn.regions[m].n_samples, scn.regions[m].point_weight) for m in regions])
    rate = n[serving] * scn.power.w0 / scn.N * np.log2(1.0 + _sinr(scn, gains, serving, s, n))
    return rate, w


def mean_bandwidth_req(region: int, cls: int, action: NetworkAction, scn: Scenario) -> float:
    """Area-average of R_k / r(a) over one region, served per the association."""
    serving = service_groups(scn, action.s)
    bs = next(g.bs for g in serving if region in g.regions)
    if action.n[bs] == 0:
        return math.inf
    rate, w = _area_rates(scn, [region], bs, action.s, action.n)
    if (rate <= 0).any():
        return math.inf
    return float(np.sum(w * scn.classes[cls].rate_req / rate) / np.sum(w))


@dataclass(frozen=True, eq=False)
class BandwidthRequirementTable:
    """Mean normalised bandwidth requirement per service group and class."""

    s: Tuple[int, ...]
    n: Tuple[int, ...]
    group_bs: np.ndarray  # G
    group_regions: Tuple[Tuple[int, ...], ...]
    phi_bar_g: np.ndarray  # G x K
    phi_bar: np.ndarray  # M x K, each region carries its group's value

    def groups_of(self, bs: int):
        return [g for g, b in enumerate(self.group_bs) if b == bs]


def bandwidth_table(scn: Scenario, s: Sequence[int], n: Sequence[int]) -> BandwidthRequirementTable:
    s = tuple(int(x) for x in s)
    n = tuple(int(nb) if sb else 0 for sb, nb in zip(s, n))
    groups = service_groups(scn, s)
    K = scn.K
    phi_g = np.empty((len(groups), K))
    phi_m = np.empty((scn.M, K))
    for gi, g in enumerate(groups):
        if n[g.bs] == 0:
            row = np.full(K, np.inf)
        else:
            rate, w = _area_rates(scn, g.regions, g.bs, s, n)
            inv = np.sum(w / rate) / np.sum(w)
            row = scn.rate_reqs * inv
        phi_g[gi] = row
        phi_m[list(g.regions)] = row
    return BandwidthRequirementTable(
        s, n, np.array([g.bs for g in groups]), tuple(g.regions for g in groups), phi_g, phi_m
    )


# ---------------------------------------------------------------------------
# multi-class loss system


def _admissible_counts(z: np.ndarray, phi: float) -> np.ndarray:
    """Number of u >= 0 with z + u*phi < 1, for every occupancy z < 1."""
    c = np.floor((1.0 - z) / phi).astype(np.int64) + 1
    c = np.maximum(c, 1)
    # repair floating-point edge cases in both directions
    over = z + (c - 1) * phi >= 1.0
    while over.any():
        c[over] -= 1
        over = (c > 1) & (z + (c - 1) * phi >= 1.0)
    under = z + c * phi < 1.0
    while under.any():
        c[under] += 1
        under = z + c * phi < 1.0
    return c


def _blocking_enumerate(phi: np.ndarray, rho: np.ndarray, cap: int) -> np.ndarray:
    z = np.zeros(1)
    logw = np.zeros(1)
    for p, r in zip(phi, rho):
        counts = _admissible_counts(z, p)
        total = int(counts.sum())
        if total > cap:
            raise StateSpaceTooLarge(
                f"enumeration needs more than {cap} states; use the 'recursion' backend"
            )
        parent = np.repeat(np.arange(len(z)), counts)
        starts = np.cumsum(counts) - counts
        u = np.arange(total) - np.repeat(starts, counts)
        z = z[parent] + u * p
        logw = logw[parent] + u * math.log(r) - gammaln(u + 1.0)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return np.array([w[z + p >= 1.0].sum() for p in phi])


def _blocking_recursion(phi: np.ndarray, rho: np.ndarray, grid: int) -> np.ndarray:
    # occupancy recursion on integer units, phi rounded up to whole units
    units = np.ceil(phi * grid - 1e-9).astype(np.int64)
    units = np.maximum(units, 1)
    cap = grid - 1  # strict admission: occupied units < grid
    fits = units <= cap
    q = np.zeros(cap + 1)
    q[0] = 1.0
    if fits.any():
        bu = units[fits]
        coef = (rho[fits] * bu).astype(float)
        step = int(bu.min())
        j = 1
        while j <= cap:
            hi = min(j + step, cap + 1)
            idx = np.arange(j, hi)
            acc = np.zeros(hi - j)
            for b, c in zip(bu, coef):
                src = idx - b
                ok = src >= 0
                acc[ok] += c * q[src[ok]]
            q[j:hi] = acc / idx
            top = q[:hi].max()
            if top > 1e250:
                q[:hi] /= top
            j = hi
    q /= q.sum()
    tail = np.concatenate([[0.0], np.cumsum(q[::-1])])  # tail[k] = sum of last k entries
    out = np.empty(len(phi))
    for i, u in enumerate(units):
        out[i] = 1.0 if u > cap else tail[min(u, cap + 1)]
    return out


def loss_system_blocking(
    phi_bar: Sequence[float],
    rho: Sequence[float],
    backend: str = "enumerate",
    grid: int = DEFAULT_GRID,
    state_cap: int = DEFAULT_STATE_CAP,
) -> np.ndarray:
    """Per-class blocking of one multi-class loss system.

    Class i occupies ``phi_bar[i]`` of the capacity per user and is offered
    ``rho[i]`` Erlangs. Classes with no traffic report 0; classes that can
    never be admitted (``phi_bar >= 1`` or infinite) report 1.
    """
    phi_bar = np.asarray(phi_bar, dtype=float)
    rho = np.asarray(rho, dtype=float)
    out = np.zeros(len(phi_bar))
    live = rho > 0
    out[live & ~(phi_bar < 1.0)] = 1.0
    keep = live & (phi_bar < 1.0)
    if keep.any():
        if backend == "enumerate":
            out[keep] = _blocking_enumerate(phi_bar[keep], rho[keep], state_cap)
        elif backend == "recursion":
            out[keep] = _blocking_recursion(phi_bar[keep], rho[keep], grid)
        else:
            raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    return out


def overall_blocking(p_sv, phi):
    """Blocking including opportunistic sleep: 1 - (1 - p_sv)(1 - phi)."""
    return 1.0 - (1.0 - p_sv) * (1.0 - phi)


def _group_rho(table: BandwidthRequirementTable, rho_slot: np.ndarray) -> np.ndarray:
    return np.array([rho_slot[list(r)].sum(axis=0) for r in table.group_regions])


def service_blocking(
    bs: int,
    action: NetworkAction,
    rho_slot: np.ndarray,
    table: BandwidthRequirementTable,
    backend: str = "recursion",
    grid: int = DEFAULT_GRID,
    state_cap: int = DEFAULT_STATE_CAP,
) -> Tuple[np.ndarray, float]:
    """Service blocking at one active BS.

    Returns an M x K array (NaN outside the BS's coverage) and the
    traffic-weighted per-BS value.
    """
    if not action.s[bs]:
        raise ValueError(f"BS {bs} is not active")
    rho_slot = np.asarray(rho_slot, dtype=float)
    rho_g = _group_rho(table, rho_slot)
    mine = table.groups_of(bs)
    p_mk = np.full(rho_slot.shape, np.nan)
    if not mine:
        return p_mk, 0.0
    phi = table.phi_bar_g[mine].ravel()
    rho = rho_g[mine].ravel()
    p = loss_system_blocking(phi, rho, backend, grid, state_cap)
    for gi, row in zip(mine, p.reshape(len(mine), -1)):
        p_mk[list(table.group_regions[gi])] = row
    tot = rho.sum()
    return p_mk, float(np.dot(p, rho) / tot) if tot > 0 else 0.0


# ---------------------------------------------------------------------------
# slot report


@dataclass(frozen=True, eq=False)
class BlockingReport:
    p_sv_mk: np.ndarray  # M x K
    p_sv_b: np.ndarray  # B, NaN for sleeping BSs
    p_blk_mk: np.ndarray  # M x K
    p_blk_b: np.ndarray  # B, NaN for sleeping BSs
    weighted: float
    phi: np.ndarray  # B

    @property
    def active(self) -> np.ndarray:
        return ~np.isnan(self.p_blk_b)


class BlockingModel:
    """Blocking evaluator for one scenario with memoised intermediate tables.

    Bandwidth tables are keyed on (s, n); service blocking additionally on the
    slot's traffic. Both caches are plain dicts: concurrent readers are safe
    and a duplicate insertion only recomputes an identical value.
    """

    def __init__(
        self,
        scn: Scenario,
        backend: str = "recursion",
        grid: int = DEFAULT_GRID,
        state_cap: int = DEFAULT_STATE_CAP,
    ):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
        self.scn = scn
        self.backend = backend
        self.grid = grid
        self.state_cap = state_cap
        self._tables: Dict[tuple, BandwidthRequirementTable] = {}
        self._service: Dict[tuple, Tuple[np.ndarray, np.ndarray]] = {}

    @staticmethod
    def _key(s, n):
        s = tuple(int(x) for x in s)
        return s, tuple(int(nb) if sb else 0 for sb, nb in zip(s, n))

    def table(self, s, n) -> BandwidthRequirementTable:
        key = self._key(s, n)
        tab = self._tables.get(key)
        if tab is None:
            tab = bandwidth_table(self.scn, *key)
            self._tables[key] = tab
        return tab

    def service(self, s, n, rho_slot: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(p_sv_mk, p_sv_b) for configuration (s, n) under ``rho_slot``."""
        s, n = self._key(s, n)
        rho_slot = np.ascontiguousarray(rho_slot, dtype=float)
        key = (s, n, rho_slot.tobytes())
        hit = self._service.get(key)
        if hit is not None:
            return hit
        scn = self.scn
        p_mk = np.ones((scn.M, scn.K))
        p_b = np.full(scn.B, np.nan)
        if any(s):
            tab = self.table(s, n)
            act = NetworkAction.build(s, n, [0.0] * scn.B)
            for b in range(scn.B):
                if s[b]:
                    mk, p_b[b] = service_blocking(b, act, rho_slot, tab, self.backend, self.grid, self.state_cap)
                    cover = ~np.isnan(mk[:, 0])
                    p_mk[cover] = mk[cover]
        p_mk.setflags(write=False)
        p_b.setflags(write=False)
        self._service[key] = (p_mk, p_b)
        return p_mk, p_b

    def weighted_blocking(self, s, n, phi, rho_slot, weights_slot) -> float:
        """Slot contribution sum_b w_b * p_blk_b, with the all-off convention."""
        if not any(s):
            return float(np.sum(weights_slot)) if np.sum(rho_slot) > 0 else 0.0
        _, p_b = self.service(s, n, rho_slot)
        total = 0.0
        for b, sb in enumerate(s):
            if sb:
                total += weights_slot[b] * overall_blocking(p_b[b], phi[b])
        return float(total)

    def report(self, action: NetworkAction, rho_slot, weights_slot=None) -> BlockingReport:
        scn = self.scn
        rho_slot = np.asarray(rho_slot, dtype=float)
        if weights_slot is None:
            weights_slot = np.zeros(scn.B)
        p_mk, p_b = self.service(action.s, action.n, rho_slot)
        phi = np.array(action.phi, dtype=float)
        if any(action.s):
            bs_of = np.empty(scn.M, dtype=int)
            for g in service_groups(scn, action.s):
                bs_of[list(g.regions)] = g.bs
            blk_mk = overall_blocking(p_mk, phi[bs_of][:, None])
        else:
            blk_mk = np.ones_like(p_mk)
        blk_b = np.where(np.array(action.s) == 1, overall_blocking(p_b, phi), np.nan)
        weighted = self.weighted_blocking(action.s, action.n, phi, rho_slot, weights_slot)
        return BlockingReport(p_mk, p_b.copy(), blk_mk, blk_b, weighted, phi)


def slot_blocking_report(
    action: NetworkAction,
    rho_slot,
    scn: Scenario,
    backend: str = "recursion",
    weights_slot=None,
    model: Optional[BlockingModel] = None,
) -> BlockingReport:
    """Blocking of every region, class and BS for one slot configuration."""
    model = model or BlockingModel(scn, backend)
    return model.report(action, rho_slot, weights_slot)


@dataclass(frozen=True)
class BlockingCurve:
    n: np.ndarray
    p_sv: np.ndarray
    phi: np.ndarray
    p_blk: np.ndarray

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.p_blk))


def blocking_curve(
    scn: Scenario,
    rho_total: float,
    p_in: float,
    n_grid: Sequence[int],
    s: Optional[Sequence[int]] = None,
    model: Optional[BlockingModel] = None,
) -> BlockingCurve:
    """Blocking versus subcarrier count at a fixed input power per active BS.

    ``rho_total`` is spread over regions by area and evenly over classes.
    Each active BS sleeps just enough to live on ``p_in``; the BS figures are
    combined with weights proportional to the traffic they serve.
    """
    model = model or BlockingModel(scn)
    s = tuple(s) if s is not None else (1,) * scn.B
    area = np.array([r.area for r in scn.regions])
    rho = np.repeat((rho_total * area / area.sum())[:, None] / scn.K, scn.K, axis=1)
    served = np.zeros(scn.B)
    if any(s):
        for g in service_groups(scn, s):
            served[g.bs] += rho[list(g.regions)].sum()
    w = served / served.sum() if served.sum() > 0 else np.array(s, float) / max(1, sum(s))
    pc = scn.power
    rows = []
    for n in n_grid:
        _, p_b = model.service(s, [n] * scn.B, rho)
        p_bs = float(pc.active_power(n))
        phi = sleep_ratio_from_input(p_bs, min(p_in, p_bs), pc.p_s)
        p_sv = float(np.nansum(w * np.nan_to_num(p_b)))
        rows.append((n, p_sv, phi, float(overall_blocking(p_sv, phi))))
    n, p_sv, phi, p_blk = (np.array(c) for c in zip(*rows))
    return BlockingCurve(n.astype(int), p_sv, phi, p_blk)
