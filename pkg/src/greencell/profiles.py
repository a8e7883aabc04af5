"""Synthetic daily traffic and solar-harvest profiles and the bundled fixtures.

The shapes follow the usual daily pattern: traffic bottoms out before dawn
and peaks in the afternoon; harvest is a daylight half-sine. Measured
profiles are not shipped.
"""

from __future__ import annotations

import numpy as np

SINGLE_CELL_RADIUS = 1000.0


def daily_traffic_shape(T: int = 24, floor: float = 0.15, trough_hour: float = 4.0) -> np.ndarray:
    """Per-slot traffic fraction in (0, 1], maximum exactly 1."""
    hours = (np.arange(T) + 0.5) * 24.0 / T
    shape = floor + (1.0 - floor) * 0.5 * (1.0 - np.cos(2.0 * np.pi * (hours - trough_hour) / 24.0))
    return shape / shape.max()


def daily_harvest(T: int = 24, peak: float = 1200.0, sunrise: float = 6.0, sunset: float = 18.0) -> np.ndarray:
    """Average harvested power per slot in watts."""
    hours = (np.arange(T) + 0.5) * 24.0 / T
    x = (hours - sunrise) / (sunset - sunrise)
    return np.where((x > 0) & (x < 1), peak * np.sin(np.pi * np.clip(x, 0, 1)), 0.0)


def _common(T: int) -> dict:
    return {
        "sample_points": 2048,
        "power": {"p0": 712.2, "delta_p": 15.96, "p_t": 40.0, "p_s": 50.0, "n_total": 600, "w0": 10e6},
        "channel": {"pathloss_offset_db": 34.5, "pathloss_exponent_x10": 35.0, "noise_density_dbm_hz": -174.0},
        "slots": {"lengths": [24.0 / T] * T},
        "weights": {"exponent": 0},
    }


def single_cell_doc(T: int = 24, lam_max: float = 10.0, harvest_peak: float = 1200.0) -> dict:
    """One macro cell, inner disk and outer ring of equal area, one class."""
    R = SINGLE_CELL_RADIUS
    shape = daily_traffic_shape(T)
    rho = np.round(lam_max * shape / 2.0, 9)
    doc = _common(T)
    doc.update(
        {
            "name": "single_cell",
            "classes": [{"rate_req": 2e6, "mu": 1.0}],
            "regions": [
                {"id": "inner", "shape": "disk", "center": [0.0, 0.0], "radius": R / np.sqrt(2.0)},
                {"id": "outer", "shape": "annulus", "center": [0.0, 0.0], "r_in": R / np.sqrt(2.0), "r_out": R},
            ],
            "base_stations": [{"id": "bs1", "position": [0.0, 0.0]}],
            "traffic": {"rho": [[[float(r)], [float(r)]] for r in rho]},
            "harvest": {"p_h": [[float(x)] for x in np.round(daily_harvest(T, harvest_peak), 6)]},
            "association": {"1": [0, 0]},
            "heuristics": {"eta1": 0.18, "eta2": 0.26, "thresholds": [], "patterns": [], "b_min": 1},
        }
    )
    return doc


def three_sector_groups(s) -> list:
    """Service areas per on/off pattern for three co-located 120-degree sectors.

    BS b points its sector antenna at 120b + 60 degrees. Region 2b and 2b+1 are the two 60-degree halves of sector b. A sleeping
    sector is handed over whole when one BS remains, and split between its
    two neighbours when two remain.
    """
    on = [b for b in range(3) if s[b]]
    off = [b for b in range(3) if not s[b]]
    groups = [[b, 2 * b, 2 * b + 1] for b in on]
    if len(on) == 1:
        groups.append([on[0]] + sorted(r for c in off for r in (2 * c, 2 * c + 1)))
    elif len(on) == 2:
        c = off[0]
        groups.append([(c - 1) % 3, 2 * c])
        groups.append([(c + 1) % 3, 2 * c + 1])
    return groups


def three_sector_doc(
    psi=(1, 2, 3), T: int = 24, lam_max: float = 7.5, harvest_peak: float = 1200.0, name: str = "three_sector"
) -> dict:
    R = SINGLE_CELL_RADIUS
    psi = np.asarray(psi, dtype=float) / np.sum(psi)
    lam = lam_max * daily_traffic_shape(T)
    regions = []
    for b in range(3):
        for h in range(2):
            lo = 120.0 * b + 60.0 * h
            regions.append(
                {"id": f"s{b + 1}{'ab'[h]}", "shape": "sector", "center": [0.0, 0.0], "r_in": 0.0, "r_out": R, "theta": [lo, lo + 60.0]}
            )
    rho = [[[float(round(lam[t] * psi[m // 2] / 2.0, 9))] for m in range(6)] for t in range(T)]
    heaviest = int(np.argmax(psi))
    lightest = int(np.argmin(psi)) if psi.min() < psi.max() else (heaviest + 1) % 3
    only_heavy = [1 if b == heaviest else 0 for b in range(3)]
    drop_light = [0 if b == lightest else 1 for b in range(3)]
    assoc = {}
    for s in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]:
        assoc["".join(map(str, s))] = three_sector_groups(s)
    doc = _common(T)
    doc.update(
        {
            "name": name,
            "classes": [{"rate_req": 2e6, "mu": 1.0}],
            "regions": regions,
            "base_stations": [
                {"id": f"bs{b + 1}", "position": [0.0, 0.0], "azimuth": 120.0 * b + 60.0, "beamwidth": 70.0, "front_to_back": 20.0}
                for b in range(3)
            ],
            "traffic": {"rho": rho},
            "harvest": {"p_h": [[float(x)] * 3 for x in np.round(daily_harvest(T, harvest_peak), 6)]},
            "association": assoc,
            "heuristics": {
                "eta1": 0.18,
                "eta2": 0.26,
                "thresholds": [3.0, 6.0],
                "patterns": [only_heavy, drop_light],
                "b_min": 1,
            },
        }
    )
    return doc
