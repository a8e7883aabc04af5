"""Static network description: power model, geometry, association, file loading.

Scenario files are TOML documents (extension ``.scn``). See ``data/`` for the
bundled fixtures and README.md for the schema.
"""

from __future__ import annotations

import csv
import itertools
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULT_SAMPLE_POINTS = 2048
DATA_DIR = Path(__file__).parent / "data"

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

Pattern = Tuple[int, ...]


class ScenarioError(ValueError):
    """Invalid scenario content; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScenarioParseError(ScenarioError):
    pass


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class PowerConstants:
    p0: float = 712.2
    delta_p: float = 15.96
    p_t: float = 40.0
    p_s: float = 50.0
    n_total: int = 600
    w0: float = 10e6

    def __post_init__(self):
        for name in ("p0", "delta_p", "p_t", "p_s", "n_total", "w0"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"power.{name}", "must be strictly positive")
        if not self.p_s < self.p0:
            raise ScenarioError("power.p_s", "sleep power must be below p0")

    def active_power(self, n) -> np.ndarray | float:
        """Power of an awake, active BS with ``n`` subcarriers."""
        return self.p0 + np.asarray(n) / self.n_total * self.delta_p * self.p_t

    @property
    def full_power(self) -> float:
        return self.p0 + self.delta_p * self.p_t


@dataclass(frozen=True)
class ChannelConstants:
    pathloss_offset_db: float = 34.5
    pathloss_exponent_x10: float = 35.0  # dB per decade of distance (metres)
    noise_density_dbm_hz: float = -174.0

    def __post_init__(self):
        if not self.pathloss_exponent_x10 > 0:
            raise ScenarioError("channel.pathloss_exponent_x10", "must be positive")
        if not self.noise_density_dbm_hz < 0:
            raise ScenarioError("channel.noise_density_dbm_hz", "must be negative (dBm/Hz)")

    @property
    def beta(self) -> float:
        """Linear pathloss constant for distances in metres."""
        return 10.0 ** (-self.pathloss_offset_db / 10.0)

    @property
    def alpha(self) -> float:
        return self.pathloss_exponent_x10 / 10.0

    def noise_power(self, bandwidth_hz: float) -> float:
        """Thermal noise in watts over ``bandwidth_hz``."""
        return 10.0 ** ((self.noise_density_dbm_hz - 30.0) / 10.0) * bandwidth_hz

    def path_gain(self, d) -> np.ndarray:
        return self.beta * np.asarray(d, dtype=float) ** (-self.alpha)


@dataclass(frozen=True)
class UserClass:
    rate_req: float  # bits/s
    mu: float = 1.0  # service rate, 1/s; only the Monte Carlo oracle needs it

    def __post_init__(self):
        if not self.rate_req > 0:
            raise ScenarioError("classes.rate_req", "must be positive")
        if not self.mu > 0:
            raise ScenarioError("classes.mu", "must be positive")


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class AnnulusSector:
    """Ring sector around ``center``; a full disk is r_in=0, theta=(0, 360)."""

    center: Tuple[float, float] = (0.0, 0.0)
    r_in: float = 0.0
    r_out: float = 1.0
    theta0: float = 0.0  # degrees
    theta1: float = 360.0

    def __post_init__(self):
        if not (0 <= self.r_in < self.r_out):
            raise ScenarioError("regions.radius", "need 0 <= r_in < r_out")
        if not (0 < self.theta1 - self.theta0 <= 360):
            raise ScenarioError("regions.theta", "need 0 < theta1 - theta0 <= 360")

    @property
    def area(self) -> float:
        span = math.radians(self.theta1 - self.theta0)
        return 0.5 * span * (self.r_out**2 - self.r_in**2)

    def sample(self, count: int) -> np.ndarray:
        # Fibonacci lattice: area-uniform radius, golden-ratio angle sequence
        i = np.arange(count)
        u = (i + 0.5) / count
        v = np.mod(i * _GOLDEN, 1.0)
        r = np.sqrt(self.r_in**2 + u * (self.r_out**2 - self.r_in**2))
        th = np.radians(self.theta0 + v * (self.theta1 - self.theta0))
        return np.column_stack([self.center[0] + r * np.cos(th), self.center[1] + r * np.sin(th)])


def _inside_polygon(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    for (x1, y1), (x2, y2) in zip(verts, np.roll(verts, -1, axis=0)):
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xc)
    return inside


@dataclass(frozen=True)
class Polygon:
    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3 or not self.area > 0:
            raise ScenarioError("regions.vertices", "polygon needs >= 3 vertices and positive area")

    @property
    def area(self) -> float:
        v = np.asarray(self.vertices, dtype=float)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def sample(self, count: int) -> np.ndarray:
        from scipy.stats import qmc

        v = np.asarray(self.vertices, dtype=float)
        lo, hi = v.min(axis=0), v.max(axis=0)
        halton = qmc.Halton(d=2, scramble=False)
        halton.fast_forward(1)  # skip the origin
        out: List[np.ndarray] = []
        have = 0
        while have < count:
            pts = lo + halton.random(4 * count) * (hi - lo)
            pts = pts[_inside_polygon(pts, v)]
            out.append(pts)
            have += len(pts)
        return np.concatenate(out)[:count]


Geometry = Union[AnnulusSector, Polygon]


@dataclass(frozen=True)
class Region:
    id: str
    geometry: Geometry
    n_samples: int = DEFAULT_SAMPLE_POINTS

    @property
    def area(self) -> float:
        return self.geometry.area

    @cached_property
    def sample_points(self) -> np.ndarray:
        pts = self.geometry.sample(self.n_samples)
        pts.setflags(write=False)
        return pts

    @property
    def point_weight(self) -> float:
        return self.area / self.n_samples


@dataclass(frozen=True)
class BaseStation:
    """A BS site. ``azimuth`` (degrees) makes the antenna directional.

    Directional antennas follow the parabolic sector pattern
    -min(12 (dtheta / beamwidth)^2, front_to_back) dB around the boresight;
    without an azimuth the antenna is omnidirectional (0 dB).
    """

    id: str
    position: Tuple[float, float]
    azimuth: Optional[float] = None
    beamwidth: float = 70.0  # 3 dB beamwidth, degrees
    front_to_back: float = 20.0  # dB

    def __post_init__(self):
        if not (self.beamwidth > 0 and self.front_to_back >= 0):
            raise ScenarioError("base_stations", "beamwidth must be > 0 and front_to_back >= 0")

    def antenna_gain(self, points: np.ndarray) -> np.ndarray:
        """Linear antenna gain toward each row of ``points``."""
        points = np.atleast_2d(points)
        if self.azimuth is None:
            return np.ones(len(points))
        dx = points - np.asarray(self.position)[None, :]
        ang = np.degrees(np.arctan2(dx[:, 1], dx[:, 0]))
        off = (ang - self.azimuth + 180.0) % 360.0 - 180.0
        att = np.minimum(12.0 * (off / self.beamwidth) ** 2, self.front_to_back)
        return 10.0 ** (-att / 10.0)


# ---------------------------------------------------------------------------
# association


@dataclass(frozen=True)
class ServiceGroup:
    """Regions jointly served by one BS and treated as a single Erlang area."""

    bs: int
    regions: Tuple[int, ...]


Association = Tuple[ServiceGroup, ...]


@dataclass(frozen=True)
class HeuristicParams:
    eta1: float = 0.18
    eta2: float = 0.26
    thresholds: Tuple[float, ...] = ()
    patterns: Tuple[Pattern, ...] = ()
    b_min: int = 1


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True, eq=False)
class Scenario:
    power: PowerConstants
    channel: ChannelConstants
    classes: Tuple[UserClass, ...]
    regions: Tuple[Region, ...]
    base_stations: Tuple[BaseStation, ...]
    traffic: np.ndarray  # T x M x K, Erlangs
    harvest: np.ndarray  # T x B, watts
    slot_lengths: np.ndarray  # T, hours
    weights: np.ndarray  # T x B
    association_table: Mapping[Pattern, Association] = field(default_factory=dict)
    heuristics: HeuristicParams = field(default_factory=HeuristicParams)
    name: str = "scenario"
    source: Optional[str] = None

    def __post_init__(self):
        for name in ("traffic", "harvest", "slot_lengths", "weights"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._validate()
        table = dict(self.association_table)
        for s in self.patterns():
            if s not in table:
                table[s] = strongest_power_association(self, s)
            _check_association(self, s, table[s])
        object.__setattr__(self, "association_table", table)

    # shape helpers
    @property
    def T(self) -> int:
        return self.traffic.shape[0]

    @property
    def M(self) -> int:
        return len(self.regions)

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def B(self) -> int:
        return len(self.base_stations)

    @property
    def N(self) -> int:
        return self.power.n_total

    def patterns(self) -> List[Pattern]:
        """Every on/off pattern with at least one active BS."""
        return [s for s in itertools.product((0, 1), repeat=self.B) if any(s)]

    @cached_property
    def bs_positions(self) -> np.ndarray:
        return np.array([b.position for b in self.base_stations], dtype=float)

    def gains_at(self, points) -> np.ndarray:
        """(points x B) linear channel gain: pathloss times antenna gain.

        Distances are clamped to 1 m.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.linalg.norm(points[:, None, :] - self.bs_positions[None, :, :], axis=2)
        g = self.channel.path_gain(np.maximum(d, 1.0))
        for b, bs in enumerate(self.base_stations):
            if bs.azimuth is not None:
                g[:, b] *= bs.antenna_gain(points)
        return g

    @cached_property
    def region_gains(self) -> Tuple[np.ndarray, ...]:
        """Per region, the (points x B) linear channel gain to every BS."""
        out = []
        for r in self.regions:
            g = self.gains_at(r.sample_points)
            g.setflags(write=False)
            out.append(g)
        return tuple(out)

    @cached_property
    def rate_reqs(self) -> np.ndarray:
        return np.array([c.rate_req for c in self.classes])

    @cached_property
    def total_time(self) -> float:
        return float(self.slot_lengths.sum())

    def _validate(self):
        T, B, M, K = self.traffic.shape[0] if self.traffic.ndim == 3 else -1, self.B, self.M, self.K
        if B < 1 or M < 1 or K < 1:
            raise ScenarioError("scenario", "need at least one BS, region and class")
        if self.traffic.ndim != 3 or self.traffic.shape[1:] != (M, K):
            raise ScenarioError("traffic", f"expected T x {M} x {K} array, got {self.traffic.shape}")
        if (self.traffic < 0).any() or not np.isfinite(self.traffic).all():
            raise ScenarioError("traffic", "intensities must be finite and >= 0")
        if self.harvest.shape != (T, B):
            raise ScenarioError("harvest", f"expected {T} x {B} array, got {self.harvest.shape}")
        if (self.harvest < 0).any() or not np.isfinite(self.harvest).all():
            raise ScenarioError("harvest", "harvested power must be finite and >= 0")
        if self.slot_lengths.shape != (T,) or not (self.slot_lengths > 0).all():
            raise ScenarioError("slots", f"expected {T} positive slot lengths")
        if self.weights.shape != (T, B):
            raise ScenarioError("weights", f"expected {T} x {B} array, got {self.weights.shape}")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ScenarioError("weights", f"must be >= 0 and sum to 1 (sum={self.weights.sum():.12g})")
        ids = [b.id for b in self.base_stations]
        if len(set(ids)) != len(ids):
            raise ScenarioError("base_stations", "ids must be unique")
        rids = [r.id for r in self.regions]
        if len(set(rids)) != len(rids):
            raise ScenarioError("regions", "ids must be unique")
        for r in self.regions:
            if not r.area > 0:
                raise ScenarioError("regions", f"region {r.id} has non-positive area")
        hp = self.heuristics
        th = list(hp.thresholds)
        if any(b <= a for a, b in zip(th, th[1:])) or any(x <= 0 for x in th):
            raise ScenarioError("heuristics.thresholds", "must be positive and strictly ascending")
        if len(hp.patterns) != len(th):
            raise ScenarioError("heuristics.patterns", "need one pattern per threshold")
        for p in hp.patterns:
            if len(p) != B or sum(p) < hp.b_min:
                raise ScenarioError("heuristics.patterns", f"pattern {p} invalid for B={B}, b_min={hp.b_min}")

    # derived views
    def traffic_shape(self) -> np.ndarray:
        """Normalised total traffic per slot (the daily profile, max = 1)."""
        tot = self.traffic.sum(axis=(1, 2))
        peak = tot.max()
        return tot / peak if peak > 0 else np.ones_like(tot)

    def with_weights_exponent(self, j: float) -> "Scenario":
        return self.replace(weights=weights_from_profile(self.traffic_shape(), self.B, j))

    def replace(self, **changes) -> "Scenario":
        import dataclasses

        if "association_table" not in changes:
            # recompute fallback entries only when geometry changes
            changes["association_table"] = self.association_table
        return dataclasses.replace(self, **changes)


def weights_from_profile(shape: np.ndarray, B: int, exponent: float) -> np.ndarray:
    """omega_t = phi_t^j / sum_t phi_t^j, split evenly across BSs."""
    w = np.asarray(shape, dtype=float) ** exponent
    w = w / w.sum()
    return np.repeat(w[:, None] / B, B, axis=1)


@dataclass(frozen=True)
class NetworkAction:
    """One slot's decision: on/off ``s``, subcarriers ``n``, sleep ratio ``phi``.

    A sleeping BS (s=0) carries n=0, phi=1. An active BS may carry phi=1 only
    as the forced-sleep fallback used by the heuristics.
    """

    s: Tuple[int, ...]
    n: Tuple[int, ...]
    phi: Tuple[float, ...]

    def __post_init__(self):
        s = tuple(int(x) for x in self.s)
        n = tuple(int(x) for x in self.n)
        phi = tuple(float(x) for x in self.phi)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "phi", phi)
        if not (len(s) == len(n) == len(phi)):
            raise ValueError("s, n, phi must have equal length")
        for b, (sb, nb, pb) in enumerate(zip(s, n, phi)):
            if sb not in (0, 1):
                raise ValueError(f"s[{b}] must be 0 or 1")
            if sb == 0 and (nb != 0 or pb != 1.0):
                raise ValueError(f"BS {b} is off: need n=0 and phi=1")
            if sb == 1 and (nb < 0 or not 0.0 <= pb <= 1.0):
                raise ValueError(f"BS {b} is on: need n >= 0 and 0 <= phi <= 1")

    @classmethod
    def build(cls, s: Sequence[int], n: Sequence[int], phi: Sequence[float]) -> "NetworkAction":
        """Like the constructor but forces the off-BS convention (n=0, phi=1)."""
        s = tuple(int(x) for x in s)
        return cls(
            s,
            tuple(int(nb) if sb else 0 for sb, nb in zip(s, n)),
            tuple(float(pb) if sb else 1.0 for sb, pb in zip(s, phi)),
        )

    @classmethod
    def full(cls, s: Sequence[int], n_total: int) -> "NetworkAction":
        """Every active BS at all subcarriers without opportunistic sleep."""
        return cls.build(s, [n_total] * len(s), [0.0] * len(s))

    @property
    def B(self) -> int:
        return len(self.s)


# ---------------------------------------------------------------------------
# power model and association


def bs_power(pc: PowerConstants, s: int, n: float, sleeping_now: bool = False) -> float:
    """Instantaneous BS power draw in watts."""
    if not s:
        return 0.0
    if sleeping_now:
        return pc.p_s
    return float(pc.active_power(n))


def strongest_power_association(scn: Scenario, s: Sequence[int]) -> Association:
    """Each region goes to the active BS with the largest mean received power."""
    active = [b for b in range(scn.B) if s[b]]
    if not active:
        raise ValueError("no serving BS: every base station is off")
    groups = []
    for m, g in enumerate(scn.region_gains):
        mean_rx = g[:, active].mean(axis=0)
        groups.append(ServiceGroup(active[int(np.argmax(mean_rx))], (m,)))
    return tuple(groups)


def _check_association(scn: Scenario, s: Pattern, groups: Association):
    key = "".join(map(str, s))
    seen = sorted(m for g in groups for m in g.regions)
    if seen != list(range(scn.M)):
        raise ScenarioError("association", f"pattern {key} must cover every region exactly once")
    for g in groups:
        if not (0 <= g.bs < scn.B) or not s[g.bs]:
            raise ScenarioError("association", f"pattern {key} maps regions to inactive BS {g.bs}")


def service_groups(scn: Scenario, s: Sequence[int]) -> Association:
    s = tuple(int(x) for x in s)
    if not any(s):
        raise ValueError("no serving BS: every base station is off")
    return scn.association_table[s]


def association_map(scn: Scenario, s: Sequence[int]) -> Dict[int, int]:
    """Region index -> serving BS index for on/off pattern ``s``."""
    return {m: g.bs for g in service_groups(scn, s) for m in g.regions}


# ---------------------------------------------------------------------------
# loading


def _arr(doc: dict, section: str, key: str):
    try:
        return doc[section][key]
    except KeyError:
        raise ScenarioError(f"{section}.{key}", "missing") from None


def _parse_geometry(r: dict) -> Geometry:
    shape = r.get("shape", "disk")
    center = tuple(r.get("center", (0.0, 0.0)))
    if shape == "disk":
        return AnnulusSector(center, 0.0, float(r["radius"]))
    if shape in ("annulus", "annulus_sector", "sector"):
        th = r.get("theta", (0.0, 360.0))
        return AnnulusSector(center, float(r.get("r_in", 0.0)), float(r["r_out"]), float(th[0]), float(th[1]))
    if shape == "polygon":
        return Polygon(tuple(tuple(map(float, v)) for v in r["vertices"]))
    raise ScenarioError("regions.shape", f"unknown shape {shape!r}")


def _parse_pattern(key: str, B: int) -> Pattern:
    key = key.replace(",", "").replace(" ", "")
    if len(key) != B or set(key) - {"0", "1"}:
        raise ScenarioError("association", f"bad pattern key {key!r} for B={B}")
    return tuple(int(c) for c in key)


def _parse_association(raw: dict, B: int, M: int) -> Dict[Pattern, Association]:
    table = {}
    for key, spec in raw.items():
        s = _parse_pattern(key, B)
        if spec and all(isinstance(x, int) for x in spec):
            # flat list: region m -> BS spec[m]
            if len(spec) != M:
                raise ScenarioError("association", f"pattern {key} lists {len(spec)} regions, expected {M}")
            groups = tuple(ServiceGroup(int(b), (m,)) for m, b in enumerate(spec))
        else:
            # grouped: [bs, region, region, ...]
            groups = tuple(ServiceGroup(int(g[0]), tuple(int(x) for x in g[1:])) for g in spec)
        table[s] = groups
    return table


def _read_traffic_csv(path: Path, T: int, M: int, K: int) -> np.ndarray:
    rho = np.zeros((T, M, K))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rho[int(row["slot"]), int(row["region"]), int(row["class"])] = float(row["rho"])
    return rho


def scenario_from_dict(doc: dict, base_dir: Optional[Path] = None, source: Optional[str] = None) -> Scenario:
    base_dir = base_dir or Path.cwd()
    n_samples = int(doc.get("sample_points", DEFAULT_SAMPLE_POINTS))
    try:
        power = PowerConstants(**doc.get("power", {}))
        channel = ChannelConstants(**doc.get("channel", {}))
        classes = tuple(UserClass(**c) for c in doc.get("classes", []))
    except TypeError as exc:
        raise ScenarioError("scenario", str(exc)) from None
    regions = tuple(
        Region(str(r.get("id", f"r{i}")), _parse_geometry(r), n_samples) for i, r in enumerate(doc.get("regions", []))
    )
    bss = tuple(
        BaseStation(
            str(b.get("id", f"bs{i}")),
            tuple(map(float, b.get("position", (0.0, 0.0)))),
            float(b["azimuth"]) if "azimuth" in b else None,
            float(b.get("beamwidth", 70.0)),
            float(b.get("front_to_back", 20.0)),
        )
        for i, b in enumerate(doc.get("base_stations", []))
    )
    B, M, K = len(bss), len(regions), len(classes)

    lengths = np.asarray(_arr(doc, "slots", "lengths"), dtype=float)
    T = len(lengths)
    tr = doc.get("traffic", {})
    if "csv" in tr:
        rho = _read_traffic_csv(base_dir / tr["csv"], T, M, K)
    else:
        rho = np.asarray(_arr(doc, "traffic", "rho"), dtype=float)
    harvest = np.asarray(_arr(doc, "harvest", "p_h"), dtype=float)
    w = doc.get("weights", {})
    if "omega" in w:
        weights = np.asarray(w["omega"], dtype=float)
    else:
        tot = rho.sum(axis=(1, 2)) if rho.ndim == 3 else np.ones(T)
        shape = tot / tot.max() if tot.max() > 0 else np.ones(T)
        weights = weights_from_profile(shape, B, float(w.get("exponent", 0.0)))

    table = _parse_association(doc.get("association", {}), B, M)
    h = doc.get("heuristics", {})
    hp = HeuristicParams(
        eta1=float(h.get("eta1", 0.18)),
        eta2=float(h.get("eta2", 0.26)),
        thresholds=tuple(float(x) for x in h.get("thresholds", ())),
        patterns=tuple(tuple(int(v) for v in p) for p in h.get("patterns", ())),
        b_min=int(h.get("b_min", 1)),
    )
    return Scenario(
        power=power,
        channel=channel,
        classes=classes,
        regions=regions,
        base_stations=bss,
        traffic=rho,
        harvest=harvest,
        slot_lengths=lengths,
        weights=weights,
        association_table=table,
        heuristics=hp,
        name=str(doc.get("name", "scenario")),
        source=source,
    )


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Parse and validate a scenario file.

    A bare name such as ``single_cell`` or ``single_cell.scn`` that does not
    exist on disk resolves to the bundled fixture of that name.
    """
    path = Path(path)
    if not path.exists():
        bundled = DATA_DIR / (path.name if path.suffix else path.name + ".scn")
        if bundled.exists():
            path = bundled
        else:
            raise FileNotFoundError(str(path))
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError("file", f"{path}: {exc}") from None
    except (KeyError, IndexError, ValueError) as exc:  # pragma: no cover
        raise ScenarioParseError("file", f"{path}: {exc}") from None
    try:
        return scenario_from_dict(doc, base_dir=path.parent, source=str(path))
    except ScenarioError:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ScenarioError("scenario", f"{path}: {exc}") from None
