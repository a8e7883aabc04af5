"""Command-line interface: ``greencell <command> --scenario FILE [options]``.

Every command writes CSV files plus a JSON run manifest into ``--out``
(default: current directory). CSV files start with a ``# schema:`` comment
line naming the format and version, followed by a header row.

Exit codes: 0 success, 2 usage error, 3 invalid scenario or configuration,
4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .blocking import BACKENDS, BlockingModel, StateSpaceTooLarge, blocking_curve
from .heuristics import N_POLICIES, ONOFF_POLICIES, HeuristicConfig, run_heuristic
from .montecarlo import HOLDING, SimConfig, evaluate_policy_mc
from .optimizer import (
    SOLVERS,
    DpConfig,
    PolicySchedule,
    StateCapExceeded,
    TradeoffPoint,
    evaluate_schedule,
    frontier_blocking_at,
    frontier_power_at,
    pareto_filter,
    solve,
    tradeoff_sweep,
)
from .scenario import NetworkAction, Scenario, ScenarioError, load_scenario, service_groups

log = logging.getLogger("greencell")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_CAP = 0, 2, 3, 4
HEURISTICS = tuple(f"{o}+{n}" for o in ONOFF_POLICIES for n in N_POLICIES)

SCHEMAS = {
    "blocking": ("greencell.blocking/1", "n, p_sv, phi, p_blk, is_min"),
    "schedule": (
        "greencell.schedule/1",
        "t, L_h, then per BS b: s_b, n_b, phi_b, P_G_b_W, E_C_b_Wh (battery at slot start), p_blk_b; weighted_blocking",
    ),
    "frontier": ("greencell.frontier/1", "beta (or budget_W for heuristics), avg_grid_power_W, weighted_blocking"),
    "empirical": (
        "greencell.empirical/1",
        "t, bs, p_blk_analytic, p_blk_empirical, std_error, offered, blocked",
    ),
    "compare": ("greencell.compare/1", "p_target, policy, avg_grid_power_W, weighted_blocking, ratio_to_first_stage"),
    "dominance": (
        "greencell.dominance/1",
        "policy, reference, budget_W, avg_grid_power_W, weighted_blocking, reference_blocking, dominated",
    ),
}

EPILOG = "CSV schemas:\n" + "\n".join(f"  {v[0]}: {v[1]}" for v in SCHEMAS.values())


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def parse_grid(text: str, integer: bool = False) -> List[float]:
    """'a,b,c', 'start:stop:step' (stop inclusive) or 'log:lo:hi:count'."""
    text = text.strip()
    try:
        if not text:
            return []
        if text.startswith("log:"):
            lo, hi, cnt = text[4:].split(":")
            vals = list(np.geomspace(float(lo), float(hi), int(cnt)))
        elif ":" in text:
            a, b, c = (float(x) for x in text.split(":"))
            if c <= 0:
                raise ValueError("step must be positive")
            vals = list(np.arange(a, b + c / 2, c))
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from None
    if integer:
        return [int(round(v)) for v in vals]
    return [float(v) for v in vals]


def _pattern(text: Optional[str], B: int) -> Tuple[int, ...]:
    if text is None:
        return (1,) * B
    s = tuple(int(c) for c in text.replace(",", "") if c in "01")
    if len(s) != B:
        raise UsageError(f"--pattern needs {B} digits of 0/1")
    return s


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="greencell", description=__doc__.splitlines()[0], epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"greencell {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file, or a bundled name such as single_cell")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--backend", choices=BACKENDS, default="recursion", help="loss-system solver")
    common.add_argument("--weights-exponent", type=float, default=None, help="omega_t proportional to traffic^j")
    common.add_argument("-v", "--verbose", action="store_true")

    dp = argparse.ArgumentParser(add_help=False)
    dp.add_argument("--n-levels", default=None, help="subcarrier levels, e.g. 0,300,600 or 0:600:50")
    dp.add_argument("--phi-levels", default="0", help="sleep-ratio levels in [0, 1), e.g. 0,0.25,0.5")
    dp.add_argument("--battery-quantum", type=float, default=None, help="battery merge resolution, Wh")
    dp.add_argument("--state-cap", type=int, default=2_000_000, help="max battery states per slot")
    dp.add_argument("--max-stage2-iters", type=int, default=20)
    dp.add_argument("--eta1", type=float, default=None, help="traffic-aware heuristic gain")
    dp.add_argument("--eta2", type=float, default=None, help="traffic-energy-aware heuristic gain")

    def add(name, help_, parents):
        return sub.add_parser(
            name, help=help_, description=help_, parents=parents, epilog=EPILOG,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )

    b = add("blocking", "blocking versus subcarriers for a fixed load and input power", [common])
    b.add_argument("--rho", type=float, default=5.0, help="total intensity, Erlangs, spread by region area")
    b.add_argument("--p-in", type=float, default=math.inf, help="input power per active BS, W")
    b.add_argument("--n-grid", default=None, help="subcarrier grid (default 0:N:10)")
    b.add_argument("--pattern", default=None, help="on/off pattern such as 101 (default all on)")

    o = add("optimize", "solve one schedule", [common, dp])
    o.add_argument("--solver", choices=SOLVERS + HEURISTICS, default="two_stage")
    o.add_argument("--beta", type=float, default=1000.0, help="blocking multiplier")
    o.add_argument("--budget", type=float, default=math.inf, help="heuristics: grid budget per BS, W")

    s = add("sweep", "trace grid-power / blocking frontiers", [common, dp])
    s.add_argument(
        "--solver", action="append", default=None,
        help=f"repeatable; one of {', '.join(SOLVERS + HEURISTICS)} or 'heuristics' for all of them",
    )
    s.add_argument("--beta-grid", default="log:10:1e6:12", help="multipliers for the DP solvers")
    s.add_argument("--budget-grid", default="0:1400:100", help="grid budgets per BS for heuristics, W")

    m = add("simulate", "Monte Carlo check of a schedule written by 'optimize'", [common])
    m.add_argument("--schedule", required=True, help="schedule CSV")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--arrivals", type=int, default=1_000_000, help="total simulated arrivals")
    m.add_argument("--holding", choices=HOLDING, default="exponential")

    c = add("compare", "compare solvers and heuristics at matched blocking targets", [common, dp])
    c.add_argument("--beta-grid", default="log:10:1e6:12")
    c.add_argument("--budget-grid", default="0:1400:100")
    c.add_argument("--targets", default="0.005,0.0125,0.02,0.05,0.1", help="blocking targets")
    c.add_argument("--with-optimal", action="store_true", help="include the joint DP (default only when B=1)")
    return p


# ---------------------------------------------------------------------------
# output helpers


class Run:
    """Collects outputs of one command and writes its manifest."""

    def __init__(self, args: argparse.Namespace, scn: Scenario, seeds: Sequence[int] = ()):
        self.args = args
        self.scn = scn
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seeds = list(seeds)
        self.files: List[str] = []
        self.summary: Dict[str, object] = {}

    def write_csv(self, name: str, schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: {SCHEMAS[schema][0]}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])
        self.files.append(str(path))
        return path

    def finish(self, name: Optional[str] = None) -> Path:
        cfg = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("out", "verbose")}
        digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode())
        if self.scn.source:
            digest.update(Path(self.scn.source).read_bytes())
        manifest = {
            "command": self.args.command,
            "scenario": self.scn.source or self.args.scenario,
            "config": cfg,
            "config_hash": digest.hexdigest(),
            "seeds": self.seeds,
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "outputs": self.files,
            "summary": self.summary,
        }
        path = self.out / (name or f"{self.args.command}_manifest.json")
        path.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
        return path


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.10g}"
    if isinstance(x, np.integer):
        return int(x)
    return x


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _dp_config(args, scn: Scenario, beta: float = 0.0) -> DpConfig:
    n_levels = parse_grid(args.n_levels, integer=True) if args.n_levels else None
    phis = parse_grid(args.phi_levels) if args.phi_levels else [0.0]
    return DpConfig(
        beta=beta,
        n_levels=tuple(n_levels) if n_levels is not None else None,
        phi_levels=tuple(phis),
        battery_quantum=args.battery_quantum,
        max_stage2_iters=args.max_stage2_iters,
        state_cap=args.state_cap,
        backend=args.backend,
    ).resolved(scn)


def _heuristic(scn: Scenario, name: str, args, budget: float, model: BlockingModel) -> PolicySchedule:
    onoff, npol = name.split("+")
    h = scn.heuristics
    eta1 = args.eta1 if getattr(args, "eta1", None) is not None else h.eta1
    eta2 = args.eta2 if getattr(args, "eta2", None) is not None else h.eta2
    return run_heuristic(scn, onoff, npol, HeuristicConfig(eta1, eta2, budget), model=model)


def _pareto(points: List[Tuple[float, float, float]]) -> List[Tuple[float, float, float]]:
    """(key, power, blocking) triples, non-dominated, sorted by blocking."""
    out = []
    for p in sorted(points, key=lambda x: (x[2], x[1], x[0])):
        if out and p[1] >= out[-1][1]:
            continue
        out.append(p)
    return out


def _monotone(points) -> bool:
    return all(b[1] <= a[1] + 1e-12 for a, b in zip(points, points[1:]))


# ---------------------------------------------------------------------------
# commands


def cmd_blocking(args, scn: Scenario) -> int:
    run = Run(args, scn)
    model = BlockingModel(scn, args.backend)
    s = _pattern(args.pattern, scn.B)
    grid = parse_grid(args.n_grid, integer=True) if args.n_grid else list(range(0, scn.N + 1, 10))
    if not grid:
        raise UsageError("--n-grid is empty")
    if any(n < 0 or n > scn.N for n in grid):
        raise UsageError(f"--n-grid values must lie in 0..{scn.N}")
    curve = blocking_curve(scn, args.rho, args.p_in, grid, s, model)
    rows = [[int(n), p, f, q] for n, p, f, q in zip(curve.n, curve.p_sv, curve.phi, curve.p_blk)]
    best = int(np.argmin([r[3] for r in rows]))
    for i, r in enumerate(rows):
        r.append(int(i == best))
    path = run.write_csv("blocking.csv", "blocking", ["n", "p_sv", "phi", "p_blk", "is_min"], rows)
    run.summary = {"n_at_min": rows[best][0], "p_blk_min": rows[best][3], "interior_min": 0 < best < len(rows) - 1}
    run.finish()
    print(f"wrote {path}; minimum p_blk={rows[best][3]:.4g} at n={rows[best][0]}")
    return EXIT_OK


def _schedule_rows(scn: Scenario, sched: PolicySchedule):
    header = ["t", "L_h"]
    for b in range(scn.B):
        header += [f"s_{b}", f"n_{b}", f"phi_{b}", f"P_G_{b}_W", f"E_C_{b}_Wh", f"p_blk_{b}"]
    header.append("weighted_blocking")
    rows = []
    for t, a in enumerate(sched.actions):
        row = [t, scn.slot_lengths[t]]
        for b in range(scn.B):
            row += [a.s[b], a.n[b], a.phi[b], sched.grid_power[t, b], sched.battery[t, b], sched.blocking[t].p_blk_b[b]]
        row.append(sched.blocking[t].weighted)
        rows.append(row)
    return header, rows


def cmd_optimize(args, scn: Scenario) -> int:
    run = Run(args, scn)
    model = BlockingModel(scn, args.backend)
    if args.solver in HEURISTICS:
        sched = _heuristic(scn, args.solver, args, args.budget, model)
    else:
        sched = solve(scn, _dp_config(args, scn, args.beta), args.solver, model)
    header, rows = _schedule_rows(scn, sched)
    path = run.write_csv(f"schedule_{args.solver}.csv", "schedule", header, rows)
    run.summary = {
        "solver": args.solver,
        "beta": args.beta,
        "avg_grid_power_W": sched.avg_grid_power,
        "weighted_blocking": sched.weighted_blocking,
        "total_cost": sched.total_cost,
        "converged": sched.converged,
    }
    run.finish(f"schedule_{args.solver}_manifest.json")
    print(
        f"wrote {path}; avg grid power {sched.avg_grid_power:.6g} W, "
        f"weighted blocking {sched.weighted_blocking:.6g}, cost {sched.total_cost:.6g}"
    )
    return EXIT_OK


def _expand_solvers(names: Optional[List[str]]) -> List[str]:
    names = names or ["two_stage"]
    out: List[str] = []
    for n in names:
        for x in n.split(","):
            x = x.strip()
            if x == "heuristics":
                out += list(HEURISTICS)
            elif x in SOLVERS + HEURISTICS:
                out.append(x)
            else:
                raise UsageError(f"unknown solver {x!r}")
    return list(dict.fromkeys(out))


def _frontiers(args, scn: Scenario, solvers: Sequence[str], model: BlockingModel):
    """policy -> list of (key, power, blocking) over the whole grid, unfiltered."""
    betas = parse_grid(args.beta_grid)
    budgets = parse_grid(args.budget_grid)
    if any(s in SOLVERS for s in solvers) and not betas:
        raise UsageError("--beta-grid is empty")
    if any(s in HEURISTICS for s in solvers) and not budgets:
        raise UsageError("--budget-grid is empty")
    if any(b < 0 for b in betas) or any(b < 0 for b in budgets):
        raise UsageError("grid values must be non-negative")
    res = {}
    for name in solvers:
        if name in SOLVERS:
            pts = tradeoff_sweep(scn, _dp_config(args, scn), betas, name, model, keep_all=True)
            res[name] = [(p.beta, p.avg_grid_power, p.weighted_blocking) for p in pts]
        else:
            res[name] = []
            for budget in budgets:
                sched = _heuristic(scn, name, args, budget, model)
                res[name].append((budget, sched.avg_grid_power, sched.weighted_blocking))
    return res


def cmd_sweep(args, scn: Scenario) -> int:
    run = Run(args, scn)
    model = BlockingModel(scn, args.backend)
    solvers = _expand_solvers(args.solver)
    fronts = _frontiers(args, scn, solvers, model)
    for name, pts in fronts.items():
        pf = _pareto(pts)
        key = "beta" if name in SOLVERS else "budget_W"
        path = run.write_csv(f"frontier_{name}.csv", "frontier", [key, "avg_grid_power_W", "weighted_blocking"], pf)
        ok = _monotone(pf)
        run.summary[name] = {"points": len(pf), "monotone": ok}
        print(f"{name}: {len(pf)} frontier points, power non-increasing in blocking: {ok} -> {path}")
    run.finish()
    return EXIT_OK


def _read_schedule(path: Path, scn: Scenario) -> List[NetworkAction]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if len(rows) != scn.T:
        raise ScenarioError("schedule", f"{path} has {len(rows)} slots, scenario has {scn.T}")
    try:
        return [
            NetworkAction.build(
                [int(r[f"s_{b}"]) for b in range(scn.B)],
                [int(r[f"n_{b}"]) for b in range(scn.B)],
                [float(r[f"phi_{b}"]) for b in range(scn.B)],
            )
            for r in rows
        ]
    except KeyError as exc:
        raise ScenarioError("schedule", f"{path} lacks column {exc}") from None


def cmd_simulate(args, scn: Scenario) -> int:
    if args.arrivals <= 0:
        raise UsageError("--arrivals must be positive")
    run = Run(args, scn, seeds=[args.seed])
    model = BlockingModel(scn, args.backend)
    actions = _read_schedule(Path(args.schedule), scn)
    sched = evaluate_schedule(scn, actions, 0.0, model)
    cfg = SimConfig(seed=args.seed, arrivals_target=args.arrivals, holding=args.holding)
    res = evaluate_policy_mc(scn, sched, cfg, model=model)
    rows = []
    it = iter(res.systems)
    for t, a in enumerate(actions):
        for b in range(scn.B):
            if not a.s[b]:
                continue
            has_traffic = any(
                scn.traffic[t][list(g.regions)].sum() > 0 for g in service_groups(scn, a.s) if g.bs == b
            )
            sys_ = next(it) if has_traffic else None
            rows.append([
                t, b, res.analytic_p_blk_b[t, b], res.p_blk_b[t, b], res.std_error_b[t, b],
                int(sys_.offered.sum()) if sys_ else 0, int(sys_.blocked.sum()) if sys_ else 0,
            ])
    path = run.write_csv(
        "empirical.csv", "empirical",
        ["t", "bs", "p_blk_analytic", "p_blk_empirical", "std_error", "offered", "blocked"], rows,
    )
    run.summary = {
        "weighted_blocking_analytic": res.analytic_weighted_blocking,
        "weighted_blocking_empirical": res.weighted_blocking,
        "std_error": res.weighted_std_error,
        "within_3_sigma": res.within(3.0),
        "avg_grid_power_W": res.avg_grid_power,
        "rng": res.rng,
    }
    run.finish()
    print(
        f"wrote {path}; weighted blocking analytic {res.analytic_weighted_blocking:.6g}, "
        f"empirical {res.weighted_blocking:.6g} +/- {res.weighted_std_error:.2g} (1 s.e.), "
        f"within 3 s.e.: {res.within(3.0)}"
    )
    return EXIT_OK


def cmd_compare(args, scn: Scenario) -> int:
    run = Run(args, scn)
    model = BlockingModel(scn, args.backend)
    solvers = ["first_stage", "two_stage"]
    if scn.B == 1 or args.with_optimal:
        solvers.append("optimal")
    fronts = _frontiers(args, scn, solvers + list(HEURISTICS), model)
    targets = parse_grid(args.targets)
    if not targets:
        raise UsageError("--targets is empty")

    def as_points(name):
        return pareto_filter([TradeoffPoint(k, p, b) for k, p, b in fronts[name]])

    dp_front = {name: as_points(name) for name in solvers}
    rows = []
    for target in targets:
        base = frontier_power_at(dp_front["first_stage"], target)
        for name in fronts:
            pt = frontier_power_at(as_points(name), target)
            if pt is None:
                rows.append([target, name, math.nan, math.nan, math.nan])
                continue
            ratio = pt.avg_grid_power / base.avg_grid_power if base and base.avg_grid_power > 0 else math.nan
            rows.append([target, name, pt.avg_grid_power, pt.weighted_blocking, ratio])
    p1 = run.write_csv(
        "compare_targets.csv", "compare",
        ["p_target", "policy", "avg_grid_power_W", "weighted_blocking", "ratio_to_first_stage"], rows,
    )

    ref = "optimal" if "optimal" in dp_front else "two_stage"
    drows = []
    violations = 0
    for name in HEURISTICS:
        for budget, power, blk in fronts[name]:
            f = frontier_blocking_at(dp_front["two_stage"], power)
            if f is None:
                continue
            dominated = blk >= f - 1e-9
            violations += not dominated
            drows.append([name, "two_stage", budget, power, blk, f, int(dominated)])
    if ref == "optimal":
        for _, power, blk in fronts["two_stage"]:
            f = frontier_blocking_at(dp_front["optimal"], power)
            if f is not None:
                dominated = blk >= f - 1e-9
                violations += not dominated
                drows.append(["two_stage", "optimal", math.nan, power, blk, f, int(dominated)])
    p2 = run.write_csv(
        "compare_dominance.csv", "dominance",
        ["policy", "reference", "budget_W", "avg_grid_power_W", "weighted_blocking", "reference_blocking", "dominated"],
        drows,
    )
    run.summary = {"dominance_violations": violations, "matched_points": len(drows)}
    run.finish()
    print(f"wrote {p1} and {p2}; {violations} dominance violations over {len(drows)} matched points")
    return EXIT_OK


COMMANDS = {
    "blocking": cmd_blocking,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scn = load_scenario(args.scenario)
        if args.weights_exponent is not None:
            scn = scn.with_weights_exponent(args.weights_exponent)
        return COMMANDS[args.command](args, scn)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"greencell: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StateCapExceeded, StateSpaceTooLarge) as exc:
        print(f"greencell: resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except FileNotFoundError as exc:
        print(f"greencell: file not found: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ScenarioError, ValueError) as exc:
        print(f"greencell: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
