import math

import numpy as np
import pytest

from greencell.heuristics import (
    HeuristicConfig,
    ThresholdPolicy,
    budget_sweep,
    heuristic_slot_energy,
    run_heuristic,
    threshold_onoff,
    traffic_aware_n,
    traffic_energy_aware_n,
)
from greencell.scenario import PowerConstants

PC = PowerConstants()


def test_traffic_aware_examples():
    assert traffic_aware_n(5.0, 0.18, 600) == 540
    assert traffic_aware_n(0.0, 0.18, 600) == 0
    assert traffic_aware_n(50.0, 0.18, 600) == 600


def test_energy_aware_example():
    # energy exactly covers one full-power hour: ratio 1
    assert traffic_energy_aware_n(5.0, 0.26, 1000.0, 0.0, 350.6, 1.0, 1.0, PC, 600) == 600


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0, 3.3])
def test_energy_aware_reduces_to_traffic_aware(rho):
    remaining, L = 5.0, 1.0
    e = remaining * PC.full_power - L * 100.0
    got = traffic_energy_aware_n(rho, 0.26, e, 0.0, 100.0, L, remaining, PC, 600)
    assert got == traffic_aware_n(rho, 0.26, 600)


def test_energy_aware_no_time_left():
    assert traffic_energy_aware_n(5.0, 0.26, 1e4, 0.0, 0.0, 1.0, 0.0, PC, 600) == 0


def test_slot_energy_deficit():
    out = heuristic_slot_energy(300.0, 1e6, 500.0, 600, PC, 1.0)
    assert out.p_g == pytest.approx(550.6)
    assert out.phi == 0.0
    assert out.e_b == 0.0
    assert out.e_g == pytest.approx(1e6 - 550.6)


def test_slot_energy_midpoint():
    half = (PC.full_power + PC.p_s) / 2.0
    out = heuristic_slot_energy(0.0, 0.0, half, 600, PC, 1.0)
    assert out.p_g == 0.0
    assert out.phi == pytest.approx(0.5)


def test_slot_energy_forced_sleep():
    out = heuristic_slot_energy(0.0, 0.0, 0.0, 600, PC, 1.0)
    assert out.forced_sleep and out.phi == 1.0 and out.p_g == 0.0
    partial = heuristic_slot_energy(10.0, 0.0, 20.0, 600, PC, 1.0)
    assert partial.forced_sleep and partial.consumption == pytest.approx(30.0) and partial.e_b == 0.0


def test_slot_energy_surplus_is_stored():
    out = heuristic_slot_energy(0.0, 0.0, 2000.0, 600, PC, 1.0)
    assert out.p_g == 0.0 and out.phi == 0.0
    assert out.e_b == pytest.approx(2000.0 - PC.full_power)


def test_threshold_policy_validation():
    with pytest.raises(ValueError):
        ThresholdPolicy((3.0, 3.0), ((1, 0, 0), (1, 1, 0)))
    with pytest.raises(ValueError):
        ThresholdPolicy((3.0,), ((0, 0, 0),))
    with pytest.raises(ValueError):
        ThresholdPolicy((3.0,), ())


def test_threshold_bands(three_sector):
    pol = ThresholdPolicy.from_scenario(three_sector)
    heavy = pol.patterns[0]
    assert sum(heavy) == 1 and heavy[2] == 1  # sector 3 carries psi = 3/6
    assert pol.patterns[1] == (0, 1, 1)
    assert threshold_onoff(1.0, pol, 3) == heavy
    assert threshold_onoff(3.0, pol, 3) == heavy
    assert threshold_onoff(4.5, pol, 3) == (0, 1, 1)
    assert threshold_onoff(6.0, pol, 3) == (0, 1, 1)
    assert threshold_onoff(6.01, pol, 3) == (1, 1, 1)


def test_non_sleep_max_util_infinite_budget(single_cell, single_model):
    s = run_heuristic(single_cell, "non_sleep", "max_util", HeuristicConfig(), model=single_model)
    assert all(a.phi == (0.0,) and a.n == (600,) for a in s.actions)
    for t, a in enumerate(s.actions):
        rep = single_model.report(a, single_cell.traffic[t], single_cell.weights[t])
        assert rep.p_blk_b[0] == pytest.approx(rep.p_sv_b[0])


def test_starvation(single_cell, single_model):
    scn = single_cell.replace(harvest=np.zeros_like(single_cell.harvest))
    s = run_heuristic(scn, "non_sleep", "max_util", HeuristicConfig(grid_budget_per_bs=0.0), model=single_model)
    assert s.avg_grid_power == 0.0
    assert all(a.phi == (1.0,) for a in s.actions)
    assert all(r.p_blk_b[0] == 1.0 for r in s.blocking if r.p_blk_b.size)


@pytest.mark.parametrize("budget", [0.0, 200.0, 700.0, 1500.0])
@pytest.mark.parametrize("n_policy", ["max_util", "traffic_aware", "traffic_energy_aware"])
def test_budget_respected(three_sector, three_model, budget, n_policy):
    s = run_heuristic(three_sector, "non_sleep", n_policy, HeuristicConfig(grid_budget_per_bs=budget), model=three_model)
    L = three_sector.slot_lengths
    drawn = (L[:, None] * s.grid_power).sum(axis=0)
    assert (drawn <= budget * L.sum() + 1e-6).all()
    assert (s.grid_power >= 0).all() and (s.battery >= -1e-9).all()


def test_threshold_sleeps_at_night(three_sector, three_model):
    s = run_heuristic(three_sector, "threshold", "traffic_energy_aware", model=three_model)
    active = np.array([sum(a.s) for a in s.actions])
    load = three_sector.traffic.sum(axis=(1, 2))
    assert active[np.argmin(load)] < active[np.argmax(load)]
    assert active[np.argmax(load)] == 3


def test_budget_sweep_monotone_power(single_cell, single_model):
    pts = budget_sweep(single_cell, [0, 300, 600, 1400], model=single_model)
    power = [p.avg_grid_power for p in pts]
    assert all(b >= a - 1e-9 for a, b in zip(power, power[1:]))
    assert pts[0].avg_grid_power == 0.0


def test_unknown_policy(single_cell):
    with pytest.raises(ValueError):
        run_heuristic(single_cell, "sometimes")
    with pytest.raises(ValueError):
        run_heuristic(single_cell, "non_sleep", "greedy")
