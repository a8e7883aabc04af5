import numpy as np
import pytest
from conftest import brute_loss_blocking, erlang_b

from greencell.blocking import loss_system_blocking
from greencell.energy import BatteryState, step_battery
from greencell.montecarlo import SimConfig, evaluate_policy_mc, simulate_loss_system
from greencell.optimizer import DpConfig, optimal_dp


def test_erlang_b_reference():
    assert erlang_b(2, 1.0) == pytest.approx(0.2)
    assert brute_loss_blocking([0.4], [1.0])[0] == pytest.approx(0.2)


@pytest.mark.parametrize("holding", ["exponential", "deterministic"])
def test_single_class_matches_erlang(holding):
    res = simulate_loss_system([0.4], [1.0], SimConfig(seed=1, arrivals_target=200_000, holding=holding))
    assert res.contains(0.2, sigmas=3.0).all()
    assert res.offered.sum() == 180_000


@pytest.mark.parametrize("holding", ["exponential", "deterministic"])
def test_two_class_matches_enumeration(holding):
    phi, rho = [0.5, 0.25], [1.0, 1.0]
    want = loss_system_blocking(phi, rho)
    np.testing.assert_allclose(want, brute_loss_blocking(phi, rho), atol=1e-12)
    res = simulate_loss_system(phi, rho, SimConfig(seed=2, arrivals_target=200_000, holding=holding))
    assert res.contains(want, sigmas=3.0).all()


def test_zero_load():
    res = simulate_loss_system([0.3], [0.0])
    assert res.offered.sum() == 0 and res.blocked.sum() == 0
    assert res.estimate[0] == 0.0


def test_infinite_requirement_blocks_everything():
    res = simulate_loss_system([np.inf, 0.2], [1.0, 1.0], SimConfig(arrivals_target=20_000))
    assert res.estimate[0] == 1.0
    assert res.estimate[1] < 1.0


def test_full_sleep_blocks_everything():
    res = simulate_loss_system([0.1], [2.0], SimConfig(arrivals_target=20_000), sleep_ratio=1.0)
    assert res.estimate[0] == 1.0


def test_sleep_thinning():
    # sleep blocks first, then the remaining (1-phi) load sees Erlang-B
    phi = 0.3
    want = 1 - (1 - phi) * (1 - erlang_b(2, 0.7))
    res = simulate_loss_system([0.4], [1.0], SimConfig(seed=4, arrivals_target=200_000), sleep_ratio=phi)
    assert res.contains(want, sigmas=3.0).all()


def test_reproducible():
    cfg = SimConfig(seed=7, arrivals_target=30_000)
    a = simulate_loss_system([0.5, 0.25], [1.0, 1.0], cfg)
    b = simulate_loss_system([0.5, 0.25], [1.0, 1.0], cfg)
    np.testing.assert_array_equal(a.blocked, b.blocked)
    c = simulate_loss_system([0.5, 0.25], [1.0, 1.0], SimConfig(seed=8, arrivals_target=30_000))
    assert not np.array_equal(a.blocked, c.blocked)


def test_confidence_interval_calibration():
    inside = 0
    for seed in range(100):
        res = simulate_loss_system([0.4], [1.0], SimConfig(seed=seed, arrivals_target=20_000))
        inside += bool(res.contains(0.2)[0])
    assert inside >= 88


def test_config_validation():
    for bad in (dict(arrivals_target=0), dict(batches=1), dict(holding="pareto"), dict(confidence=1.0)):
        with pytest.raises(ValueError):
            SimConfig(**bad)
    with pytest.raises(ValueError):
        simulate_loss_system([0.4], [1.0, 1.0])


def test_policy_mc_single_cell(single_cell, single_model):
    sched = optimal_dp(single_cell, DpConfig(beta=2000.0, n_levels=(0, 150, 300, 450, 600)), single_model)
    res = evaluate_policy_mc(single_cell, sched, SimConfig(seed=3, arrivals_target=300_000), model=single_model)
    assert res.within(3.0)
    assert res.avg_grid_power == pytest.approx(sched.avg_grid_power, abs=1e-9)
    state = BatteryState.empty(1)
    for t, a in enumerate(sched.actions):
        out = step_battery(state, a, single_cell.harvest[t], single_cell.power, single_cell.slot_lengths[t])
        np.testing.assert_allclose(res.grid_power[t], out.p_g, atol=1e-9)
        state = out.next


def test_policy_mc_energy_path(three_sector, three_model):
    from greencell.heuristics import HeuristicConfig, run_heuristic

    sched = run_heuristic(three_sector, "threshold", "max_util", HeuristicConfig(grid_budget_per_bs=600.0), model=three_model)
    res = evaluate_policy_mc(three_sector, sched, SimConfig(seed=5, arrivals_target=50_000), model=three_model)
    np.testing.assert_allclose(res.grid_power, sched.grid_power, atol=1e-6)
    for t, a in enumerate(sched.actions):
        for b in range(three_sector.B):
            assert np.isnan(res.p_blk_b[t, b]) == (not a.s[b])
