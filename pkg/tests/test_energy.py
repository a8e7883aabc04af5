import numpy as np
import pytest

from greencell.energy import (
    BatteryState,
    average_power,
    required_grid_power,
    sleep_ratio_from_input,
    step_battery,
)
from greencell.scenario import NetworkAction, PowerConstants

PC = PowerConstants()
FULL = NetworkAction.full((1,), 600)


def test_sleep_ratio_bounds():
    assert sleep_ratio_from_input(1350.6, 1350.6, 50.0) == 0.0
    assert sleep_ratio_from_input(1350.6, 2000.0, 50.0) == 0.0
    assert sleep_ratio_from_input(1350.6, 50.0, 50.0) == pytest.approx(1.0)
    assert sleep_ratio_from_input(1350.6, 700.3, 50.0) == pytest.approx(0.5)


def test_sleep_ratio_below_sleep_power():
    with pytest.raises(ValueError):
        sleep_ratio_from_input(1350.6, 40.0, 50.0)


def test_grid_zero_when_covered():
    assert required_grid_power(1000.0, 400.0, 1, 600, 0.0, PC, 1.0) == 0.0


def test_grid_deficit():
    assert required_grid_power(300.0, 500.0, 1, 600, 0.0, PC, 1.0) == pytest.approx(550.6)


def test_grid_zero_when_off():
    assert required_grid_power(0.0, 0.0, 0, 0, 1.0, PC, 1.0) == 0.0


def test_average_power_with_sleep():
    assert average_power(PC, 1, 600, 0.5) == pytest.approx(0.5 * 1350.6 + 0.5 * 50.0)


def test_step_harvest_only_when_off():
    a = NetworkAction.build((0,), (0,), (1,))
    out = step_battery(BatteryState(np.array([10.0])), a, np.array([300.0]), PC, 2.0)
    assert out.next.e_c[0] == pytest.approx(610.0)
    assert out.p_g[0] == 0.0


def test_step_deficit_empties_battery():
    out = step_battery(BatteryState(np.array([300.0])), FULL, np.array([500.0]), PC, 1.0)
    assert out.p_g[0] == pytest.approx(550.6)
    assert out.next.e_c[0] == 0.0


def test_step_cold_start_full_power():
    out = step_battery(BatteryState.empty(1), FULL, np.array([0.0]), PC, 1.0)
    assert out.p_g[0] == pytest.approx(1350.6)
    assert out.next.e_c[0] == 0.0


def test_battery_state_validation():
    with pytest.raises(ValueError):
        BatteryState(np.array([-1.0]))
    with pytest.raises(ValueError):
        BatteryState(np.array([np.inf]))


def test_step_properties_randomized():
    rng = np.random.default_rng(11)
    for _ in range(500):
        B = int(rng.integers(1, 4))
        s = rng.integers(0, 2, B)
        a = NetworkAction.build(s, rng.integers(0, 601, B), rng.uniform(0, 0.99, B))
        e = rng.exponential(500.0, B) * rng.integers(0, 2, B)
        ph = rng.uniform(0, 1500, B) * rng.integers(0, 2, B)
        L = float(rng.uniform(0.25, 3.0))
        out = step_battery(BatteryState(e), a, ph, PC, L)
        # conservation
        np.testing.assert_allclose(out.next.e_c - e, L * (ph + out.p_g) - out.consumption, atol=1e-9)
        assert (out.p_g >= 0).all() and (out.next.e_c >= 0).all()
        # grid is the last resort
        assert (out.next.e_c[out.p_g > 0] == 0).all()
        # more stored energy never needs more grid
        more = step_battery(BatteryState(e + rng.uniform(0, 200, B)), a, ph, PC, L)
        assert (more.p_g <= out.p_g + 1e-12).all()
