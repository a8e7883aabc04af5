"""Sleep control and subcarrier allocation for renewable-powered base stations."""

from .blocking import (
    BlockingCurve,
    BlockingModel,
    BlockingReport,
    blocking_curve,
    loss_system_blocking,
    overall_blocking,
    slot_blocking_report,
)
from .energy import BatteryState, required_grid_power, sleep_ratio_from_input, step_battery
from .heuristics import HeuristicConfig, ThresholdPolicy, budget_sweep, run_heuristic
from .montecarlo import SimConfig, evaluate_policy_mc, simulate_loss_system
from .optimizer import (
    DpConfig,
    PolicySchedule,
    TradeoffPoint,
    first_stage_dp,
    optimal_dp,
    second_stage_iterate,
    solve,
    tradeoff_sweep,
    two_stage,
)
from .scenario import NetworkAction, Scenario, ScenarioError, association_map, bs_power, load_scenario

__version__ = "0.1.0"

__all__ = [
    "BlockingCurve",
    "blocking_curve",
    "BatteryState",
    "BlockingModel",
    "BlockingReport",
    "DpConfig",
    "HeuristicConfig",
    "NetworkAction",
    "PolicySchedule",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "ThresholdPolicy",
    "TradeoffPoint",
    "association_map",
    "bs_power",
    "budget_sweep",
    "evaluate_policy_mc",
    "first_stage_dp",
    "load_scenario",
    "loss_system_blocking",
    "optimal_dp",
    "overall_blocking",
    "required_grid_power",
    "run_heuristic",
    "second_stage_iterate",
    "simulate_loss_system",
    "sleep_ratio_from_input",
    "slot_blocking_report",
    "solve",
    "step_battery",
    "tradeoff_sweep",
    "two_stage",
]
