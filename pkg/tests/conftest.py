import itertools
import math

import numpy as np
import pytest

from greencell.blocking import BlockingModel
from greencell.profiles import single_cell_doc
from greencell.scenario import load_scenario, scenario_from_dict


@pytest.fixture(scope="session")
def single_cell():
    return load_scenario("single_cell")


@pytest.fixture(scope="session")
def three_sector():
    return load_scenario("three_sector")


@pytest.fixture(scope="session")
def three_sector_sym():
    return load_scenario("three_sector_symmetric")


@pytest.fixture(scope="session")
def single_model(single_cell):
    return BlockingModel(single_cell)


@pytest.fixture(scope="session")
def three_model(three_sector):
    return BlockingModel(three_sector)


# ---------------------------------------------------------------------------
# independent oracles


def erlang_b(c: int, a: float) -> float:
    """Classical Erlang-B via the stable recursion B(k) = aB(k-1) / (k + aB(k-1))."""
    b = 1.0
    for k in range(1, c + 1):
        b = a * b / (k + a * b)
    return b


def brute_loss_blocking(phi, rho):
    """Per-class blocking by listing every admissible user vector."""
    phi = [float(x) for x in phi]
    caps = [int(math.floor(1.0 / p)) + 1 for p in phi]
    states, weights = [], []
    for u in itertools.product(*[range(c + 1) for c in caps]):
        z = sum(ui * pi for ui, pi in zip(u, phi))
        if z < 1.0:
            w = 1.0
            for ui, ri in zip(u, rho):
                w *= ri**ui / math.factorial(ui)
            states.append(z)
            weights.append(w)
    total = sum(weights)
    return [sum(w for z, w in zip(states, weights) if z + p >= 1.0) / total for p in phi]


def tiny_scenario(rng, T=3, B=1, samples=128, K=1):
    """Small random scenario: one macro site split into an inner disk and outer ring."""
    doc = single_cell_doc(T=T)
    doc["sample_points"] = samples
    if B == 2:
        doc["base_stations"] = [{"id": "a", "position": [-250.0, 0.0]}, {"id": "b", "position": [250.0, 0.0]}]
        doc["regions"] = [
            {"id": "west", "shape": "sector", "center": [0.0, 0.0], "r_in": 0.0, "r_out": 1000.0, "theta": [90.0, 270.0]},
            {"id": "east", "shape": "sector", "center": [0.0, 0.0], "r_in": 0.0, "r_out": 1000.0, "theta": [-90.0, 90.0]},
        ]
        doc["association"] = {}
    doc["classes"] = [{"rate_req": float(r), "mu": 1.0} for r in rng.uniform(1e6, 4e6, K)]
    doc["traffic"] = {"rho": rng.uniform(0.0, 5.0 / K, (T, 2, K)).tolist()}
    doc["harvest"] = {"p_h": rng.uniform(0.0, 1500.0, (T, B)).tolist()}
    doc["slots"] = {"lengths": rng.uniform(0.5, 2.0, T).tolist()}
    doc["weights"] = {"exponent": float(rng.integers(0, 3))}
    return scenario_from_dict(doc)
