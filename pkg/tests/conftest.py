"""Shared fixtures: the two-variant Europe network and random valid models.

The Europe constants are written out independently of the shipped
scenario file so the config loader can be cross-checked against them.
"""

from __future__ import annotations

import numpy as np
import pytest

from sirnet.estimator import ObserverGain
from sirnet.model import NetworkModel, initial_state

BETA_OMICRON = np.array([
    [0.08, 0.15, 0.24, 0.00, 0.06],
    [0.15, 0.12, 0.13, 0.11, 0.00],
    [0.24, 0.13, 0.25, 0.05, 0.04],
    [0.00, 0.09, 0.05, 0.11, 0.15],
    [0.06, 0.00, 0.04, 0.14, 0.09],
])
BETA_DELTA = np.array([
    [0.02, 0.05, 0.04, 0.00, 0.01],
    [0.05, 0.06, 0.07, 0.02, 0.00],
    [0.04, 0.07, 0.04, 0.03, 0.05],
    [0.00, 0.03, 0.04, 0.09, 0.07],
    [0.01, 0.00, 0.05, 0.07, 0.06],
])
GAMMA_OMICRON = np.array([0.15, 0.23, 0.17, 0.25, 0.20])
GAMMA_DELTA = np.array([0.095, 0.12, 0.10, 0.15, 0.13])
C_OMICRON = np.full(5, 0.4)
C_DELTA = np.full(5, 0.3)
X0_OMICRON = np.array([0.005, 0.01, 0.0075, 0.0025, 0.0075])
X0_DELTA = np.array([0.001, 0.002, 0.0035, 0.002, 0.001])
NODES = ("FR", "IT", "CH", "AT", "DE")

# published observer gains and initial estimates for the Europe runs
GAIN_OMICRON = np.array([0.101223398722677, 0.0928658303375023,
                         0.112524328507691, 0.0860241631907317,
                         0.0843783515296357])
GAIN_DELTA = np.array([0.0853417070451051, 0.0879525432030855,
                       0.0898592088737154, 0.0885900881539504,
                       0.0897704274804431])
XHAT0_OMICRON = np.array([0.0037, 0.0075, 0.0056, 0.0019, 0.0056])
XHAT0_DELTA = np.array([0.0005, 0.001, 0.002, 0.001, 0.0005])


def europe_model(h: float = 1.0) -> NetworkModel:
    return NetworkModel(
        beta=np.array([BETA_OMICRON, BETA_DELTA]),
        gamma=np.array([GAMMA_OMICRON, GAMMA_DELTA]),
        c=np.array([C_OMICRON, C_DELTA]),
        h=h, node_labels=NODES)


@pytest.fixture(scope="session")
def europe():
    model = europe_model()
    return model, initial_state(model, np.array([X0_OMICRON, X0_DELTA]))


@pytest.fixture(scope="session")
def europe_gains():
    return ObserverGain(np.array([GAIN_OMICRON, GAIN_DELTA]))


@pytest.fixture(scope="session")
def europe_xhat0():
    return np.array([XHAT0_OMICRON, XHAT0_DELTA])


def make_random_model(rng: np.random.Generator, n_max: int = 6,
                      m_max: int = 3) -> tuple[NetworkModel, "EpidemicState"]:
    """Random model and state satisfying all four assumptions.

    The sampling step varies too; the rate scalings keep the per-node
    totals h * sum(rates) at most one regardless of the drawn h.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    h = float(rng.choice([0.25, 0.5, 1.0, 2.0]))
    beta = rng.random((m, n, n))
    total_out = beta.sum(axis=(0, 2)).max()
    beta *= rng.uniform(0.2, 0.99) / (h * total_out)
    gamma = rng.uniform(0.05, 1.0, (m, n))
    gamma *= rng.uniform(0.2, 0.99) / (h * gamma.sum(axis=0).max())
    c = rng.uniform(0.05, 1.0, (m, n))
    model = NetworkModel(beta=beta, gamma=gamma, c=c, h=h)

    x0 = rng.uniform(0.0, 0.5 / m, (m, n))
    r0 = rng.uniform(0.0, 0.2, n)
    state0 = initial_state(model, x0, r0)
    return model, state0
