from pathlib import Path

import numpy as np
import pytest

from spats import io, protocol, sim
from spats import decompose as dec

DATA = Path(io.__file__).parent / "data"
LEADER = [0.0, 1.0, 0.0, 0.5]
FOLLOWERS = [[0.0, -0.5, 0.0, 1.0], [0.0, 2.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def cont_model():
    return io.parse_model(DATA / "aircraft_continuous.json").model


@pytest.fixture(scope="session")
def disc_model():
    return io.parse_model(DATA / "aircraft_discrete.json").model


@pytest.fixture(scope="session")
def graph():
    return io.parse_graph(DATA / "formation_graph.json")


@pytest.fixture(scope="session")
def reference():
    return io.load_json(DATA / "reference.json")


@pytest.fixture(scope="session")
def cont_decomp(cont_model):
    return dec.decompose(cont_model)


@pytest.fixture(scope="session")
def disc_decomp(disc_model):
    return dec.decompose(disc_model)


@pytest.fixture(scope="session")
def cont_gains(cont_decomp, graph):
    w = protocol.default_weights(dec.CONTINUOUS, 2, 2, 2)
    return protocol.synthesize_continuous(cont_decomp, graph, w["Q_s"], w["Q_f"], w["R_s"], w["R_f"], c=0.5)


@pytest.fixture(scope="session")
def disc_gains(disc_decomp, graph):
    w = protocol.default_weights(dec.DISCRETE, 2, 2, 2)
    return protocol.synthesize_discrete(disc_decomp, graph, w["Q_s"], w["Q_f"], c_s=12 / 7, c_f=12 / 7)


@pytest.fixture(scope="session")
def make_scenario(cont_model, disc_model, cont_decomp, disc_decomp, graph, cont_gains, disc_gains):
    def make(kind, leader=LEADER, followers=FOLLOWERS, horizon=None, step=None):
        if kind == dec.CONTINUOUS:
            return sim.Scenario(cont_model, cont_decomp, graph, cont_gains, leader, followers, horizon, step)
        return sim.Scenario(disc_model, disc_decomp, graph, disc_gains, leader, followers, horizon)
    return make


def random_stable(rng, n, shift=1.0):
    A = rng.standard_normal((n, n))
    return A - (np.abs(np.linalg.eigvals(A).real).max() + shift) * np.eye(n)
