from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as spla
from hypothesis import given, settings, strategies as st

from spats import decompose as dec
from spats import matlib, protocol
from spats.errors import (DimensionMismatch, Infeasible, InputError, LeaderUnreachable, NegativeWeight,
                          NonPositiveEigenvalue)


def test_formation_graph_matrices(graph, reference):
    ref = reference["graph"]
    assert np.array_equal(graph.laplacian, ref["laplacian"])
    assert np.array_equal(graph.degree, ref["degree"])
    assert np.array_equal(graph.pinning, ref["pinning"])
    assert matlib.matched_distance(graph.eig_laplacian_pinned(), [1, 1, 2]) <= 1e-12
    assert matlib.matched_distance(graph.eig_gamma(), [0.5, 0.5, 2 / 3]) <= 1e-12


def test_graph_is_read_only(graph):
    with pytest.raises(ValueError):
        graph.adjacency[0, 0] = 1.0


def test_coupling_bound_is_exact(graph):
    assert protocol.continuous_coupling_bound(graph) == 0.5


def test_unreachable_follower():
    # follower 2 is isolated and unpinned
    with pytest.raises(LeaderUnreachable):
        protocol.build_graph(np.zeros((3, 3)) + np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0]]), [1, 0, 0])


def test_reachable_through_chain():
    g = protocol.build_graph([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [1, 0, 0])
    assert g.n_agents == 3


def test_graph_validation():
    with pytest.raises(NegativeWeight):
        protocol.build_graph([[0, -1], [1, 0]], [1, 1])
    with pytest.raises(InputError):
        protocol.build_graph([[1, 0], [0, 0]], [1, 1])
    with pytest.raises(DimensionMismatch):
        protocol.build_graph([[0, 0], [0, 0]], [1, 1, 1])


def test_unpinned_graph_has_no_bound():
    g = protocol.CommGraph(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)))
    with pytest.raises(NonPositiveEigenvalue):
        protocol.continuous_coupling_bound(g)


def test_covering_radius_at_published_coupling(graph):
    assert protocol.covering_radius(graph, float(Fraction(12, 7))) == pytest.approx(1 / 12, abs=1e-12)


def test_selected_coupling_beats_grid(graph):
    c = protocol.select_discrete_coupling(graph, 1.0)
    assert c == pytest.approx(12 / 7, abs=1e-6)
    best = protocol.discrete_margin(graph, c)
    assert best == pytest.approx(1 / 7, abs=1e-9)
    grid = np.linspace(0.05, 10, 20001)
    brute = min(protocol.discrete_margin(graph, g) for g in grid)
    assert brute >= 1 / 7 - 1e-12
    assert best <= brute + 1e-9


def test_selection_infeasible(graph):
    with pytest.raises(Infeasible):
        protocol.select_discrete_coupling(graph, 0.1)


def test_continuous_gains_match_scipy(cont_decomp, cont_gains):
    for A, B, K in ((cont_decomp.A_s, cont_decomp.B_s, cont_gains.K_s),
                    (cont_decomp.A_f, cont_decomp.B_f, cont_gains.K_f)):
        R = 1e-3 * np.eye(2)
        P = spla.solve_continuous_are(A, B, np.eye(2), R)
        assert np.allclose(K, np.linalg.solve(R, B.T @ P), rtol=1e-6, atol=1e-9)


def test_continuous_gains_match_print(cont_gains, reference):
    ref = reference["continuous"]
    assert np.allclose(cont_gains.K_f, ref["K_f"], rtol=1e-2, atol=0)
    assert np.allclose(cont_gains.K_s, ref["K_s"], rtol=1e-2, atol=0)


def test_discrete_gains_and_radii(disc_gains, reference):
    ref = reference["discrete"]
    assert np.allclose(disc_gains.K_f, ref["K_f"], rtol=1e-2, atol=0)
    # three of four slow-gain entries agree with the print to 1 %
    rel = np.abs(disc_gains.K_s - ref["K_s"]) / np.abs(ref["K_s"])
    assert np.sort(rel.ravel())[2] <= 1e-2
    assert disc_gains.r_f == pytest.approx(1.001, abs=1e-3)
    assert disc_gains.r_s == pytest.approx(0.9981, abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_square_input_gives_deadbeat(seed):
    # with B invertible the cheap-control gain cancels A exactly
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    K, _ = protocol.gain_discrete(A, B, np.eye(3))
    assert np.abs(A - B @ K).max() <= 1e-8 * (1 + np.abs(A).max())


def test_stability_radius_of_zero_inner():
    assert protocol.stability_radius_discrete(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2)) == np.inf


def test_neighborhood_error(graph):
    X = np.array([[1.0, 2.0], [3.0, 5.0], [0.0, 0.0]])
    x0 = np.array([1.0, 1.0])
    E = protocol.neighborhood_errors(graph, X, x0)
    # follower 1 senses follower 0 and the leader
    assert np.array_equal(protocol.neighborhood_error(graph, X, x0, 1), (X[0] - X[1]) + (x0 - X[1]))
    for i in range(3):
        assert np.array_equal(E[i], protocol.neighborhood_error(graph, X, x0, i))


def test_errors_vanish_on_consensus(graph):
    x0 = np.array([0.3, -1.2, 4.0])
    assert not np.any(protocol.neighborhood_errors(graph, np.tile(x0, (3, 1)), x0))


def test_control_laws(cont_gains, disc_gains, graph):
    e_s, e_f = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    u = protocol.control_continuous(cont_gains, e_s, e_f)
    assert np.allclose(u, 0.5 * (cont_gains.K_s[:, 0] + 2 * cont_gains.K_f[:, 1]))
    u = protocol.control_discrete(disc_gains, graph, 2, e_s, e_f)
    c = 12 / 7
    assert np.allclose(u, (c * disc_gains.K_s[:, 0] + 2 * c * disc_gains.K_f[:, 1]) / 2)
    with pytest.raises(InputError):
        protocol.control_discrete(cont_gains, graph, 0, e_s, e_f)
    with pytest.raises(DimensionMismatch):
        protocol.control_continuous(cont_gains, np.ones(3), e_f)


def test_continuous_coupling_gate(cont_decomp, graph):
    w = protocol.default_weights(dec.CONTINUOUS, 2, 2, 2)
    args = (cont_decomp, graph, w["Q_s"], w["Q_f"], w["R_s"], w["R_f"])
    assert protocol.synthesize_continuous(*args).c == 0.5
    with pytest.raises(Infeasible):
        protocol.synthesize_continuous(*args, c=0.01)
    assert protocol.synthesize_continuous(*args, c=0.01, enforce=False).c == 0.01


def test_discrete_coupling_gate(disc_decomp, graph):
    w = protocol.default_weights(dec.DISCRETE, 2, 2, 2)
    with pytest.raises(Infeasible):
        protocol.synthesize_discrete(disc_decomp, graph, w["Q_s"], w["Q_f"], c_s=10.0, c_f=12 / 7)
    auto = protocol.synthesize_discrete(disc_decomp, graph, w["Q_s"], w["Q_f"])
    assert auto.c_s == pytest.approx(12 / 7, abs=1e-6) and auto.c_f == pytest.approx(12 / 7, abs=1e-6)


def test_certificates_at_published_couplings(cont_decomp, disc_decomp, graph, cont_gains, disc_gains):
    for decomp, gains in ((cont_decomp, cont_gains), (disc_decomp, disc_gains)):
        rows = protocol.certificate(decomp, graph, gains)
        assert len(rows) == 6 and all(r["stable"] for r in rows)
    c, (lam, *_) = 12 / 7, graph.eig_gamma()
    M = disc_decomp.A_s - c * lam * disc_decomp.B_s @ disc_gains.K_s
    row = protocol.certificate(disc_decomp, graph, disc_gains)[0]
    assert row["value"] == pytest.approx(np.abs(np.linalg.eigvals(M)).max())


def test_certificate_below_bound_still_hurwitz(cont_decomp, graph):
    # the bound is sufficient, not necessary: at c = 0.01 every mode is still stable
    w = protocol.default_weights(dec.CONTINUOUS, 2, 2, 2)
    gains = protocol.synthesize_continuous(cont_decomp, graph, w["Q_s"], w["Q_f"], w["R_s"], w["R_f"],
                                           c=0.01, enforce=False)
    rows = protocol.certificate(cont_decomp, graph, gains)
    for r in rows:
        A = cont_decomp.A_s if r["subsystem"] == "slow" else cont_decomp.A_f
        B = cont_decomp.B_s if r["subsystem"] == "slow" else cont_decomp.B_f
        K = gains.K_s if r["subsystem"] == "slow" else gains.K_f
        assert r["value"] == pytest.approx(np.linalg.eigvals(A - 0.01 * r["lambda"] * B @ K).real.max())
    assert all(r["stable"] for r in rows)
