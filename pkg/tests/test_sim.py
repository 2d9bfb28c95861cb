import numpy as np
import pytest
import scipy.linalg as spla
from hypothesis import given, settings, strategies as st

from spats import decompose as dec
from spats import sim
from spats.errors import DimensionMismatch, InputError, StepTooLarge

from conftest import FOLLOWERS, LEADER


def stacked_final(log):
    return np.concatenate([log.leader_states[-1], log.follower_states[-1].ravel()])


@pytest.mark.parametrize("kind", [dec.CONTINUOUS, dec.DISCRETE])
def test_manifold_invariance(make_scenario, kind):
    scn = make_scenario(kind, followers=np.tile(LEADER, (3, 1)), horizon=20.0 if kind == dec.CONTINUOUS else 100)
    log = sim.simulate(scn)
    assert log.error_norms.max() <= 1e-12 * (1 + np.linalg.norm(LEADER))
    assert np.abs(log.controls).max() <= 1e-12


def test_discrete_identical_inits_stay_synchronized(make_scenario):
    log = sim.simulate(make_scenario(dec.DISCRETE, followers=np.tile(LEADER, (3, 1)), horizon=100))
    assert log.times[-1] == 100 and log.error_norms.max() <= 1e-9


def test_leader_step_matches_exponential(cont_model, disc_model):
    A, _ = cont_model.full_matrices()
    x = np.array(LEADER)
    assert np.allclose(sim.leader_step(cont_model, x, 0.01), spla.expm(0.01 * A) @ x, atol=1e-12)
    Ad, _ = disc_model.full_matrices()
    assert np.array_equal(sim.leader_step(disc_model, x), Ad @ x)
    with pytest.raises(InputError):
        sim.leader_step(cont_model, x)


def test_leader_trajectory_is_autonomous(make_scenario):
    scn = make_scenario(dec.CONTINUOUS, horizon=2.0, step=0.002)
    log = sim.simulate(scn)
    A, _ = scn.model.full_matrices()
    assert np.allclose(log.leader_states[-1], spla.expm(2.0 * A) @ np.array(LEADER), atol=1e-10)


def test_rk4_fourth_order(make_scenario):
    errs = []
    for h in (0.004, 0.002):
        scn = make_scenario(dec.CONTINUOUS, horizon=2.0, step=h)
        exact = spla.expm(2.0 * sim.closed_loop_matrix(scn)) @ scn.initial_stack().ravel()
        errs.append(np.abs(stacked_final(sim.simulate(scn)) - exact).max())
    assert 12 <= errs[0] / errs[1] <= 20


def test_closed_loop_matrix_matches_vector_field(make_scenario):
    scn = make_scenario(dec.CONTINUOUS)
    Z = np.random.default_rng(0).standard_normal((4, 4))
    f = sim._vector_field(scn)
    assert np.allclose(sim.closed_loop_matrix(scn) @ Z.ravel(), f(Z).ravel(), atol=1e-12)


def test_large_step_diverges(make_scenario):
    with pytest.raises(StepTooLarge):
        sim.simulate(make_scenario(dec.CONTINUOUS, horizon=60.0, step=0.01))


def test_default_step_is_rk4_stable(make_scenario):
    scn = make_scenario(dec.CONTINUOUS)
    h = sim.default_step(scn)
    rho = np.abs(np.linalg.eigvals(sim.closed_loop_matrix(scn))).max()
    assert h == pytest.approx(2.5 / rho) and h < 0.01


def test_continuous_run_matches_exact_solution(make_scenario):
    scn = make_scenario(dec.CONTINUOUS, horizon=60.0)
    log = sim.simulate(scn)
    Z = spla.expm(60.0 * sim.closed_loop_matrix(scn)) @ scn.initial_stack().ravel()
    assert np.allclose(stacked_final(log), Z, atol=1e-8)


def test_long_continuous_run_synchronizes(make_scenario):
    log = sim.simulate(make_scenario(dec.CONTINUOUS, horizon=300.0))
    metrics = sim.compute_metrics(log, 1e-2)
    assert metrics.synchronized
    assert all(t is not None and t < 300.0 for t in metrics.settling_time)
    assert log.error_norms.max() > 1.0


def test_discrete_perturbation_decays_at_closed_loop_rate(make_scenario):
    followers = np.tile(LEADER, (3, 1))
    followers[:, 1] += 0.1
    scn = make_scenario(dec.DISCRETE, followers=followers, horizon=600)
    log = sim.simulate(scn)
    worst = log.error_norms.max(axis=1)
    assert worst[-1] < 1e-3 < worst[100]
    # the decay rate approaches the slowest synchronization mode of the closed loop
    F = sim.closed_loop_matrix(scn)
    A, _ = scn.model.full_matrices()
    # the manifold is invariant, so the errors x_i - x_0 evolve under the follower-follower block of F
    n = A.shape[0]
    E = F[n:, n:]
    rate = np.abs(np.linalg.eigvals(E)).max()
    observed = (worst[600] / worst[200]) ** (1 / 400)
    assert observed == pytest.approx(rate, abs=5e-3)


@settings(max_examples=10, deadline=None)
@given(st.floats(-50, 50).filter(lambda a: abs(a) > 1e-3), st.sampled_from([dec.CONTINUOUS, dec.DISCRETE]))
def test_linearity(make_scenario, alpha, kind):
    horizon = 5.0 if kind == dec.CONTINUOUS else 30
    base = sim.simulate(make_scenario(kind, horizon=horizon))
    scaled = sim.simulate(make_scenario(kind, alpha * np.array(LEADER), alpha * np.array(FOLLOWERS), horizon))
    ref = alpha * base.follower_states
    assert np.abs(scaled.follower_states - ref).max() <= 1e-10 * np.abs(ref).max()


def test_log_shapes(make_scenario):
    log = sim.simulate(make_scenario(dec.DISCRETE, horizon=10))
    assert log.times.shape == (11,)
    assert log.leader_states.shape == (11, 4)
    assert log.follower_states.shape == (11, 3, 4)
    assert log.controls.shape == (11, 3, 2)
    assert log.error_norms.shape == (11, 3)


def test_logged_controls_match_protocol(make_scenario):
    scn = make_scenario(dec.CONTINUOUS, horizon=1.0)
    log = sim.simulate(scn)
    Z = np.vstack([log.leader_states[-1], log.follower_states[-1]])
    assert np.allclose(log.controls[-1], sim.follower_controls(scn, Z), atol=1e-12)


def test_scenario_validation(make_scenario):
    with pytest.raises(InputError):
        make_scenario(dec.CONTINUOUS, followers=[])
    with pytest.raises(DimensionMismatch):
        make_scenario(dec.CONTINUOUS, followers=FOLLOWERS[:2])
    with pytest.raises(DimensionMismatch):
        make_scenario(dec.CONTINUOUS, leader=[0.0, 1.0])
    with pytest.raises(InputError):
        make_scenario(dec.CONTINUOUS, horizon=-1.0)
    with pytest.raises(InputError):
        sim.simulate(make_scenario(dec.DISCRETE, horizon=2.5))


def test_default_horizons(make_scenario):
    assert make_scenario(dec.CONTINUOUS).horizon == 60.0
    assert make_scenario(dec.DISCRETE).horizon == 100


def test_metrics():
    errs = np.array([[1.0, 1.0], [0.5, 0.001], [0.2, 0.002], [0.001, 0.0005]])
    log = sim.TrajectoryLog(np.arange(4.0), None, None, None, errs)
    m = sim.compute_metrics(log, 0.01)
    assert m.synchronized and m.settling_time == [3.0, 1.0]
    m = sim.compute_metrics(log, 0.0008)
    assert not m.synchronized and m.settling_time == [None, 3.0]
    with pytest.raises(InputError):
        sim.compute_metrics(sim.TrajectoryLog(np.zeros(0), None, None, None, np.zeros((0, 2))), 0.1)


def test_transform_states(cont_decomp):
    xs, xf = sim.transform_states(cont_decomp, np.ones(2), np.zeros(2))
    assert np.allclose(xf, cont_decomp.M @ np.ones(2))
