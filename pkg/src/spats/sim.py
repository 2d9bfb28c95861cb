"""Leader/follower closed-loop simulation.

Continuous scenarios are integrated with classical fixed-step RK4 on the
stacked state ``[x0; x1; ...; xN]``; every stage re-evaluates the
neighbourhood errors, so the integrated system is exactly the linear
time-invariant closed loop. Discrete scenarios iterate the difference
equations directly.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import protocol
from .decompose import CONTINUOUS, DISCRETE
from .errors import DimensionMismatch, Divergence, InputError, StepTooLarge

DEFAULT_HORIZON = {CONTINUOUS: 60.0, DISCRETE: 100}
MAX_STEP = 0.01
RK4_SAFE = 2.5
DIVERGENCE_LIMIT = 1e9


@dataclass
class Scenario:
    model: object
    decomp: object
    graph: object
    gains: object
    leader_init: np.ndarray
    follower_inits: np.ndarray
    horizon: float = None
    step: float = None

    def __post_init__(self):
        n = self.model.n1 + self.model.n2
        self.leader_init = np.asarray(self.leader_init, dtype=float).ravel()
        inits = np.asarray(self.follower_inits, dtype=float)
        if inits.size == 0:
            raise InputError("scenario needs at least one follower")
        self.follower_inits = np.atleast_2d(inits)
        if self.leader_init.shape != (n,) or self.follower_inits.shape[1] != n:
            raise DimensionMismatch(f"initial states must have {n} entries")
        if self.follower_inits.shape[0] != self.graph.n_agents:
            raise DimensionMismatch(
                f"{self.follower_inits.shape[0]} follower states for a graph of {self.graph.n_agents} agents")
        if self.gains.kind != self.model.kind or self.decomp.kind != self.model.kind:
            raise InputError("model, decomposition and gains must share one kind")
        if self.horizon is None:
            self.horizon = DEFAULT_HORIZON[self.model.kind]
        if self.horizon <= 0:
            raise InputError("horizon must be positive")
        if self.step is not None and self.step <= 0:
            raise InputError("step must be positive")

    @property
    def kind(self):
        return self.model.kind

    def initial_stack(self):
        return np.vstack([self.leader_init, self.follower_inits])


@dataclass
class TrajectoryLog:
    """Sampled trajectories; agent axis runs over followers only.

    Shapes: ``times (K,)``, ``leader_states (K, n)``, ``follower_states
    (K, N, n)``, ``controls (K, N, m)``, ``error_norms (K, N)``.
    """

    times: np.ndarray
    leader_states: np.ndarray
    follower_states: np.ndarray
    controls: np.ndarray
    error_norms: np.ndarray


@dataclass
class ConvergenceMetrics:
    final_error: np.ndarray
    settling_time: list
    synchronized: bool
    threshold: float


def transform_states(decomp, x1, x2):
    """``(x_s, x_f)`` of the original coordinates ``(x1, x2)``."""
    return decomp.transform(x1, x2)


def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def leader_step(model, state, dt=None):
    """Advance the autonomous leader by one step (RK4 for continuous plants)."""
    A, _ = model.full_matrices()
    x = np.asarray(state, dtype=float)
    if x.shape != (A.shape[0],):
        raise DimensionMismatch(f"leader state must have {A.shape[0]} entries")
    if model.kind == DISCRETE:
        return A @ x
    if dt is None or dt <= 0:
        raise InputError("continuous leader step needs a positive dt")
    return _rk4(lambda v: A @ v, x, dt)


def _subsystem_errors(scn, Z):
    n1 = scn.model.n1
    xs, xf = scn.decomp.transform(Z[:, :n1], Z[:, n1:])
    e_s = protocol.neighborhood_errors(scn.graph, xs[1:], xs[0])
    e_f = protocol.neighborhood_errors(scn.graph, xf[1:], xf[0])
    return e_s, e_f


def follower_controls(scn, Z):
    """Control of every follower for the stacked state ``Z`` (leader in row 0)."""
    e_s, e_f = _subsystem_errors(scn, Z)
    if scn.kind == CONTINUOUS:
        return protocol.control_continuous(scn.gains, e_s, e_f)
    return np.array([protocol.control_discrete(scn.gains, scn.graph, i, e_s[i], e_f[i])
                     for i in range(scn.graph.n_agents)])


def _vector_field(scn):
    A, B = scn.model.full_matrices()

    def f(Z):
        dZ = Z @ A.T
        dZ[1:] += follower_controls(scn, Z) @ B.T
        return dZ

    return f


def _basis_map(scn, g):
    # matrix of a linear function of the stacked state, one basis vector at a time
    shape = (scn.graph.n_agents + 1, scn.model.n1 + scn.model.n2)
    size = shape[0] * shape[1]
    eye = np.eye(size)
    return np.column_stack([np.ravel(g(eye[k].reshape(shape))) for k in range(size)])


def closed_loop_matrix(scn):
    """Matrix of the stacked closed loop (derivative or one-step map).

    Built column by column from the same protocol functions the simulator
    uses, so it is exact for the implemented protocol.
    """
    A, B = scn.model.full_matrices()
    f = _vector_field(scn) if scn.kind == CONTINUOUS else (lambda Z: _discrete_update(scn, A, B, Z))
    return _basis_map(scn, f)


def control_matrix(scn):
    """Matrix taking the flattened stacked state to the flattened follower controls."""
    return _basis_map(scn, lambda Z: follower_controls(scn, Z))


def default_step(scn):
    """``min(0.01, 2.5 / rho)`` with ``rho`` the spectral radius of the closed loop."""
    rho = np.abs(np.linalg.eigvals(closed_loop_matrix(scn))).max()
    return MAX_STEP if rho == 0 else min(MAX_STEP, RK4_SAFE / rho)


def _record(Z, U):
    err = np.abs(Z[1:] - Z[0]).max(axis=1)
    return Z[0].copy(), Z[1:].copy(), U, err


def _guard(Z, t, exc):
    if not np.all(np.isfinite(Z)) or np.abs(Z).max() > DIVERGENCE_LIMIT:
        raise exc(f"state norm exceeded {DIVERGENCE_LIMIT:.0e} at t={t:g}")


def _pack(times, rows):
    leader, followers, controls, errors = (np.array(col) for col in zip(*rows))
    return TrajectoryLog(np.asarray(times, dtype=float), leader, followers, controls, errors)


def _run(scn, n_steps, h, advance, exc):
    # advance(z) -> next flattened stacked state; controls come from the linear control map
    G = control_matrix(scn)
    Z0 = scn.initial_stack()
    shape, m = Z0.shape, scn.model.m
    z = Z0.ravel()
    times, rows = [], []
    for k in range(n_steps + 1):
        Z = z.reshape(shape)
        times.append(k * h)
        rows.append(_record(Z, (G @ z).reshape(-1, m)))
        if k < n_steps:
            z = advance(z)
            _guard(z, (k + 1) * h, exc)
    return _pack(times, rows)


def simulate_continuous(scn):
    """Fixed-step RK4 run of the continuous leader/follower closed loop.

    The step defaults to :func:`default_step`; the horizon is split into
    equal steps no longer than the requested one. Stage derivatives use the
    closed-loop matrix, so neighbourhood errors enter every stage.

    Raises
    ------
    StepTooLarge
        If any state entry leaves ``[-1e9, 1e9]``.
    """
    if scn.kind != CONTINUOUS:
        raise InputError("simulate_continuous needs a continuous scenario")
    step = scn.step if scn.step is not None else default_step(scn)
    n_steps = max(1, math.ceil(scn.horizon / step - 1e-9))
    h = scn.horizon / n_steps
    F = closed_loop_matrix(scn)
    return _run(scn, n_steps, h, lambda z: _rk4(F.dot, z, h), StepTooLarge)


def _discrete_update(scn, A, B, Z):
    Zn = Z @ A.T
    Zn[1:] += follower_controls(scn, Z) @ B.T
    return Zn


def simulate_discrete(scn):
    """Iterate the discrete closed loop for ``horizon`` steps."""
    if scn.kind != DISCRETE:
        raise InputError("simulate_discrete needs a discrete scenario")
    steps = int(scn.horizon)
    if steps != scn.horizon:
        raise InputError("discrete horizon must be a whole number of steps")
    F = closed_loop_matrix(scn)
    return _run(scn, steps, 1, F.dot, Divergence)


def simulate(scn):
    return simulate_continuous(scn) if scn.kind == CONTINUOUS else simulate_discrete(scn)


def compute_metrics(log, threshold):
    """Final errors, per-agent settling times and the synchronization verdict.

    The settling time of an agent is the first sample time after which its
    error norm stays below ``threshold``; ``None`` if it never settles.
    """
    errs = np.asarray(log.error_norms)
    if errs.shape[0] == 0:
        raise InputError("empty trajectory log")
    settling = []
    for i in range(errs.shape[1]):
        above = np.nonzero(errs[:, i] >= threshold)[0]
        if above.size == 0:
            settling.append(float(log.times[0]))
        elif above[-1] == errs.shape[0] - 1:
            settling.append(None)
        else:
            settling.append(float(log.times[above[-1] + 1]))
    final = errs[-1].copy()
    return ConvergenceMetrics(final, settling, bool(np.all(final < threshold)), threshold)
