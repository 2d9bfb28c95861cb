"""Communication graphs, per-subsystem gain synthesis and local control laws.

Followers are indexed ``0 .. N-1``; the leader is not a node of the graph
and only enters through the pinning gains.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import breadth_first_order

from . import matlib
from .decompose import CONTINUOUS, DISCRETE
from .errors import (
    DimensionMismatch,
    Infeasible,
    InputError,
    LeaderUnreachable,
    NegativeWeight,
    NonPositiveEigenvalue,
)

CONTINUOUS_R_SCALE = 1e-3


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CommGraph:
    adjacency: np.ndarray
    pinning: np.ndarray
    laplacian: np.ndarray
    degree: np.ndarray
    gamma: np.ndarray

    @property
    def n_agents(self):
        return self.adjacency.shape[0]

    @property
    def pinning_matrix(self):
        return np.diag(self.pinning)

    def eig_laplacian_pinned(self):
        return matlib.eigvals(self.laplacian + self.pinning_matrix)

    def eig_gamma(self):
        return matlib.eigvals(self.gamma)


def build_graph(adjacency, pinning):
    """Build a :class:`CommGraph` from ``alpha_ij`` and ``beta_i``.

    ``adjacency[i, j] > 0`` means follower ``i`` senses follower ``j``.
    Every follower must be reachable from the leader, entering the graph
    through the pinned nodes.
    """
    A = matlib.as_matrix(adjacency, "adjacency")
    b = np.asarray(pinning, dtype=float).ravel()
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise DimensionMismatch(f"adjacency must be NxN and pinning length N; got {A.shape}, {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InputError("pinning has non-finite entries")
    if np.any(np.diag(A) != 0):
        raise InputError("adjacency must have a zero diagonal")
    if np.any(A < 0) or np.any(b < 0):
        raise NegativeWeight("adjacency and pinning weights must be nonnegative")

    # node 0 is the leader; an edge j -> i exists when i senses j
    aug = np.zeros((n + 1, n + 1))
    aug[1:, 1:] = (A > 0).T
    aug[0, 1:] = b > 0
    reached = breadth_first_order(aug, 0, directed=True, return_predecessors=False)
    missing = sorted(set(range(1, n + 1)) - set(reached.tolist()))
    if missing:
        raise LeaderUnreachable(f"followers {[i - 1 for i in missing]} have no path from the leader")

    degree = A.sum(axis=1)
    L = np.diag(degree) - A
    gamma = (L + np.diag(b)) / (1.0 + degree + b)[:, None]
    return CommGraph(_frozen(A), _frozen(b), _frozen(L), _frozen(degree), _frozen(gamma))


@dataclass(frozen=True)
class SynchronizationGains:
    """Gains of both sub-controllers plus the coupling they were certified with.

    Continuous protocols use a single ``c``; discrete ones carry ``c_s`` and
    ``c_f`` together with the stability radii ``r_s``, ``r_f`` and covering
    radii ``r0_s = r0(c_s)``, ``r0_f = r0(c_f)``.
    """

    kind: str
    K_s: np.ndarray
    K_f: np.ndarray
    P_s: np.ndarray
    P_f: np.ndarray
    Q_s: np.ndarray
    Q_f: np.ndarray
    R_s: np.ndarray = None
    R_f: np.ndarray = None
    c: float = None
    c_s: float = None
    c_f: float = None
    r_s: float = None
    r_f: float = None
    r0_s: float = None
    r0_f: float = None

    @property
    def m(self):
        return self.K_s.shape[0]

    def couplings(self):
        """``(slow, fast)`` coupling gains regardless of kind."""
        if self.kind == CONTINUOUS:
            return self.c, self.c
        return self.c_s, self.c_f


def continuous_coupling_bound(graph):
    """Smallest coupling ``c`` admitted by ``c >= 1 / (2 min Re lambda(L + B))``."""
    lam = graph.eig_laplacian_pinned()
    low = lam.real.min()
    if low <= 0:
        raise NonPositiveEigenvalue(f"L + B has an eigenvalue with real part {low:.3g}")
    return float(1.0 / (2.0 * low))


def lqr_gain_continuous(A, B, Q, R):
    """``K = R^{-1} B' P`` with ``P`` the stabilizing Riccati solution."""
    P = matlib.solve_care(A, B, Q, R)
    K = np.linalg.solve(matlib.as_matrix(R), matlib.as_matrix(B).T @ P)
    return K, P


def gain_discrete(A, B, Q):
    """``K = (B'PB)^{-1} B'PA`` with ``P`` from the weight-free Riccati-like map."""
    A = matlib.as_matrix(A)
    B = matlib.as_matrix(B)
    P = matlib.solve_dare_cheap(A, B, Q)
    K = np.linalg.solve(B.T @ P @ B, B.T @ P @ A)
    return K, P


def stability_radius_discrete(A, B, P, Q):
    """Radius ``[sigma_max(Q^{-1/2} A'PB (B'PB)^{-1} B'PA Q^{-1/2})]^{-1/2}``.

    Returns ``math.inf`` when the inner matrix vanishes.
    """
    A = matlib.as_matrix(A)
    B = matlib.as_matrix(B)
    Qih = np.linalg.inv(matlib.sqrtm_spd(Q))
    BtPA = B.T @ P @ A
    inner = BtPA.T @ matlib.solve_linear(B.T @ P @ B, BtPA)
    s = matlib.sigma_max(Qih.T @ inner @ Qih)
    if s == 0.0:
        return math.inf
    return s ** -0.5


def covering_radius(graph, c):
    """Radius of the smallest circle centred at ``(1/c, 0)`` holding eig(Gamma)."""
    if c <= 0:
        raise InputError("coupling gain must be positive")
    return float(np.max(np.abs(graph.eig_gamma() - 1.0 / c)))


def discrete_margin(graph, c):
    """``c * r0(c)``, the quantity that must stay below the stability radius."""
    return c * covering_radius(graph, c)


def select_discrete_coupling(graph, r, lo=1e-2, hi=1e2, points=1000):
    """Coupling minimising ``c * r0(c)``; raises :class:`Infeasible` if that minimum is not below ``r``."""
    if r <= 0:
        raise InputError("stability radius must be positive")
    lam = graph.eig_gamma()

    def margin(c):
        return float(np.max(np.abs(c * lam - 1.0)))

    grid = np.logspace(np.log10(lo), np.log10(hi), points)
    vals = np.array([margin(c) for c in grid])
    k = int(np.argmin(vals))
    best_c, best = grid[k], vals[k]
    if 0 < k < points - 1:
        res = minimize_scalar(margin, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden",
                              options={"xtol": 1e-12})
        if res.fun <= best:
            best_c, best = float(res.x), float(res.fun)
    if best >= r:
        raise Infeasible(f"min c*r0(c) = {best:.4g} is not below the stability radius {r:.4g}")
    return best_c


def neighborhood_error(graph, agent_states, leader_state, i):
    """``sum_j alpha_ij (x_j - x_i) + beta_i (x_0 - x_i)`` for follower ``i``."""
    X = np.atleast_2d(np.asarray(agent_states, dtype=float))
    x0 = np.asarray(leader_state, dtype=float)
    if X.shape[0] != graph.n_agents or X.shape[1] != x0.shape[0]:
        raise DimensionMismatch("agent states must be N vectors of the leader's dimension")
    xi = X[i]
    return graph.adjacency[i] @ (X - xi) + graph.pinning[i] * (x0 - xi)


def neighborhood_errors(graph, agent_states, leader_state):
    """Row-stacked :func:`neighborhood_error` for every follower."""
    X = np.atleast_2d(np.asarray(agent_states, dtype=float))
    x0 = np.asarray(leader_state, dtype=float)
    if X.shape[0] != graph.n_agents or X.shape[1] != x0.shape[0]:
        raise DimensionMismatch("agent states must be N vectors of the leader's dimension")
    return graph.adjacency @ X - (graph.degree + graph.pinning)[:, None] * X + np.outer(graph.pinning, x0)


def _check_errors(gains, e_s, e_f):
    e_s = np.asarray(e_s, dtype=float)
    e_f = np.asarray(e_f, dtype=float)
    if e_s.shape[-1] != gains.K_s.shape[1] or e_f.shape[-1] != gains.K_f.shape[1]:
        raise DimensionMismatch("error vectors do not match the gain dimensions")
    return e_s, e_f


def control_continuous(gains, e_s, e_f):
    """``c (K_s e_s + K_f e_f)``."""
    if gains.kind != CONTINUOUS:
        raise InputError("continuous control law needs continuous gains")
    e_s, e_f = _check_errors(gains, e_s, e_f)
    return gains.c * (e_s @ gains.K_s.T + e_f @ gains.K_f.T)


def control_discrete(gains, graph, i, e_s, e_f):
    """``(1 + d_i + beta_i)^{-1} (c_s K_s e_s + c_f K_f e_f)``."""
    if gains.kind != DISCRETE:
        raise InputError("discrete control law needs discrete gains")
    e_s, e_f = _check_errors(gains, e_s, e_f)
    scale = 1.0 / (1.0 + graph.degree[i] + graph.pinning[i])
    return scale * (gains.c_s * (e_s @ gains.K_s.T) + gains.c_f * (e_f @ gains.K_f.T))


def default_weights(kind, n1, n2, m):
    """Identity state weights; ``0.001 I`` control weights for continuous plants."""
    w = {"Q_s": np.eye(n1), "Q_f": np.eye(n2)}
    if kind == CONTINUOUS:
        w["R_s"] = CONTINUOUS_R_SCALE * np.eye(m)
        w["R_f"] = CONTINUOUS_R_SCALE * np.eye(m)
    return w


def synthesize_continuous(decomp, graph, Q_s, Q_f, R_s, R_f, c=None, enforce=True):
    """Gains for both subsystems with one coupling gain.

    ``c`` defaults to the bound from :func:`continuous_coupling_bound`; an
    explicit value below the bound raises :class:`Infeasible` unless
    ``enforce`` is false.
    """
    c_min = continuous_coupling_bound(graph)
    if c is None:
        c = c_min
    elif enforce and c < c_min * (1 - 1e-12):
        raise Infeasible(f"coupling {c:.4g} is below the bound {c_min:.4g}")
    K_s, P_s = lqr_gain_continuous(decomp.A_s, decomp.B_s, Q_s, R_s)
    K_f, P_f = lqr_gain_continuous(decomp.A_f, decomp.B_f, Q_f, R_f)
    return SynchronizationGains(CONTINUOUS, K_s, K_f, P_s, P_f, np.asarray(Q_s, float), np.asarray(Q_f, float),
                                np.asarray(R_s, float), np.asarray(R_f, float), c=float(c))


def synthesize_discrete(decomp, graph, Q_s, Q_f, c_s=None, c_f=None, enforce=True):
    """Gains, stability radii and couplings for both discrete subsystems.

    Missing couplings are chosen by :func:`select_discrete_coupling`; given
    ones are checked against ``c * r0(c) < r`` for their own subsystem.
    """
    K_s, P_s = gain_discrete(decomp.A_s, decomp.B_s, Q_s)
    K_f, P_f = gain_discrete(decomp.A_f, decomp.B_f, Q_f)
    r_s = stability_radius_discrete(decomp.A_s, decomp.B_s, P_s, Q_s)
    r_f = stability_radius_discrete(decomp.A_f, decomp.B_f, P_f, Q_f)
    chosen = []
    for label, c, r in (("slow", c_s, r_s), ("fast", c_f, r_f)):
        if c is None:
            c = select_discrete_coupling(graph, r)
        elif enforce and not discrete_margin(graph, c) < r:
            raise Infeasible(f"{label} coupling {c:.4g} gives c*r0 = {discrete_margin(graph, c):.4g} >= r = {r:.4g}")
        chosen.append(float(c))
    c_s, c_f = chosen
    return SynchronizationGains(DISCRETE, K_s, K_f, P_s, P_f, np.asarray(Q_s, float), np.asarray(Q_f, float),
                                c_s=c_s, c_f=c_f, r_s=r_s, r_f=r_f,
                                r0_s=covering_radius(graph, c_s), r0_f=covering_radius(graph, c_f))


def certificate(decomp, graph, gains):
    """Per-mode closed-loop matrices ``A_x - c lambda B_x K_x``.

    Returns a list of dicts with the subsystem label, the graph eigenvalue,
    the spectral measure (abscissa for continuous, radius for discrete) and
    whether the mode is stable.
    """
    if gains.kind == CONTINUOUS:
        lams = graph.eig_laplacian_pinned()
        measure, stable = (lambda M: np.linalg.eigvals(M).real.max()), (lambda v: v < 0)
    else:
        lams = graph.eig_gamma()
        measure, stable = (lambda M: np.abs(np.linalg.eigvals(M)).max()), (lambda v: v < 1)
    c_s, c_f = gains.couplings()
    rows = []
    for label, A, B, K, c in (("slow", decomp.A_s, decomp.B_s, gains.K_s, c_s),
                              ("fast", decomp.A_f, decomp.B_f, gains.K_f, c_f)):
        for lam in lams:
            # lambda may be complex on directed graphs
            v = float(measure(A - c * lam * B @ K))
            rows.append({"subsystem": label, "lambda": complex(lam), "value": v, "stable": bool(stable(v))})
    return rows
