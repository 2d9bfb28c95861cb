"""End-to-end regression of the aircraft formation example.

Each acceptance criterion expands into one or more :class:`Check` rows.
Nothing is tuned to make a row pass: published values are compared at the
stated tolerances, and failures are reported with the measured numbers.
"""
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg as spla

from . import decompose as dec
from . import io
from . import matlib
from . import protocol
from . import sim
from .errors import Divergence, SpatsError

FIXTURES = ("aircraft_continuous.json", "aircraft_discrete.json", "formation_graph.json", "reference.json")

CONT_INITS = ([0.0, 1.0, 0.0, 0.5], [[0.0, -0.5, 0.0, 1.0], [0.0, 2.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
THETA_KICK = 0.1


@dataclass
class Check:
    criterion: int
    label: str
    passed: bool
    detail: str = ""


def default_fixtures():
    return Path(str(resources.files("spats") / "data"))


@dataclass
class Fixtures:
    cont: object
    disc: object
    graph: object
    ref: dict


def load_fixtures(directory=None):
    """Read the bundled (or given) fixture set; a missing file is an input error."""
    d = Path(directory) if directory is not None else default_fixtures()
    missing = [name for name in FIXTURES if not (d / name).is_file()]
    if missing:
        raise io.DocumentError(f"missing fixture file(s) in {d}: {', '.join(missing)}")
    return Fixtures(io.parse_model(d / FIXTURES[0]).model, io.parse_model(d / FIXTURES[1]).model,
                    io.parse_graph(d / FIXTURES[2]), io.load_json(d / FIXTURES[3]))


def _frac(v):
    return float(Fraction(v)) if isinstance(v, str) else float(v)


def _abs_check(crit, label, got, want, tol):
    got, want = np.asarray(got, float), np.asarray(want, float)
    diff = np.abs(got - want)
    k = np.unravel_index(int(np.argmax(diff)), diff.shape)
    detail = f"max |diff| {diff[k]:.3g} at {tuple(int(i) for i in k)} (got {got[k]:.6g}, printed {want[k]:.6g}; tol {tol:g})"
    return Check(crit, label, bool(diff.max() <= tol), detail)


def _rel_check(crit, label, got, want, tol):
    got, want = np.asarray(got, float), np.asarray(want, float)
    rel = np.abs(got - want) / np.abs(want)
    k = np.unravel_index(int(np.argmax(rel)), rel.shape)
    detail = f"max rel diff {rel[k]:.3g} at {tuple(int(i) for i in k)} (got {got[k]:.6g}, printed {want[k]:.6g}; tol {tol:g})"
    return Check(crit, label, bool(rel.max() <= tol), detail)


class _Pipeline:
    """Shared decompositions, graph and gains for every criterion."""

    def __init__(self, fx, newton_max_iter, m_seed):
        self.fx = fx
        self.errors = {}
        self.cont = self.disc = self.gains_c = self.gains_d = None
        try:
            self.cont = dec.decompose(fx.cont, max_iter=newton_max_iter, seed=m_seed)
        except SpatsError as exc:
            self.errors["continuous"] = f"{type(exc).__name__}: {exc}"
        try:
            self.disc = dec.decompose(fx.disc, max_iter=newton_max_iter, seed=m_seed)
        except SpatsError as exc:
            self.errors["discrete"] = f"{type(exc).__name__}: {exc}"
        if self.cont is not None:
            w = protocol.default_weights(dec.CONTINUOUS, 2, 2, 2)
            self.gains_c = protocol.synthesize_continuous(self.cont, fx.graph, w["Q_s"], w["Q_f"], w["R_s"], w["R_f"],
                                                          c=_frac(fx.ref["continuous"]["c"]))
        if self.disc is not None:
            c = _frac(fx.ref["discrete"]["c"])
            w = protocol.default_weights(dec.DISCRETE, 2, 2, 2)
            self.gains_d = protocol.synthesize_discrete(self.disc, fx.graph, w["Q_s"], w["Q_f"], c_s=c, c_f=c,
                                                        enforce=False)

    def scenario(self, kind, leader, followers, horizon=None, step=None):
        if kind == dec.CONTINUOUS:
            return sim.Scenario(self.fx.cont, self.cont, self.fx.graph, self.gains_c, leader, followers,
                                horizon=horizon, step=step)
        return sim.Scenario(self.fx.disc, self.disc, self.fx.graph, self.gains_d, leader, followers,
                            horizon=horizon)


def _decomposition_rows(crit, p, kind):
    fx = p.fx
    ref = fx.ref[kind]
    d = p.cont if kind == dec.CONTINUOUS else p.disc
    model = fx.cont if kind == dec.CONTINUOUS else fx.disc
    if d is None:
        return [Check(crit, f"{kind} M", False, p.errors[kind])]
    rows = [_abs_check(crit, f"{kind} M", d.M, ref["M"], 5e-4),
            _abs_check(crit, f"{kind} N", d.N, ref["N"], 5e-4),
            _abs_check(crit, f"{kind} A_f", d.A_f, ref["A_f"], 5e-4)]
    if kind == dec.CONTINUOUS:
        rows.append(_abs_check(crit, "continuous B_f", d.B_f, ref["B_f"], 5e-4))
        rows.append(_abs_check(crit, "continuous A_s first row", d.A_s[0], ref["A_s_first_row"], 5e-4))
        oracle = model.A1 - model.A2 @ d.M
        rows.append(_abs_check(crit, "continuous A_s vs A1 - A2 M", d.A_s, oracle, 1e-10))
        rows.append(_abs_check(crit, "continuous B_s", d.B_s, ref["B_s"], 5e-4))
    else:
        rows.append(_abs_check(crit, "discrete A_s", d.A_s, ref["A_s"], 5e-4))
        rows.append(_abs_check(crit, "discrete B_f", d.B_f, ref["B_f"], 7e-3))
        oracle = model.B1 - model.epsilon * d.N @ d.B_f
        rows.append(_abs_check(crit, "discrete B_s vs B1 - eps N B_f", d.B_s, oracle, 1e-10))
    return rows


def _spectrum_rows(p):
    rows = []
    for kind, model, d in ((dec.CONTINUOUS, p.fx.cont, p.cont), (dec.DISCRETE, p.fx.disc, p.disc)):
        if d is None:
            rows.append(Check(3, f"{kind} spectrum", False, p.errors[kind]))
            continue
        rep = dec.verify_decomposition(model, d)
        rows.append(Check(3, f"{kind} spectrum", rep.max_eigen_gap <= 1e-6,
                          f"matched eigenvalue gap {rep.max_eigen_gap:.3g} (tol 1e-6)"))
    return rows


def _gain_rows(p):
    rows = []
    for kind, g in ((dec.CONTINUOUS, p.gains_c), (dec.DISCRETE, p.gains_d)):
        if g is None:
            rows.append(Check(4, f"{kind} gains", False, p.errors[kind]))
            continue
        ref = p.fx.ref[kind]
        rows.append(_rel_check(4, f"{kind} K_f", g.K_f, ref["K_f"], 1e-2))
        rows.append(_rel_check(4, f"{kind} K_s", g.K_s, ref["K_s"], 1e-2))
    return rows


def _graph_rows(p):
    g, ref = p.fx.graph, p.fx.ref
    rows = []
    gap = matlib.matched_distance(np.linalg.eigvals(g.laplacian + g.pinning_matrix),
                                  ref["graph"]["eig_laplacian_pinned"])
    rows.append(Check(5, "eig(L+B)", gap <= 1e-12, f"matched gap {gap:.3g}"))
    c_min = protocol.continuous_coupling_bound(g)
    rows.append(Check(5, "continuous coupling bound", c_min == 0.5, f"c_min = {c_min!r}"))
    gap = matlib.matched_distance(g.eig_gamma(), [_frac(v) for v in ref["graph"]["eig_gamma"]])
    rows.append(Check(5, "eig(Gamma)", gap <= 1e-12, f"matched gap {gap:.3g}"))
    if p.gains_d is None:
        rows.append(Check(5, "stability radii", False, p.errors["discrete"]))
        return rows
    r_f, r_s = p.gains_d.r_f, p.gains_d.r_s
    rows.append(Check(5, "r_f", abs(r_f - ref["discrete"]["r_f"]) <= 1e-3, f"r_f = {r_f:.6g}"))
    rows.append(Check(5, "r_s", abs(r_s - ref["discrete"]["r_s"]) <= 1e-3, f"r_s = {r_s:.6g}"))
    c = _frac(ref["discrete"]["c"])
    r0 = protocol.covering_radius(g, c)
    rows.append(Check(5, "covering radius at 12/7", abs(r0 - _frac(ref["discrete"]["r0"])) <= 1e-12, f"r0 = {r0!r}"))
    margin = c * r0
    rows.append(Check(5, "discrete feasibility c*r0 < min(r_s, r_f)", margin < min(r_s, r_f),
                      f"c*r0 = {margin:.6g}, min radius {min(r_s, r_f):.6g}"))
    return rows


def _continuous_sync_rows(p):
    if p.cont is None:
        return [Check(6, "continuous synchronization", False, p.errors["continuous"])]
    scn = p.scenario(dec.CONTINUOUS, *CONT_INITS, horizon=60.0, step=0.01)
    # exact solution of the stacked linear closed loop, for the report only
    Acl = sim.closed_loop_matrix(scn)
    Z60 = (spla.expm(60.0 * Acl) @ scn.initial_stack().ravel()).reshape(scn.initial_stack().shape)
    exact = np.abs(Z60[1:] - Z60[0]).max(axis=1)
    note = f"exact closed-loop errors at 60 s: {np.array2string(exact, precision=3)}"
    try:
        log = sim.simulate(scn)
    except Divergence as exc:
        msg = f"RK4 at step 0.01 diverged ({exc}); {note}"
        return [Check(6, "continuous final error <= 1e-2", False, msg),
                Check(6, "continuous error at 60 s < 1% of peak", False, msg)]
    final = log.error_norms[-1]
    peak = log.error_norms.max(axis=0)
    return [Check(6, "continuous final error <= 1e-2", bool(np.all(final <= 1e-2)),
                  f"final errors {np.array2string(final, precision=3)}; {note}"),
            Check(6, "continuous error at 60 s < 1% of peak", bool(np.all(final < 1e-2 * peak)),
                  f"final/peak {np.array2string(final / peak, precision=3)}")]


def _discrete_sync_rows(p):
    if p.disc is None:
        return [Check(7, "discrete synchronization", False, p.errors["discrete"])]
    leader = np.array(CONT_INITS[0])
    followers = np.tile(leader, (p.fx.graph.n_agents, 1))
    followers[:, 1] += THETA_KICK
    log = sim.simulate(p.scenario(dec.DISCRETE, leader, followers, horizon=100))
    worst = log.error_norms.max(axis=1)
    hit = np.nonzero(worst <= 1e-3)[0]
    detail = (f"reached at step {int(log.times[hit[0]])}" if hit.size
              else f"never reached; error at step 100 is {worst[-1]:.3g}")
    rows = [Check(7, "discrete error <= 1e-3 within 100 steps", bool(hit.size), detail)]
    cert = protocol.certificate(p.disc, p.fx.graph, p.gains_d)
    worst_cert = max(r["value"] for r in cert)
    rows.append(Check(7, "discrete certificate spectral radii < 1", all(r["stable"] for r in cert),
                      f"largest spectral radius {worst_cert:.6g}"))
    return rows


def _invariant_rows(p):
    rows = []
    leader = np.array(CONT_INITS[0])
    n_agents = p.fx.graph.n_agents
    kinds = [k for k, d in ((dec.CONTINUOUS, p.cont), (dec.DISCRETE, p.disc)) if d is not None]
    for kind in (dec.CONTINUOUS, dec.DISCRETE):
        if kind not in kinds:
            rows.append(Check(8, f"{kind} invariants", False, p.errors[kind]))
    horizon = {dec.CONTINUOUS: 10.0, dec.DISCRETE: 100}

    for kind in kinds:
        log = sim.simulate(p.scenario(kind, leader, np.tile(leader, (n_agents, 1)), horizon[kind]))
        bound = 1e-12 * (1 + np.linalg.norm(leader))
        worst = float(log.error_norms.max())
        rows.append(Check(8, f"{kind} manifold invariance", worst <= bound, f"max error {worst:.3g} (bound {bound:.3g})"))

    alpha = 3.7
    for kind in kinds:
        base = sim.simulate(p.scenario(kind, *CONT_INITS, horizon[kind]))
        scaled = sim.simulate(p.scenario(kind, alpha * leader, alpha * np.array(CONT_INITS[1]), horizon[kind]))
        ref = np.concatenate([alpha * base.leader_states.ravel(), alpha * base.follower_states.ravel()])
        got = np.concatenate([scaled.leader_states.ravel(), scaled.follower_states.ravel()])
        rel = float(np.abs(got - ref).max() / np.abs(ref).max())
        rows.append(Check(8, f"{kind} linearity", rel <= 1e-10, f"relative deviation {rel:.3g}"))

    if dec.CONTINUOUS in kinds:
        rows.append(rk4_order_check(p))

    for kind, model in ((dec.CONTINUOUS, p.fx.cont), (dec.DISCRETE, p.fx.disc)):
        try:
            d = dec.decompose(model, tol=1e-12)
            ok = d.newton_iterations <= 20 and d.residual_M <= 1e-12
            detail = f"{d.newton_iterations} iterations, residual {d.residual_M:.3g}"
        except SpatsError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append(Check(8, f"{kind} Newton convergence", ok, detail))

    rng = np.random.default_rng(7)
    for kind in kinds:
        d = p.cont if kind == dec.CONTINUOUS else p.disc
        x = rng.standard_normal((50, 4))
        x1, x2 = d.inverse_transform(*d.transform(x[:, :2], x[:, 2:]))
        err = float(np.abs(np.hstack([x1, x2]) - x).max() / np.abs(x).max())
        rows.append(Check(8, f"{kind} transform round trip", err <= 1e-12, f"relative error {err:.3g}"))

    for kind in kinds:
        model = p.fx.cont if kind == dec.CONTINUOUS else p.fx.disc
        texts = [io.render_csv(sim.simulate(p.scenario(kind, *CONT_INITS, horizon[kind])), model.n1, model.n2, model.m)
                 for _ in range(2)]
        rows.append(Check(8, f"{kind} deterministic CSV", texts[0] == texts[1], f"{len(texts[0])} bytes"))
    return rows


def rk4_order_check(p, h=0.004, horizon=2.0):
    """Compare RK4 errors at ``h`` and ``h/2`` against the matrix exponential."""
    errs = []
    for step in (h, h / 2):
        scn = p.scenario(dec.CONTINUOUS, *CONT_INITS, horizon=horizon, step=step)
        log = sim.simulate(scn)
        exact = spla.expm(horizon * sim.closed_loop_matrix(scn)) @ scn.initial_stack().ravel()
        got = np.concatenate([log.leader_states[-1], log.follower_states[-1].ravel()])
        errs.append(float(np.abs(got - exact).max()))
    ratio = errs[0] / errs[1]
    return Check(8, "RK4 order", 12 <= ratio <= 20,
                 f"error ratio {ratio:.3g} (errors {errs[0]:.3g}, {errs[1]:.3g})")


def run_checks(fixtures_dir=None, newton_max_iter=dec.NEWTON_MAX_ITER, m_seed=None):
    """All criterion rows, in order.

    ``newton_max_iter`` and ``m_seed`` exist so that a deliberately broken
    run (wrong seed, no iterations) can be exercised as a negative control.
    """
    fx = load_fixtures(fixtures_dir)
    p = _Pipeline(fx, newton_max_iter, m_seed)
    rows = []
    rows += _decomposition_rows(1, p, dec.CONTINUOUS)
    rows += _decomposition_rows(2, p, dec.DISCRETE)
    rows += _spectrum_rows(p)
    rows += _gain_rows(p)
    rows += _graph_rows(p)
    rows += _continuous_sync_rows(p)
    rows += _discrete_sync_rows(p)
    rows += _invariant_rows(p)
    return rows


def format_table(rows):
    width = max(len(r.label) for r in rows)
    lines = [f"{'crit':>4}  {'check':<{width}}  result  detail"]
    for r in rows:
        lines.append(f"{r.criterion:>4}  {r.label:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    failed = [r for r in rows if not r.passed]
    lines.append(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    if failed:
        crits = sorted({r.criterion for r in failed})
        lines.append("failing criteria: " + ", ".join(str(c) for c in crits))
    return "\n".join(lines)
