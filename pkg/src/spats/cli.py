"""``spats`` command line.

Exit codes: 0 success, 1 input or I/O error, 2 numeric or feasibility
failure (including a simulation that does not synchronize).
"""
import argparse
import os
import sys
import time

import numpy as np

from . import decompose as dec
from . import io
from . import matlib
from . import protocol
from . import sim
from . import verify
from .errors import InputError, NumericError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _tol():
    raw = os.environ.get("SPATS_TOL")
    if raw is None or raw.strip() == "":
        return dec.NEWTON_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise InputError(f"SPATS_TOL must be a number, got {raw!r}") from None
    if not tol > 0:
        raise InputError(f"SPATS_TOL must be positive, got {raw!r}")
    return tol


def _emit(text, out):
    if out:
        io.write_atomic(out, text)
        print(f"wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def cmd_decompose(args):
    mdoc = io.parse_model(args.model, epsilon=args.epsilon)
    tol = _tol()
    d = dec.decompose(mdoc.model, tol=tol)
    report = dec.verify_decomposition(mdoc.model, d, tol=max(tol, matlib.TOL_RESIDUAL))
    doc = {
        "name": mdoc.name,
        "kind": d.kind,
        "epsilon": d.epsilon,
        "M": d.M, "N": d.N,
        "A_s": d.A_s, "B_s": d.B_s, "A_f": d.A_f, "B_f": d.B_f,
        "newton_iterations": d.newton_iterations,
        "residual_M": report.residual_M,
        "residual_N": report.residual_N,
        "spectrum": {
            "full": report.spectrum_full,
            "slow": np.linalg.eigvals(d.A_s),
            "fast": np.linalg.eigvals(d.A_f),
            "max_eigen_gap": report.max_eigen_gap,
        },
        "passed": report.passed,
        "failures": report.failures,
    }
    _emit(io.dumps(doc), args.out)
    for msg in report.failures:
        print(f"error: {msg}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_NUMERIC


def gains_document(decomp, graph, gains):
    c_s, c_f = gains.couplings()
    doc = {"kind": gains.kind, "K_s": gains.K_s, "K_f": gains.K_f, "P_s": gains.P_s, "P_f": gains.P_f}
    if gains.kind == dec.CONTINUOUS:
        doc.update(c=gains.c, c_min=protocol.continuous_coupling_bound(graph),
                   eig_laplacian_pinned=graph.eig_laplacian_pinned())
    else:
        doc.update(c_s=c_s, c_f=c_f, r_s=gains.r_s, r_f=gains.r_f, r0_s=gains.r0_s, r0_f=gains.r0_f)
    doc["eig_gamma"] = graph.eig_gamma()
    cert = protocol.certificate(decomp, graph, gains)
    doc["certificate"] = cert
    doc["certified"] = all(row["stable"] for row in cert)
    return doc


def cmd_synthesize(args):
    mdoc = io.parse_model(args.model)
    graph = io.parse_graph(args.graph)
    weights = io.parse_weights(args.weights, mdoc.model)
    coupling = io.parse_coupling(args.coupling, mdoc.kind)
    d = dec.decompose(mdoc.model, tol=_tol())
    gains = io.synthesize(d, graph, weights, coupling)
    _emit(io.dumps(gains_document(d, graph, gains)), args.out)
    return EXIT_OK


def _coupling_warnings(scn):
    msgs = []
    if scn.kind == dec.CONTINUOUS:
        c_min = protocol.continuous_coupling_bound(scn.graph)
        if scn.gains.c < c_min:
            msgs.append(f"coupling c = {scn.gains.c:.4g} is below the bound c_min = {c_min:.4g}")
    else:
        for label, c, r in (("slow", scn.gains.c_s, scn.gains.r_s), ("fast", scn.gains.c_f, scn.gains.r_f)):
            margin = protocol.discrete_margin(scn.graph, c)
            if not margin < r:
                msgs.append(f"{label} coupling {c:.4g} gives c*r0 = {margin:.4g} >= r = {r:.4g}")
    cert = protocol.certificate(scn.decomp, scn.graph, scn.gains)
    for row in cert:
        if not row["stable"]:
            what = "spectral abscissa" if scn.kind == dec.CONTINUOUS else "spectral radius"
            msgs.append(f"certificate: {row['subsystem']} mode at lambda = {row['lambda'].real:.4g} "
                        f"has {what} {row['value']:.4g}")
    return msgs, cert


def cmd_simulate(args):
    sdoc = io.parse_scenario(args.scenario)
    scn = io.build_scenario(sdoc, tol=_tol(), enforce=False)
    warnings_, cert = _coupling_warnings(scn)
    for msg in warnings_:
        print(f"warning: {msg}", file=sys.stderr)
    if scn.kind == dec.CONTINUOUS and scn.step is None:
        scn.step = sim.default_step(scn)

    log = sim.simulate(scn)
    metrics = sim.compute_metrics(log, sdoc.threshold)
    m = scn.model
    csv_text = io.render_csv(log, m.n1, m.n2, m.m)
    io.write_atomic(sdoc.csv_path, csv_text)
    plot_path = None
    if sdoc.plot:
        plot_path = sdoc.csv_path.with_suffix(".gp")
        header = io.csv_header(m.n1, m.n2, m.m)
        io.write_atomic(plot_path, io.render_plot_script(sdoc.csv_path.name, header, scn.graph.n_agents, sdoc.name))
    c_s, c_f = scn.gains.couplings()
    doc = {
        "name": sdoc.name,
        "kind": scn.kind,
        "horizon": scn.horizon,
        "step": scn.step if scn.kind == dec.CONTINUOUS else 1,
        "coupling": {"c": c_s} if scn.kind == dec.CONTINUOUS else {"c_s": c_s, "c_f": c_f},
        "threshold": metrics.threshold,
        "final_error": metrics.final_error,
        "settling_time": metrics.settling_time,
        "synchronized": metrics.synchronized,
        "certificate": cert,
        "warnings": warnings_,
        "csv_path": sdoc.csv_path.name,
        "plot_path": None if plot_path is None else plot_path.name,
    }
    io.write_atomic(sdoc.json_path, io.dumps(doc))
    finals = ", ".join(f"{v:.3g}" for v in metrics.final_error)
    print(f"{sdoc.name}: final errors [{finals}], synchronized={metrics.synchronized}")
    print(f"wrote {sdoc.csv_path}, {sdoc.json_path}" + (f", {plot_path}" if plot_path else ""), file=sys.stderr)
    if not metrics.synchronized:
        print(f"error: followers did not reach the threshold {sdoc.threshold:g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_verify_paper(args):
    start = time.perf_counter()
    seed = None
    if args.seed_zero:
        seed = np.zeros((2, 2))
    rows = verify.run_checks(args.fixtures, newton_max_iter=args.newton_max_iter, m_seed=seed)
    print(verify.format_table(rows))
    print(f"elapsed {time.perf_counter() - start:.2f} s")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_NUMERIC


def build_parser():
    p = argparse.ArgumentParser(prog="spats", description="Slow/fast decoupled leader-follower synchronization.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="decouple a two-time-scale model into slow and fast subsystems")
    d.add_argument("model")
    d.add_argument("--epsilon", type=str, default=None, help="override the model's epsilon (decimal or a/b)")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decompose)

    s = sub.add_parser("synthesize", help="compute feedback and coupling gains")
    s.add_argument("model")
    s.add_argument("graph")
    s.add_argument("--weights")
    s.add_argument("--coupling", default="auto", help="'auto' or a value such as 0.5 or 12/7")
    s.add_argument("--out")
    s.set_defaults(func=cmd_synthesize)

    r = sub.add_parser("simulate", help="run a leader/follower scenario")
    r.add_argument("scenario")
    r.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify-paper", help="regression table for the bundled aircraft formation example")
    v.add_argument("--fixtures", default=None, help="directory holding the fixture documents")
    v.add_argument("--newton-max-iter", type=int, default=dec.NEWTON_MAX_ITER, help=argparse.SUPPRESS)
    v.add_argument("--seed-zero", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify_paper)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
