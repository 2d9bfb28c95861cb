"""JSON documents in, CSV/JSON/gnuplot out.

Model, graph, weight and scenario documents are plain JSON objects. Paths
inside a scenario are resolved against the scenario file's directory.
Every output file is written atomically (temporary file plus rename).
"""
from dataclasses import dataclass, field
from fractions import Fraction
import csv
import io as _io
import json
import os
from pathlib import Path
import tempfile

import numpy as np

from . import decompose as dec
from . import protocol
from .errors import DimensionMismatch, InputError

__all__ = [
    "DocumentError",
    "ModelDocument",
    "ScenarioDocument",
    "load_json",
    "parse_model",
    "parse_graph",
    "parse_weights",
    "parse_coupling",
    "parse_scenario",
    "build_scenario",
    "to_jsonable",
    "dumps",
    "write_atomic",
    "csv_header",
    "render_csv",
    "read_csv",
    "render_plot_script",
]

_BLOCKS = ("A1", "A2", "A3", "A4", "B1", "B2")


class DocumentError(InputError):
    """A document is missing, unreadable or malformed."""


def load_json(source):
    """Parse a JSON file; dicts pass through unchanged."""
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise DocumentError(f"{path}: top level must be a JSON object")
    return doc


def _number(value, name):
    if isinstance(value, bool):
        raise DocumentError(f"{name} must be a number")
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise DocumentError(f"{name}: cannot read {value!r} as a number") from None
    if isinstance(value, (int, float)):
        return float(value)
    raise DocumentError(f"{name} must be a number")


def _array(doc, key, ndim, required=True):
    if key not in doc:
        if required:
            raise DocumentError(f"missing field {key!r}")
        return None
    try:
        arr = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise DocumentError(f"{key} must be a numeric array") from None
    if ndim == 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{key} must be {ndim}-D, got shape {arr.shape}")
    return arr


@dataclass
class ModelDocument:
    name: str
    kind: str
    epsilon: float
    model: object
    comment: str = ""


def parse_model(source, epsilon=None):
    """Read a model document into a :class:`ModelDocument`.

    The document holds either full ``A``/``B`` with ``n1``/``n2`` or the six
    partitioned blocks. ``epsilon`` overrides the document's value.
    """
    doc = load_json(source)
    kind = doc.get("kind")
    if kind not in (dec.CONTINUOUS, dec.DISCRETE):
        raise DocumentError(f"kind must be 'continuous' or 'discrete', got {kind!r}")
    eps = _number(doc.get("epsilon") if epsilon is None else epsilon, "epsilon")
    if "A" in doc:
        A, B = _array(doc, "A", 2), _array(doc, "B", 2)
        try:
            n1, n2 = int(doc["n1"]), int(doc["n2"])
        except (KeyError, TypeError, ValueError):
            raise DocumentError("full-matrix documents need integer n1 and n2") from None
        model = dec.partition_full_model(A, B, n1, n2, eps, kind)
    elif all(k in doc for k in _BLOCKS):
        if not 0 < eps < 1:
            raise InputError(f"epsilon must lie in (0, 1), got {eps}")
        model = dec.PartitionedLinearModel(kind, *(_array(doc, k, 2) for k in _BLOCKS), eps)
    else:
        raise DocumentError("model needs either A and B, or all of A1..A4, B1, B2")
    for key, val in (("n1", model.n1), ("n2", model.n2), ("m", model.m)):
        if key in doc and int(doc[key]) != val:
            raise DimensionMismatch(f"{key} is {doc[key]} but the matrices give {val}")
    return ModelDocument(str(doc.get("name", "model")), kind, eps, model, str(doc.get("comment", "")))


def parse_graph(source):
    doc = load_json(source)
    return protocol.build_graph(_array(doc, "adjacency", 2), _array(doc, "pinning", 1))


def parse_weights(source, model):
    """Weights with defaults filled in for absent entries."""
    w = protocol.default_weights(model.kind, model.n1, model.n2, model.m)
    if source is None:
        return w
    doc = load_json(source)
    for key in ("Q_s", "Q_f", "R_s", "R_f"):
        val = _array(doc, key, 2, required=False)
        if val is not None:
            if key.startswith("R") and model.kind == dec.DISCRETE:
                raise DocumentError(f"{key} has no meaning for a discrete model")
            if val.shape != w[key].shape:
                raise DimensionMismatch(f"{key} must be {w[key].shape}, got {val.shape}")
            w[key] = val
    return w


def parse_coupling(value, kind):
    """Return ``(c_s, c_f)``; ``None`` marks an automatic choice.

    Accepts a number, a fraction string such as ``"12/7"``, ``"auto"``,
    or for discrete models an object ``{"c_s": .., "c_f": ..}``.
    """
    def one(v, name):
        if v is None or (isinstance(v, str) and v.strip().lower() == "auto"):
            return None
        c = _number(v, name)
        if not c > 0:
            raise InputError(f"{name} must be positive, got {c}")
        return c

    if isinstance(value, dict):
        if kind == dec.CONTINUOUS:
            if "c" not in value:
                raise DocumentError("continuous coupling takes a single value 'c'")
            c = one(value["c"], "c")
            return c, c
        if "c" in value:
            c = one(value["c"], "c")
            return c, c
        return one(value.get("c_s"), "c_s"), one(value.get("c_f"), "c_f")
    c = one(value, "coupling")
    return c, c


def synthesize(decomp, graph, weights, coupling, enforce=True):
    c_s, c_f = coupling
    if decomp.kind == dec.CONTINUOUS:
        return protocol.synthesize_continuous(decomp, graph, weights["Q_s"], weights["Q_f"],
                                              weights["R_s"], weights["R_f"], c=c_s, enforce=enforce)
    return protocol.synthesize_discrete(decomp, graph, weights["Q_s"], weights["Q_f"],
                                        c_s=c_s, c_f=c_f, enforce=enforce)


@dataclass
class ScenarioDocument:
    name: str
    model_doc: ModelDocument
    graph: object
    weights: dict
    coupling: tuple
    leader_init: np.ndarray
    follower_inits: np.ndarray
    horizon: float = None
    step: float = None
    threshold: float = 1e-2
    csv_path: Path = None
    json_path: Path = None
    plot: bool = False
    base_dir: Path = field(default_factory=Path.cwd)


def _ref(value, base):
    # a string is a path relative to the scenario; an object is inline
    if isinstance(value, str):
        return base / value
    if isinstance(value, dict):
        return value
    raise DocumentError("references must be a file path or an inline object")


def parse_scenario(source):
    doc = load_json(source)
    base = Path(source).resolve().parent if not isinstance(source, dict) else Path.cwd()
    for key in ("model", "graph", "inits"):
        if key not in doc:
            raise DocumentError(f"scenario is missing {key!r}")
    mdoc = parse_model(_ref(doc["model"], base))
    graph = parse_graph(_ref(doc["graph"], base))
    weights_src = doc.get("weights")
    weights = parse_weights(None if weights_src is None else _ref(weights_src, base), mdoc.model)
    coupling = parse_coupling(doc.get("coupling", "auto"), mdoc.kind)

    inits = doc["inits"]
    if not isinstance(inits, dict) or "leader" not in inits or "followers" not in inits:
        raise DocumentError("inits needs 'leader' and 'followers'")
    leader = _array(inits, "leader", 1)
    followers = np.array(inits["followers"], dtype=float)
    if followers.size == 0:
        raise InputError("scenario needs at least one follower")
    followers = np.atleast_2d(followers)

    outputs = doc.get("outputs", {}) or {}
    name = str(doc.get("name", "scenario"))
    horizon = doc.get("horizon")
    step = doc.get("step")
    return ScenarioDocument(
        name=name,
        model_doc=mdoc,
        graph=graph,
        weights=weights,
        coupling=coupling,
        leader_init=leader,
        follower_inits=followers,
        horizon=None if horizon is None else _number(horizon, "horizon"),
        step=None if step is None else _number(step, "step"),
        threshold=_number(doc.get("threshold", 1e-2), "threshold"),
        csv_path=base / outputs.get("csv_path", f"{name}.csv"),
        json_path=base / outputs.get("json_path", f"{name}.json"),
        plot=bool(outputs.get("plot", False)),
        base_dir=base,
    )


def build_scenario(sdoc, tol=dec.NEWTON_TOL, enforce=False):
    """Decompose, synthesize and assemble a runnable :class:`~spats.sim.Scenario`."""
    from .sim import Scenario

    model = sdoc.model_doc.model
    decomp = dec.decompose(model, tol=tol)
    gains = synthesize(decomp, sdoc.graph, sdoc.weights, sdoc.coupling, enforce=enforce)
    return Scenario(model, decomp, sdoc.graph, gains, sdoc.leader_init, sdoc.follower_inits,
                    horizon=sdoc.horizon, step=sdoc.step)


def to_jsonable(obj):
    """Recursively convert numpy arrays, complex numbers and fractions."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, Fraction)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_header(n1, n2, m):
    return (["t", "agent"] + [f"x1_{k}" for k in range(1, n1 + 1)]
            + [f"x2_{k}" for k in range(1, n2 + 1)]
            + [f"u_{k}" for k in range(1, m + 1)] + ["err_inf"])


def _g(v):
    return format(float(v), ".17g")


def render_csv(log, n1, n2, m):
    """Trajectory table, one row per (time, agent); agent 0 is the leader."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(n1, n2, m))
    zeros = ["0"] * m
    for k, t in enumerate(log.times):
        ts = _g(t)
        w.writerow([ts, 0] + [_g(v) for v in log.leader_states[k]] + zeros + ["0"])
        for i in range(log.follower_states.shape[1]):
            w.writerow([ts, i + 1] + [_g(v) for v in log.follower_states[k, i]]
                       + [_g(v) for v in log.controls[k, i]] + [_g(log.error_norms[k, i])])
    return buf.getvalue()


def read_csv(path_or_text):
    """Return ``(header, rows)`` with rows as a float array."""
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    reader = csv.reader(_io.StringIO(text))
    header = next(reader)
    rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    return header, rows


def render_plot_script(csv_path, header, n_agents, title="trajectories"):
    """Self-contained gnuplot script: one panel per state column plus the error."""
    csv_name = str(csv_path)
    png = str(Path(csv_path).with_suffix(".png"))
    states = [h for h in header if h.startswith("x")]
    panels = states + ["err_inf"]
    lines = [
        "# gnuplot script; run with: gnuplot <this file>",
        "set datafile separator ','",
        "set terminal pngcairo size 900,%d" % (220 * len(panels)),
        f"set output '{png}'",
        f"set multiplot layout {len(panels)},1 title '{title}'",
        "set xlabel 't'",
        "set key outside right",
    ]
    for col in panels:
        idx = header.index(col) + 1
        lines.append(f"set ylabel '{col}'")
        if col == "err_inf":
            lines.append("set logscale y")
        agents = range(1, n_agents + 1) if col == "err_inf" else range(n_agents + 1)
        series = ", ".join(
            f"'{csv_name}' skip 1 using 1:(($2=={a}) ? ${idx} : 1/0) with lines "
            f"title '{'leader' if a == 0 else f'follower {a}'}'"
            for a in agents)
        lines.append(f"plot {series}")
        if col == "err_inf":
            lines.append("unset logscale y")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"
