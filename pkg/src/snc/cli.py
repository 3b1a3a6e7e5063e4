"""``snc analyze spec.json --out DIR``: analytic bounds plus optional Monte-Carlo check.

Spec file layout (JSON)::

    {
      "flows": {
        "f1": {"arrival": {"variant": "mbc",
                           "alpha": {"kind": "affine", "rho": 1, "sigma": 4},
                           "f": {"kind": "deterministic"}}},
        "f2": {"traffic": {"kind": "bernoulli", "p": 0.3, "batch": 1,
                           "theta": 1.0, "r": 0.6}}
      },
      "nodes": [
        {"id": "n1", "server": {"kind": "sc", "beta": {...}, "g": {...}},
         "cross": ["f2"]},
        {"id": "n2", "server": {"kind": "strict", "capacity": 2,
                                "impairment": {"traffic": {...}}}}
      ],
      "analysis": {"flow": "f1", "metrics": ["backlog", "delay"],
                   "x_grid": {"start": 0, "stop": 10, "step": 1},
                   "mode": "general"},
      "validation": {"enabled": true, "T": 10000, "n_reps": 1000, "seed": 0}
    }

Exit codes: 0 success or PASS, 1 validation FAIL, 2 bad spec, 3 numeric error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from snc import calculus as calc
from snc import simulate as sim
from snc.calculus import BoundReport, Metric, Mode, NetworkSpec
from snc.curves import Affine, ConstantRate, Curve, GridPWL, RateLatency
from snc.errors import NumericError, ParseError, SchemaError, SNCError
from snc.models import (
    ArrivalVariant, ServiceCurveModel, ServiceVariant, StochasticArrivalCurve,
    StrictServer,
)
from snc.sigma_rho import (
    IncrementDist, bernoulli, discrete, mbc_from_sigma_rho, optimize_theta,
    sigma_rho_iid,
)
from snc.tailbounds import Deterministic, Exp, GridDec, TailBound, Vacuous, make_grid

EXIT_OK, EXIT_FAIL, EXIT_SPEC, EXIT_NUMERIC = 0, 1, 2, 3

_TOP = {"flows", "nodes", "analysis", "validation"}
_ANALYSIS_DEFAULTS = {
    "flow": None, "metrics": ["backlog", "delay"], "x_grid": None,
    "mode": "general", "y_max": None, "s_max": None, "grid_step": None,
}
_VALIDATION_DEFAULTS = {
    "enabled": False, "T": 10000, "n_reps": 1000, "seed": 0, "delta": 0.01,
    "d_max": None,
}
_METRICS = {"backlog", "delay", "output", "arrival"}


# -- literal parsing ---------------------------------------------------------

def _fields(obj, where: str, required: set, optional: set = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    unknown = set(obj) - required - optional
    if unknown:
        raise SchemaError(f"{where}: unknown field {sorted(unknown)[0]!r}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing field {sorted(missing)[0]!r}")
    return obj


def _num(obj: dict, key: str, where: str, default=None) -> float:
    v = obj.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}.{key}: expected a number")
    return float(v)


def _kind(obj, where: str) -> str:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SchemaError(f"{where}: missing field 'kind'")
    return obj["kind"]


def parse_curve(obj, where: str) -> Curve:
    kind = _kind(obj, where)
    try:
        if kind in ("rate", "constant_rate"):
            _fields(obj, where, {"kind", "r"})
            return ConstantRate(_num(obj, "r", where))
        if kind == "affine":
            _fields(obj, where, {"kind", "rho", "sigma"})
            return Affine(_num(obj, "rho", where), _num(obj, "sigma", where))
        if kind == "rate_latency":
            _fields(obj, where, {"kind", "R", "T"})
            return RateLatency(_num(obj, "R", where), _num(obj, "T", where))
        if kind == "grid":
            _fields(obj, where, {"kind", "samples"}, {"tail_slope"})
            return GridPWL(np.asarray(obj["samples"], dtype=float),
                           _num(obj, "tail_slope", where, 0.0))
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from None
    raise SchemaError(f"{where}.kind: unknown curve kind {kind!r}")


def parse_bound(obj, where: str) -> TailBound:
    kind = _kind(obj, where)
    try:
        if kind == "deterministic":
            _fields(obj, where, {"kind"})
            return Deterministic()
        if kind == "vacuous":
            _fields(obj, where, {"kind"})
            return Vacuous()
        if kind == "exp":
            _fields(obj, where, {"kind", "a", "theta"})
            return Exp(_num(obj, "a", where), _num(obj, "theta", where))
        if kind == "grid":
            _fields(obj, where, {"kind", "x", "v"})
            return GridDec(np.asarray(obj["x"], dtype=float), np.asarray(obj["v"], dtype=float))
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from None
    raise SchemaError(f"{where}.kind: unknown bound kind {kind!r}")


def parse_dist(obj, where: str) -> IncrementDist:
    kind = _kind(obj, where)
    try:
        if kind == "bernoulli":
            return bernoulli(_num(obj, "p", where), _num(obj, "batch", where, 1.0))
        if kind == "discrete":
            return discrete(obj["values"], obj["probs"])
    except KeyError as e:
        raise SchemaError(f"{where}: missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from None
    raise SchemaError(f"{where}.kind: unknown traffic kind {kind!r}")


@dataclass
class FlowDef:
    model: StochasticArrivalCurve
    dist: IncrementDist | None = None  # set for simulatable traffic literals
    theta: float | None = None


def parse_traffic(obj, where: str) -> FlowDef:
    kind = _kind(obj, where)
    extra = {"p", "batch"} if kind == "bernoulli" else {"values", "probs"}
    _fields(obj, where, {"kind", "r"}, extra | {"theta", "theta_grid", "x_star"})
    dist = parse_dist(obj, where)
    r = _num(obj, "r", where)
    if "theta_grid" in obj:
        grid = obj["theta_grid"]
        if not isinstance(grid, list) or not grid:
            raise SchemaError(f"{where}.theta_grid: expected a nonempty list")
        best = optimize_theta(dist, grid, r, _num(obj, "x_star", where, 0.0))
        return FlowDef(best.curve, dist, best.theta)
    theta = _num(obj, "theta", where, 1.0)
    if not theta > 0:
        raise SchemaError(f"{where}.theta: must be positive")
    return FlowDef(mbc_from_sigma_rho(sigma_rho_iid(dist, theta), r), dist, theta)


def parse_flow(obj, where: str) -> FlowDef:
    if not isinstance(obj, dict) or len(obj) != 1 or next(iter(obj)) not in ("arrival", "traffic"):
        raise SchemaError(f"{where}: expected exactly one of 'arrival' or 'traffic'")
    if "traffic" in obj:
        return parse_traffic(obj["traffic"], f"{where}.traffic")
    lit = _fields(obj["arrival"], f"{where}.arrival", {"alpha", "f"}, {"variant"})
    name = str(lit.get("variant", "mbc")).upper()
    if name not in ArrivalVariant.__members__:
        raise SchemaError(f"{where}.arrival.variant: unknown variant {lit['variant']!r}")
    return FlowDef(StochasticArrivalCurve(ArrivalVariant[name],
                                          parse_curve(lit["alpha"], f"{where}.arrival.alpha"),
                                          parse_bound(lit["f"], f"{where}.arrival.f")))


@dataclass
class NodeDef:
    id: str
    server: object  # ServiceCurveModel | StrictServer
    capacity: float | None = None
    impairment: FlowDef | None = None
    cross: list = field(default_factory=list)


def parse_server(obj, where: str):
    """Returns ``(model, capacity, impairment FlowDef)``; the last two only
    for strict servers given as ``capacity`` (+ optional ``impairment``)."""
    kind = _kind(obj, where)
    if kind in ("sc", "weak_sc"):
        _fields(obj, where, {"kind", "beta", "g"})
        variant = ServiceVariant.SC if kind == "sc" else ServiceVariant.WEAK_SC
        return ServiceCurveModel(variant, parse_curve(obj["beta"], f"{where}.beta"),
                                 parse_bound(obj["g"], f"{where}.g")), None, None
    if kind != "strict":
        raise SchemaError(f"{where}.kind: unknown server kind {kind!r}")
    if "beta_hat" in obj:
        _fields(obj, where, {"kind", "beta_hat"}, {"gamma", "g"})
        beta_hat = parse_curve(obj["beta_hat"], f"{where}.beta_hat")
        if ("gamma" in obj) != ("g" in obj):
            raise SchemaError(f"{where}: 'gamma' and 'g' must be given together")
        if "gamma" not in obj:
            return StrictServer.unimpaired(beta_hat), None, None
        return StrictServer(beta_hat, parse_curve(obj["gamma"], f"{where}.gamma"),
                            parse_bound(obj["g"], f"{where}.g")), None, None
    _fields(obj, where, {"kind", "capacity"}, {"impairment"})
    c = _num(obj, "capacity", where)
    if c < 0:
        raise SchemaError(f"{where}.capacity: must be nonnegative")
    imp = obj.get("impairment")
    if imp is None:
        return StrictServer.unimpaired(ConstantRate(c)), c, None
    fd = parse_flow(imp, f"{where}.impairment")
    return StrictServer(ConstantRate(c), fd.model.alpha, fd.model.f), c, fd


# -- spec --------------------------------------------------------------------

@dataclass
class SpecFile:
    flows: dict
    nodes: list
    analysis: dict
    validation: dict
    raw: dict

    @property
    def mode(self) -> Mode:
        return Mode(self.analysis["mode"])


def _x_grid(obj, where: str) -> np.ndarray:
    if isinstance(obj, list):
        x = np.asarray(obj, dtype=float)
    else:
        lit = _fields(obj, where, {"stop"}, {"start", "step"})
        start, stop = _num(lit, "start", where, 0.0), _num(lit, "stop", where)
        step = _num(lit, "step", where, 1.0)
        if step <= 0 or stop < start:
            raise SchemaError(f"{where}: need step > 0 and stop >= start")
        x = start + step * np.arange(int(math.floor((stop - start) / step + 1e-9)) + 1)
    if x.ndim != 1 or x.size == 0 or np.any(x < 0) or np.any(np.diff(x) <= 0):
        raise SchemaError(f"{where}: x grid must be nonempty, nonnegative and increasing")
    return x


def build_spec(raw) -> SpecFile:
    """Validate a decoded spec document and fill in defaults."""
    top = _fields(raw, "spec", {"flows", "analysis"}, _TOP)
    if not isinstance(top["flows"], dict) or not top["flows"]:
        raise SchemaError("flows: expected a nonempty object")
    flows = {fid: parse_flow(f, f"flows.{fid}") for fid, f in top["flows"].items()}

    analysis = dict(_ANALYSIS_DEFAULTS)
    analysis.update(_fields(top["analysis"], "analysis", {"flow", "x_grid"},
                            set(_ANALYSIS_DEFAULTS)))
    if analysis["flow"] not in flows:
        raise SchemaError(f"analysis.flow: unknown flow id {analysis['flow']!r}")
    metrics = analysis["metrics"]
    if not isinstance(metrics, list) or not metrics or not set(metrics) <= _METRICS:
        bad = [m for m in metrics if m not in _METRICS] if isinstance(metrics, list) else metrics
        raise SchemaError(f"analysis.metrics: unknown metric {bad!r}")
    if analysis["mode"] not in ("general", "independent"):
        raise SchemaError(f"analysis.mode: expected general or independent, got {analysis['mode']!r}")
    x = _x_grid(analysis["x_grid"], "analysis.x_grid")
    analysis["x_grid"] = x.tolist()
    for key in ("y_max", "s_max", "grid_step"):
        if analysis[key] is not None:
            _num(analysis, key, "analysis")

    nodes = []
    ids = set()
    for k, n in enumerate(top.get("nodes", [])):
        where = f"nodes[{k}]"
        lit = _fields(n, where, {"server"}, {"id", "cross"})
        nid = str(lit.get("id", f"n{k + 1}"))
        if nid in ids:
            raise SchemaError(f"{where}.id: duplicate node id {nid!r}")
        ids.add(nid)
        server, cap, imp = parse_server(lit["server"], f"{where}.server")
        cross = lit.get("cross", [])
        for cid in cross:
            if cid not in flows:
                raise SchemaError(f"{where}.cross: unknown flow id {cid!r}")
            if cid == analysis["flow"]:
                raise SchemaError(f"{where}.cross: the analysed flow cannot be its own cross traffic")
        nodes.append(NodeDef(nid, server, cap, imp, list(cross)))
    if set(metrics) - {"arrival"} and not nodes:
        raise SchemaError("nodes: backlog, delay and output metrics need at least one node")
    if analysis["mode"] == "independent":
        for k, n in enumerate(nodes):
            if not isinstance(n.server, StrictServer):
                raise SchemaError(f"nodes[{k}].server: independent mode requires strict-server nodes")

    validation = dict(_VALIDATION_DEFAULTS)
    validation.update(_fields(top.get("validation", {}), "validation", set(),
                              set(_VALIDATION_DEFAULTS)))
    return SpecFile(flows, nodes, analysis, validation, raw)


def parse_spec(path) -> SpecFile:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return build_spec(raw)


# -- analysis ----------------------------------------------------------------

def _bounds_in(spec: SpecFile):
    out = [fd.model.f for fd in spec.flows.values()]
    for n in spec.nodes:
        out.append(n.server.impairment_bound if isinstance(n.server, StrictServer) else n.server.g)
    return out


def numeric_grid(spec: SpecFile) -> tuple[np.ndarray, float]:
    """Grid for tail-bound numerics and its step (echoed to params.json)."""
    bounds = _bounds_in(spec)
    step = spec.analysis["grid_step"]
    if step is None:
        step = min([0.01] + [0.05 / b.decay for b in bounds if b.decay])
    finite = [b.extent for b in bounds]
    x_hi = max([1.0, max(spec.analysis["x_grid"])] + finite)
    return make_grid(2 * x_hi, step), float(step)


@dataclass
class Analysis:
    reports: list  # BoundReport, in output order
    grid_step: float


def analyze(spec: SpecFile) -> Analysis:
    x = np.asarray(spec.analysis["x_grid"], dtype=float)
    grid, step = numeric_grid(spec)
    tagged = spec.flows[spec.analysis["flow"]].model
    metrics = spec.analysis["metrics"]
    reports = []
    if "arrival" in metrics:
        reports.append(BoundReport(Metric.ARRIVAL, x, np.minimum(tagged.f.eval(x), 1.0),
                                   spec.mode))
    if set(metrics) - {"arrival"}:
        cross = [tuple(spec.flows[c].model for c in n.cross) for n in spec.nodes]
        net = NetworkSpec(tuple(n.server for n in spec.nodes), tagged,
                          tuple(cross) if any(cross) else (), spec.mode)
        y_max, s_max = spec.analysis["y_max"], spec.analysis["s_max"]
        res = calc.analyze_tandem(net, x, y_max=None if y_max is None else int(y_max),
                                  s_max=s_max, grid=grid, want_output="output" in metrics)
        if "backlog" in metrics:
            reports.append(res.backlog)
        if "delay" in metrics:
            reports.append(res.delay)
            if res.delay_det_server is not None:
                reports.append(res.delay_det_server)
        if "output" in metrics:
            reports.append(BoundReport(Metric.OUTPUT, x,
                                       np.minimum(res.output.f.eval(x), 1.0), spec.mode))
    order = {m: k for k, m in enumerate(["arrival", "backlog", "delay", "output"])}
    reports.sort(key=lambda r: order[r.metric.value])
    return Analysis(reports, step)


# -- validation --------------------------------------------------------------

def _check_simulatable(spec: SpecFile) -> None:
    if spec.flows[spec.analysis["flow"]].dist is None:
        raise SchemaError("validation: the analysed flow must be a traffic literal")
    for k, n in enumerate(spec.nodes):
        if not isinstance(n.server, StrictServer):
            raise SchemaError(f"nodes[{k}]: validation needs strict-server nodes")
        if n.capacity is None:
            raise SchemaError(f"nodes[{k}].server: validation needs 'capacity' (a constant-rate server)")
        if n.impairment is not None and n.impairment.dist is None:
            raise SchemaError(f"nodes[{k}].server.impairment: validation needs a traffic literal")
        if n.cross:
            raise SchemaError(f"nodes[{k}].cross: validation does not simulate cross traffic")


def simulate_tails(spec: SpecFile, reports: list) -> dict:
    """Empirical tail per metric that can be measured on sample paths."""
    _check_simulatable(spec)
    v = spec.validation
    T, n, seed, delta = int(v["T"]), int(v["n_reps"]), int(v["seed"]), float(v["delta"])
    x = np.asarray(spec.analysis["x_grid"], dtype=float)
    fd = spec.flows[spec.analysis["flow"]]
    tails = {}
    wanted = {r.metric.value for r in reports}
    if "arrival" in wanted:
        tails["arrival"] = sim.empirical_mbc_tail(fd.dist, fd.model.alpha, T, x, n, seed, delta)
    if wanted & {"backlog", "delay"}:
        d_max = v["d_max"]
        d_max = int(math.ceil(x.max())) if d_max is None else int(d_max)
        a = sim.gen_batch(fd.dist, T, n, seed, sim.FLOW_STREAM)
        nodes = []
        for k, node in enumerate(spec.nodes):
            imp = np.zeros_like(a) if node.impairment is None else \
                sim.gen_batch(node.impairment.dist, T, n, seed, sim.IMPAIRMENT_STREAM + k)
            nodes.append((node.capacity, imp))
        path = sim.run_tandem(a, nodes, seed)
        first, last = path[0], path[-1]
        e2e = sim.Trace(a, first.i, first.c, first.A, last.A_star,
                        first.A - last.A_star, seed)
        if "backlog" in wanted:
            tails["backlog"] = sim.empirical_backlog_tail(e2e, x, d_max, delta)
        if "delay" in wanted:
            tails["delay"] = sim.empirical_delay_tail(e2e, x, d_max, delta)
    return tails


# -- output ------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.12g}"


def write_bounds(reports: list, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "x", "probability", "mode"])
        for r in reports:
            for xi, p in zip(r.x, r.values):
                w.writerow([r.metric.value, _fmt(xi), _fmt(p), r.mode.value])


def write_tail(tail, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "estimate", "upper_conf"])
        for xi, e, u in zip(tail.x_grid, tail.estimates, tail.upper_conf):
            w.writerow([_fmt(xi), _fmt(e), _fmt(u)])


def run(spec: SpecFile, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = analyze(spec)
    write_bounds(result.reports, out / "bounds.csv")

    lines, failed = [], False
    tails = simulate_tails(spec, result.reports) if spec.validation["enabled"] else {}
    for metric, tail in tails.items():
        write_tail(tail, out / f"empirical_{metric}.csv")
    for r in result.reports:
        tag = f"{r.metric.value} [{r.mode.value}]"
        vac = " vacuous" if r.vacuous else ""
        if r.metric.value in tails:
            verdict = sim.validate(r, tails[r.metric.value])
            failed |= not verdict.passed
            word = "PASS" if verdict.passed else "FAIL"
            lines.append(f"{tag}: {word} worst_margin={_fmt(verdict.worst_margin)} "
                         f"at x={_fmt(verdict.worst_x)}{vac}")
        else:
            lines.append(f"{tag}: NOT_VALIDATED{vac}")
    (out / "verdict.txt").write_text("\n".join(lines) + "\n")

    params = {
        "analysis": {**spec.analysis, "grid_step": result.grid_step},
        "validation": spec.validation,
        "thetas": {fid: fd.theta for fid, fd in spec.flows.items() if fd.theta is not None},
    }
    (out / "params.json").write_text(json.dumps(params, indent=2, sort_keys=True) + "\n")
    return EXIT_FAIL if failed else EXIT_OK


# -- entry point -------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snc", description="Stochastic network calculus bounds.")
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="compute bounds for a spec file")
    a.add_argument("spec", help="path to the JSON spec")
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--mode", choices=["general", "independent"], help="override analysis.mode")
    a.add_argument("--validate", action="store_true", help="run Monte-Carlo validation")
    a.add_argument("--seed", type=int, help="override validation.seed")
    a.add_argument("--grid-step", type=float, help="step of the tail-bound grid")
    return p


def _load(args) -> SpecFile:
    try:
        raw = json.loads(Path(args.spec).read_text())
    except OSError as e:
        raise ParseError(f"{args.spec}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{args.spec}:{e.lineno}:{e.colno}: {e.msg}") from None
    if isinstance(raw, dict):
        if args.mode is not None:
            raw.setdefault("analysis", {})
            if isinstance(raw["analysis"], dict):
                raw["analysis"]["mode"] = args.mode
        if args.validate or args.seed is not None:
            val = raw.setdefault("validation", {})
            if isinstance(val, dict):
                if args.validate:
                    val["enabled"] = True
                if args.seed is not None:
                    val["seed"] = args.seed
        if args.grid_step is not None and isinstance(raw.get("analysis"), dict):
            raw["analysis"]["grid_step"] = args.grid_step
    return build_spec(raw)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return run(_load(args), args.out)
    except NumericError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except SNCError as e:
        # spec errors and model mismatches the spec asked for
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
