"""Superposition, concatenation, output characterization, leftover service
and backlog/delay guarantees, in (min,+) form and in independent form.

The independent variants replace the (min,+) combination of bounding
functions by the complement-convolution rule and require every server to
be a :class:`~snc.models.StrictServer`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np

from snc.curves import (
    Curve, curve_add, curve_sub, inf_deficit, inf_deficit_shifted_service,
    min_plus_conv, min_plus_deconv,
)
from snc.errors import UnsupportedTopology, VariantMismatch
from snc.models import (
    ArrivalVariant as AV, ServiceCurveModel, ServiceVariant as SV,
    StochasticArrivalCurve, StrictServer, sc, strict_to_service_curve,
)
from snc.tailbounds import (
    Deterministic, TailBound, default_grid, minplus_closed_form, minplus_conv_bar,
    stieltjes_conv_bound,
)


class Mode(str, enum.Enum):
    GENERAL = "general"
    INDEPENDENT = "independent"
    DET_SERVER = "det_server"


class Metric(str, enum.Enum):
    BACKLOG = "backlog"
    DELAY = "delay"
    OUTPUT = "output"
    ARRIVAL = "arrival"


# Properties proven for each (arrival, service) model pair without extra
# constraints on the bounding functions: 1 superposition, 2 concatenation,
# 3 output, 4 per-flow (leftover) service, 5 backlog/delay guarantees.
PROPERTIES = {
    (AV.TAC, SV.WEAK_SC): {1},
    (AV.TAC, SV.SC): {1, 3},
    (AV.VBC, SV.WEAK_SC): {1, 4, 5},
    (AV.VBC, SV.SC): {1, 2, 3, 5},
    (AV.MBC, SV.WEAK_SC): {1, 4, 5},
    (AV.MBC, SV.SC): {1, 2, 3, 4, 5},
}


def _require(prop: int, arrival: AV, service: SV) -> None:
    if prop not in PROPERTIES[(arrival, service)]:
        raise VariantMismatch(
            f"property P.{prop} is not available for {arrival.name} arrivals "
            f"with a {service.name} server")


@dataclass(frozen=True, eq=False)
class BoundReport:
    metric: Metric
    x: np.ndarray
    values: np.ndarray
    mode: Mode
    vacuous: bool = False

    def zero_crossing(self) -> float | None:
        """Smallest grid x whose bound is exactly 0, if any."""
        hit = np.flatnonzero(self.values == 0)
        return float(self.x[hit[0]]) if hit.size else None


Server = Union[ServiceCurveModel, StrictServer]


@dataclass(frozen=True)
class NetworkSpec:
    """A tandem path for one tagged flow.

    ``cross_flows[n]`` lists the flows that share node ``n`` only.
    """

    nodes: tuple
    tagged_flow: StochasticArrivalCurve
    cross_flows: tuple = ()
    independence: Mode = Mode.GENERAL

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "cross_flows", tuple(tuple(c) for c in self.cross_flows))
        object.__setattr__(self, "independence", Mode(self.independence))
        if not self.nodes:
            raise UnsupportedTopology("a tandem needs at least one node")
        if self.cross_flows and len(self.cross_flows) != len(self.nodes):
            raise UnsupportedTopology("cross_flows must list one entry per node")
        if self.independence == Mode.DET_SERVER:
            raise ValueError("independence must be general or independent")


@dataclass(frozen=True, eq=False)
class TandemResult:
    backlog: BoundReport
    delay: BoundReport
    end_to_end: ServiceCurveModel
    leftovers: list = field(default_factory=list)
    cross_aggregates: list = field(default_factory=list)
    delay_det_server: BoundReport | None = None
    output: StochasticArrivalCurve | None = None


def _grid_for(bounds: Sequence[TailBound], grid, x_max: float = 0.0, step=None):
    if grid is not None:
        return np.asarray(grid, dtype=float)
    ext = max([x_max] + [b.extent for b in bounds])
    return default_grid(*bounds, step=step, x_max=max(ext, 1.0))


def _all_deterministic(bounds) -> bool:
    return all(isinstance(b, Deterministic) for b in bounds)


def _fold_indep(bounds: Sequence[TailBound], grid) -> TailBound:
    if _all_deterministic(bounds):
        return Deterministic()
    live = [b for b in bounds if not isinstance(b, Deterministic)]
    if len(live) == 1:
        return live[0]
    x = _grid_for(live, grid)
    return reduce(lambda a, b: stieltjes_conv_bound(a, b, x), live)


def _minplus(a: TailBound, b: TailBound, grid, x_max: float = 0.0) -> TailBound:
    closed = minplus_closed_form(a, b)
    if closed is not None:
        return closed
    return minplus_conv_bar(a, b, _grid_for([a, b], grid, x_max))


def _fold_minplus(bounds: Sequence[TailBound], grid) -> TailBound:
    return reduce(lambda a, b: _minplus(a, b, grid), bounds)


# -- superposition -----------------------------------------------------------

def _check_mbc(flows: Sequence[StochasticArrivalCurve]) -> None:
    if not flows:
        raise ValueError("need at least one flow")
    for fl in flows:
        if fl.variant != AV.MBC:
            raise VariantMismatch(f"expected an m.b.c arrival curve, got {fl.variant.name}")


def superpose(flows: Sequence[StochasticArrivalCurve], grid=None) -> StochasticArrivalCurve:
    _check_mbc(flows)
    alpha = reduce(curve_add, [fl.alpha for fl in flows])
    f = _fold_minplus([fl.f for fl in flows], grid)
    return StochasticArrivalCurve(AV.MBC, alpha, f)


def superpose_indep(flows: Sequence[StochasticArrivalCurve], grid=None) -> StochasticArrivalCurve:
    _check_mbc(flows)
    alpha = reduce(curve_add, [fl.alpha for fl in flows])
    return StochasticArrivalCurve(AV.MBC, alpha, _fold_indep([fl.f for fl in flows], grid))


# -- concatenation -----------------------------------------------------------

def concatenate(servers: Sequence[ServiceCurveModel], grid=None) -> ServiceCurveModel:
    if not servers:
        raise ValueError("need at least one server")
    for s in servers:
        if s.variant != SV.SC:
            raise VariantMismatch("concatenation needs stochastic service curves, "
                                  "weak ones do not compose")
    beta = reduce(min_plus_conv, [s.beta for s in servers])
    g = _fold_minplus([s.g for s in servers], grid)
    return sc(beta, g)


def concatenate_indep(servers: Sequence[StrictServer], grid=None) -> ServiceCurveModel:
    if not servers:
        raise ValueError("need at least one server")
    for s in servers:
        if not isinstance(s, StrictServer):
            raise VariantMismatch("independent concatenation needs strict servers")
    parts = [strict_to_service_curve(s) for s in servers]
    if len(parts) == 1:
        return parts[0]
    beta = reduce(min_plus_conv, [p.beta for p in parts])
    return sc(beta, _fold_indep([p.g for p in parts], grid))


# -- output characterization -------------------------------------------------

def output(flow: StochasticArrivalCurve, server: ServiceCurveModel, y_max=None,
           grid=None) -> StochasticArrivalCurve:
    _require(3, flow.variant, server.variant)
    alpha_star = min_plus_deconv(flow.alpha, server.beta, y_max)
    f_star = _fold_minplus([flow.f, server.g], grid)
    return StochasticArrivalCurve(flow.variant, alpha_star, f_star)


def output_indep(flow: StochasticArrivalCurve, server: StrictServer, grid=None,
                 y_max=None) -> StochasticArrivalCurve:
    _require(3, flow.variant, SV.SC)
    beta = strict_to_service_curve(server).beta
    alpha_star = min_plus_deconv(flow.alpha, beta, y_max)
    f_star = _fold_indep([flow.f, server.impairment_bound], grid)
    return StochasticArrivalCurve(flow.variant, alpha_star, f_star)


# -- leftover (per-flow) service ---------------------------------------------

def leftover(server: ServiceCurveModel, cross: StochasticArrivalCurve,
             grid=None) -> ServiceCurveModel:
    """Service left to one flow after the ``cross`` traffic is subtracted."""
    _require(4, cross.variant, server.variant)
    beta = curve_sub(server.beta, cross.alpha)
    g = _fold_minplus([server.g, cross.f], grid)
    return ServiceCurveModel(server.variant, beta, g)


def leftover_strict(server: StrictServer, cross: StochasticArrivalCurve,
                    grid=None) -> StrictServer:
    """The node seen by the tagged flow, with cross traffic as extra impairment.

    Cross traffic independent of the impairment adds to it, so the
    impairment becomes ``<1 - gbar * f2bar, gamma + alpha2>``.
    """
    _check_mbc([cross])
    gamma = curve_add(server.impairment_alpha, cross.alpha)
    curve_sub(server.beta_hat, gamma)  # raises NotInF if nothing is left
    bound = _fold_indep([server.impairment_bound, cross.f], grid)
    return StrictServer(server.beta_hat, gamma, bound)


def leftover_indep(server: StrictServer, cross: StochasticArrivalCurve,
                   grid=None) -> ServiceCurveModel:
    return strict_to_service_curve(leftover_strict(server, cross, grid))


# -- service guarantees ------------------------------------------------------

def _report(metric: Metric, x, h: TailBound | None, args, mode: Mode,
            vacuous: bool) -> BoundReport:
    x = np.asarray(x, dtype=float)
    if vacuous:
        return BoundReport(metric, x, np.ones_like(x), mode, True)
    args = np.asarray(args, dtype=float)
    vals = np.ones_like(x)
    ok = args >= 0
    if ok.any():
        vals[ok] = np.minimum(h.eval(args[ok]), 1.0)
    return BoundReport(metric, x, np.minimum.accumulate(vals), mode, False)


def _combine(f: TailBound, g: TailBound, indep: bool, grid, args) -> TailBound:
    finite = np.asarray(args)[np.isfinite(args)]
    x_max = float(finite.max()) if finite.size else 0.0
    if not indep:
        return _minplus(f, g, grid, x_max)
    if _all_deterministic([f, g]):
        return Deterministic()
    return stieltjes_conv_bound(f, g, _grid_for([f, g], grid, x_max))


def _backlog(flow, beta, g, x_grid, s_max, grid, mode) -> BoundReport:
    x = np.asarray(x_grid, dtype=float)
    d = inf_deficit(beta, flow.alpha, 0.0, s_max)
    if d == -math.inf:
        return _report(Metric.BACKLOG, x, None, None, mode, True)
    args = x + d
    h = _combine(flow.f, g, mode == Mode.INDEPENDENT, grid, args)
    return _report(Metric.BACKLOG, x, h, args, mode, False)


def _delay(flow, beta, g, x_grid, s_max, grid, mode) -> BoundReport:
    x = np.asarray(x_grid, dtype=float)
    if beta.tail_slope < flow.alpha.tail_slope:
        return _report(Metric.DELAY, x, None, None, mode, True)
    if mode == Mode.DET_SERVER:
        args = np.array([inf_deficit_shifted_service(beta, flow.alpha, xi, s_max) for xi in x])
    else:
        args = np.array([inf_deficit(beta, flow.alpha, xi, s_max, negative="linear")
                         for xi in x])
    h = _combine(flow.f, g, mode == Mode.INDEPENDENT, grid, args)
    return _report(Metric.DELAY, x, h, args, mode, False)


def backlog_bound(flow: StochasticArrivalCurve, server: ServiceCurveModel, x_grid,
                  s_max=None, grid=None) -> BoundReport:
    _require(5, flow.variant, server.variant)
    return _backlog(flow, server.beta, server.g, x_grid, s_max, grid, Mode.GENERAL)


def delay_bound(flow: StochasticArrivalCurve, server: ServiceCurveModel, x_grid,
                s_max=None, grid=None) -> BoundReport:
    """Delay tail from ``f (x) g`` at ``inf_s beta(s) - alpha(s - x)``.

    For ``s < x`` alpha is continued backwards along its initial slope and
    clipped at zero.  Any nonnegative continuation keeps the bound valid;
    this one reproduces the classic ``sigma / rho`` delay for token buckets.
    """
    _require(5, flow.variant, server.variant)
    return _delay(flow, server.beta, server.g, x_grid, s_max, grid, Mode.GENERAL)


def delay_bound_det_server(flow: StochasticArrivalCurve, beta, x_grid,
                           s_max=None) -> BoundReport:
    """Tighter delay bound, valid only when the server is deterministic."""
    if isinstance(beta, ServiceCurveModel):
        if not isinstance(beta.g, Deterministic):
            raise VariantMismatch("the shifted-service delay bound needs a deterministic server")
        beta = beta.beta
    elif isinstance(beta, StrictServer):
        if not isinstance(beta.impairment_bound, Deterministic):
            raise VariantMismatch("the shifted-service delay bound needs a deterministic server")
        beta = strict_to_service_curve(beta).beta
    _require(5, flow.variant, SV.SC)
    return _delay(flow, beta, Deterministic(), x_grid, s_max, None, Mode.DET_SERVER)


def _strict_parts(server: StrictServer):
    if not isinstance(server, StrictServer):
        raise VariantMismatch("independent bounds need a strict server")
    s = strict_to_service_curve(server)
    return s.beta, s.g


def backlog_bound_indep(flow: StochasticArrivalCurve, server: StrictServer, x_grid,
                        s_max=None, grid=None) -> BoundReport:
    _require(5, flow.variant, SV.SC)
    beta, g = _strict_parts(server)
    return _backlog(flow, beta, g, x_grid, s_max, grid, Mode.INDEPENDENT)


def delay_bound_indep(flow: StochasticArrivalCurve, server: StrictServer, x_grid,
                      s_max=None, grid=None) -> BoundReport:
    _require(5, flow.variant, SV.SC)
    beta, g = _strict_parts(server)
    return _delay(flow, beta, g, x_grid, s_max, grid, Mode.INDEPENDENT)


# -- tandem ------------------------------------------------------------------

def _as_service(node: Server) -> ServiceCurveModel:
    return strict_to_service_curve(node) if isinstance(node, StrictServer) else node


def analyze_tandem(spec: NetworkSpec, x_grid, y_max=None, s_max=None, grid=None,
                   want_output: bool = False) -> TandemResult:
    """Bounds for the tagged flow across the tandem.

    Per node: aggregate its cross flows, take the leftover service, then
    concatenate along the path.  In independent mode every node must be a
    strict server; cross traffic is folded into each node's impairment and
    the nodes are combined with the independent concatenation rule.
    """
    flow = spec.tagged_flow
    cross = spec.cross_flows or tuple(() for _ in spec.nodes)
    indep = spec.independence == Mode.INDEPENDENT
    aggregates, leftovers = [], []

    if indep:
        stricts = []
        for node, cs in zip(spec.nodes, cross):
            if not isinstance(node, StrictServer):
                raise VariantMismatch("independent mode requires strict-server nodes")
            agg = superpose_indep(list(cs), grid) if cs else None
            strict = leftover_strict(node, agg, grid) if agg else node
            aggregates.append(agg)
            stricts.append(strict)
            leftovers.append(strict_to_service_curve(strict))
        e2e = concatenate_indep(stricts, grid)
    else:
        for node, cs in zip(spec.nodes, cross):
            svc = _as_service(node)
            agg = superpose(list(cs), grid) if cs else None
            aggregates.append(agg)
            leftovers.append(leftover(svc, agg, grid) if agg else svc)
        e2e = leftovers[0] if len(leftovers) == 1 else concatenate(leftovers, grid)

    mode = Mode.INDEPENDENT if indep else Mode.GENERAL
    if not indep:
        _require(5, flow.variant, e2e.variant)
    backlog = _backlog(flow, e2e.beta, e2e.g, x_grid, s_max, grid, mode)
    delay = _delay(flow, e2e.beta, e2e.g, x_grid, s_max, grid, mode)
    det = None
    if isinstance(e2e.g, Deterministic):
        det = _delay(flow, e2e.beta, e2e.g, x_grid, s_max, None, Mode.DET_SERVER)
    out = None
    if want_output:
        _require(3, flow.variant, e2e.variant)
        alpha_star = min_plus_deconv(flow.alpha, e2e.beta, y_max)
        f_star = _fold_indep([flow.f, e2e.g], grid) if indep \
            else _fold_minplus([flow.f, e2e.g], grid)
        out = StochasticArrivalCurve(flow.variant, alpha_star, f_star)
    return TandemResult(backlog, delay, e2e, leftovers, aggregates, det, out)
