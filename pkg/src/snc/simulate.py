"""Discrete-time Monte-Carlo for stochastic strict servers.

Slot convention: arrivals enter at the start of slot ``t``, the server
works during the slot, and every quantity is measured at the slot's end.
Traffic that arrives in slot ``t`` can leave in slot ``t``.

Cumulative arrays carry a leading zero, so ``A[t]`` is the amount that
arrived in slots ``1..t`` and ``A[0] = 0``.  Every routine accepts a
single trace (shape ``(T,)``) or a batch of replications (``(n, T)``);
time is always the last axis.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from snc.calculus import BoundReport
from snc.curves import Curve
from snc.errors import GridMismatch, InsufficientHorizon, LengthMismatch
from snc.sigma_rho import IncrementDist

__all__ = [
    "gen_increments", "gen_batch", "Trace", "run_strict_server", "run_tandem",
    "check_strict_server", "EmpiricalTail", "empirical_tail", "mbc_statistic",
    "vbc_statistic", "tac_statistic", "max_backlog_path", "empirical_mbc_tail",
    "empirical_backlog_tail", "empirical_delay_tail", "virtual_delay",
    "ValidationVerdict", "validate", "write_trace_csv", "write_tail_csv",
    "clopper_pearson",
]

# absolute slack for float comparisons of cumulative amounts
_TOL = 1e-9

# RNG stream ids; flows and impairments draw from disjoint streams
FLOW_STREAM = 0
IMPAIRMENT_STREAM = 1


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("SNC_THREADS", "1")))
    except ValueError:
        return 1


def gen_increments(dist: IncrementDist, T: int, seed: int, stream: int = 0,
                   rep: int = 0) -> np.ndarray:
    """``T`` i.i.d. draws from ``dist``; the stream is keyed by (seed, stream, rep)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = np.random.default_rng([int(seed), int(stream), int(rep)])
    return dist.sample(rng, T).astype(float)


def gen_batch(dist: IncrementDist, T: int, n_reps: int, seed: int,
              stream: int = 0) -> np.ndarray:
    """``(n_reps, T)`` increments, row ``k`` identical to ``gen_increments(..., rep=k)``.

    Rows are generated in parallel (capped by ``SNC_THREADS``) but each row
    owns its RNG stream, so the result does not depend on scheduling.
    """
    out = np.empty((n_reps, T))

    def fill(k):
        out[k] = gen_increments(dist, T, seed, stream, k)

    workers = _n_threads()
    if workers == 1:
        for k in range(n_reps):
            fill(k)
    else:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(fill, range(n_reps)))
    return out


def _cum(x: np.ndarray) -> np.ndarray:
    z = np.zeros(x.shape[:-1] + (1,))
    return np.concatenate([z, np.cumsum(x, axis=-1)], axis=-1)


@dataclass(frozen=True, eq=False)
class Trace:
    """One node's sample path (or a batch of them)."""

    a: np.ndarray       # arrivals per slot
    i: np.ndarray       # impairment per slot
    c: float            # ideal capacity per slot
    A: np.ndarray       # cumulative arrivals, leading 0
    A_star: np.ndarray  # cumulative departures, leading 0
    B: np.ndarray       # backlog at slot end, leading 0
    seed: int | None = None

    @property
    def T(self) -> int:
        return self.a.shape[-1]

    @property
    def departures(self) -> np.ndarray:
        return np.diff(self.A_star, axis=-1)


def run_strict_server(a, c: float, i=None, seed: int | None = None) -> Trace:
    """Fluid FIFO queue whose slot capacity is ``(c - i(t))^+``."""
    a = np.asarray(a, dtype=float)
    i = np.zeros_like(a) if i is None else np.asarray(i, dtype=float)
    if a.shape != i.shape:
        raise LengthMismatch(f"arrivals {a.shape} and impairment {i.shape} differ")
    if np.any(i < 0) or np.any(a < 0):
        raise ValueError("increments must be nonnegative")
    cap = np.maximum(c - i, 0.0)
    T = a.shape[-1]
    B = np.zeros(a.shape[:-1] + (T + 1,))
    dep = np.empty_like(a)
    b = np.zeros(a.shape[:-1])
    for t in range(T):
        q = b + a[..., t]
        served = np.minimum(q, cap[..., t])
        b = q - served
        dep[..., t] = served
        B[..., t + 1] = b
    return Trace(a, i, float(c), _cum(a), _cum(dep), B, seed)


def run_tandem(a, nodes: Sequence[tuple], seed: int | None = None) -> list[Trace]:
    """Chain strict servers; ``nodes`` is a list of ``(c, impairment)`` pairs."""
    traces = []
    cur = np.asarray(a, dtype=float)
    for c, imp in nodes:
        tr = run_strict_server(cur, c, imp, seed)
        traces.append(tr)
        cur = tr.departures
    return traces


def check_strict_server(tr: Trace, tol: float = _TOL) -> list[str]:
    """Return the violated trace invariants (empty when all hold).

    Checked: causality, monotone cumulative processes, and
    ``A*(s,t) >= c (t-s) - I(s,t)`` on every maximal backlogged period.
    A slot counts as backlogged when work is still queued at its end.
    """
    problems = []
    A, As = np.atleast_2d(tr.A), np.atleast_2d(tr.A_star)
    if np.any(As > A + tol):
        problems.append("causality: departures exceed arrivals")
    if np.any(np.diff(A, axis=-1) < -tol) or np.any(np.diff(As, axis=-1) < -tol):
        problems.append("monotonicity: cumulative process decreases")
    if np.any(A[:, 0] != 0) or np.any(As[:, 0] != 0):
        problems.append("initial condition: cumulative processes must start at 0")
    # per-slot surplus of delivered service over c - i
    surplus = np.atleast_2d(tr.departures) - (tr.c - np.atleast_2d(tr.i))
    busy = np.atleast_2d(tr.B)[:, 1:] > tol
    for row_s, row_b in zip(surplus, busy):
        if not row_b.any():
            continue
        edges = np.diff(np.concatenate([[0], row_b.astype(np.int8), [0]]))
        starts, ends = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
        cs = np.concatenate([[0.0], np.cumsum(row_s)])
        # every sub-interval [s, t) of a backlogged period, via prefix sums
        for s0, e0 in zip(starts, ends):
            seg = cs[s0:e0 + 1]
            if np.any(seg[1:] - np.maximum.accumulate(seg[:-1]) < -tol * (1 + e0 - s0)):
                problems.append(f"strict-server bound violated in slots {s0 + 1}..{e0}")
                break
        else:
            continue
        break
    return problems


# -- arrival statistics ------------------------------------------------------

def _curve_tail(alpha: Curve):
    if not math.isfinite(alpha.tail_slope):
        raise ValueError("arrival statistics need a curve with finite tail slope")
    K = int(alpha.kink)
    rho = float(alpha.tail_slope)
    c0 = float(alpha.eval(float(K))) - rho * K
    return K, rho, c0


def max_backlog_path(a, alpha: Curve) -> tuple[np.ndarray, np.ndarray]:
    """``(W, M)`` over time, each with a leading value at ``t = 0``.

    ``W(t) = sup_{0<=u<=t} [A(u,t) - alpha(t-u)]`` and ``M(t) = max_{s<=t} W(s)``.
    For ``alpha = r t`` this is the recurrence ``W(t+1) = max(W(t) + a - r, 0)``.
    A general curve is split at its kink: short lags are evaluated
    directly, long lags through a running maximum of ``rho u - A(u)``.
    """
    a = np.asarray(a, dtype=float)
    A = _cum(a)
    T = a.shape[-1]
    K, rho, c0 = _curve_tail(alpha)
    batch = A.shape[:-1]
    if K == 0 and c0 == 0:
        W = np.zeros(batch + (T + 1,))
        w = np.zeros(batch)
        for t in range(T):
            w = np.maximum(w + a[..., t] - rho, 0.0)
            W[..., t + 1] = w
    else:
        alpha_d = alpha.samples(K)
        W = np.full(batch + (T + 1,), -np.inf)
        for d in range(min(K, T) + 1):  # lags below the kink, plus d = K
            val = A[..., d:] - A[..., : T + 1 - d] - alpha_d[d]
            np.maximum(W[..., d:], val, out=W[..., d:])
        if K < T:
            run = np.maximum.accumulate(rho * np.arange(T + 1) - A, axis=-1)
            t = np.arange(K, T + 1)
            far = A[..., K:] - rho * t - c0 + run[..., : T + 1 - K]
            np.maximum(W[..., K:], far, out=W[..., K:])
    M = np.maximum.accumulate(W, axis=-1)
    return W, M


def mbc_statistic(a, alpha: Curve) -> np.ndarray:
    """``M(T)``: the maximum up-to-date virtual backlog."""
    return max_backlog_path(a, alpha)[1][..., -1]


def vbc_statistic(a, alpha: Curve) -> np.ndarray:
    """``sup_{0<=s<=T} [A(s,T) - alpha(T-s)]``."""
    return max_backlog_path(a, alpha)[0][..., -1]


def tac_statistic(a, alpha: Curve, s: int = 0) -> np.ndarray:
    """``A(s,T) - alpha(T-s)`` for one fixed start ``s`` (default 0)."""
    A = _cum(np.asarray(a, dtype=float))
    T = A.shape[-1] - 1
    return A[..., T] - A[..., s] - float(alpha.eval(float(T - s)))


# -- empirical tails ---------------------------------------------------------

def clopper_pearson(k, n: int, delta: float = 0.01):
    """One-sided ``(lower, upper)`` Clopper-Pearson bounds at level ``1 - delta``."""
    k = np.asarray(k, dtype=float)
    lo = np.where(k > 0, beta_dist.ppf(delta, np.maximum(k, 1), n - k + 1), 0.0)
    hi = np.where(k < n, beta_dist.ppf(1 - delta, k + 1, np.maximum(n - k, 1)), 1.0)
    return lo, hi


@dataclass(frozen=True, eq=False)
class EmpiricalTail:
    x_grid: np.ndarray
    estimates: np.ndarray
    n_reps: int
    delta: float
    lower_conf: np.ndarray
    upper_conf: np.ndarray

    @property
    def confidence_slack(self) -> np.ndarray:
        return self.estimates - self.lower_conf


def empirical_tail(samples, x_grid, delta: float = 0.01) -> EmpiricalTail:
    """Fraction of samples strictly above each x, with confidence bounds."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    x = np.asarray(x_grid, dtype=float)
    n = s.size
    if n == 0:
        raise ValueError("no samples")
    k = n - np.searchsorted(s, x + _TOL, side="right")
    lo, hi = clopper_pearson(k, n, delta)
    return EmpiricalTail(x, k / n, n, delta, lo, hi)


def empirical_mbc_tail(dist: IncrementDist, alpha: Curve, T: int, x_grid,
                       n_reps: int, seed: int, delta: float = 0.01) -> EmpiricalTail:
    if n_reps < 100:
        raise ValueError("n_reps must be at least 100")
    a = gen_batch(dist, T, n_reps, seed, FLOW_STREAM)
    return empirical_tail(mbc_statistic(a, alpha), x_grid, delta)


def _measure_at(tr: Trace, d_max: int) -> int:
    if d_max < 0 or d_max >= tr.T:
        raise InsufficientHorizon(f"trace of {tr.T} slots cannot spare d_max={d_max}")
    return tr.T - d_max


def empirical_backlog_tail(tr: Trace, x_grid, d_max: int = 0,
                           delta: float = 0.01) -> EmpiricalTail:
    t0 = _measure_at(tr, d_max)
    return empirical_tail(np.atleast_2d(tr.B)[:, t0], x_grid, delta)


def virtual_delay(A, A_star, t0: int, d_max: int) -> np.ndarray:
    """First ``d`` with ``A*(t0 + d) >= A(t0)``; ``inf`` if none within ``d_max``."""
    A, As = np.atleast_2d(A), np.atleast_2d(A_star)
    out = np.empty(A.shape[0])
    for k in range(A.shape[0]):
        window = As[k, t0: t0 + d_max + 1]
        d = int(np.searchsorted(window, A[k, t0] - _TOL, side="left"))
        out[k] = d if d < window.size else np.inf
    return out


def empirical_delay_tail(tr: Trace, x_grid, d_max: int,
                         delta: float = 0.01) -> EmpiricalTail:
    """Tail of the virtual delay at slot ``T - d_max``.

    Delays not resolved within ``d_max`` count as infinite, which can only
    raise the estimate.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.size and x.max() > d_max:
        raise InsufficientHorizon(f"x up to {x.max():g} needs d_max >= that, got {d_max}")
    t0 = _measure_at(tr, d_max)
    return empirical_tail(virtual_delay(tr.A, tr.A_star, t0, d_max), x, delta)


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class ValidationVerdict:
    metric: str
    passed: bool
    worst_margin: float
    worst_x: float

    def line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        return f"{self.metric}: {word} worst_margin={self.worst_margin:.6g} at x={self.worst_x:g}"


def validate(report: BoundReport, tail: EmpiricalTail) -> ValidationVerdict:
    """PASS iff ``estimate - slack <= bound`` at every grid point."""
    bx, tx = np.asarray(report.x, dtype=float), np.asarray(tail.x_grid, dtype=float)
    if bx.shape != tx.shape or not np.allclose(bx, tx, rtol=0, atol=1e-12):
        raise GridMismatch("bound and empirical tail use different x grids")
    margin = np.minimum(report.values, 1.0) - tail.lower_conf
    k = int(np.argmin(margin))
    metric = getattr(report.metric, "value", str(report.metric))
    return ValidationVerdict(metric, bool(margin[k] >= -_TOL), float(margin[k]), float(bx[k]))


# -- export ------------------------------------------------------------------

def write_trace_csv(tr: Trace, path) -> None:
    if tr.a.ndim != 1:
        raise ValueError("export one replication at a time")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "a", "i", "A", "A_star", "B"])
        for t in range(1, tr.T + 1):
            w.writerow([t, repr(tr.a[t - 1]), repr(tr.i[t - 1]), repr(tr.A[t]),
                        repr(tr.A_star[t]), repr(tr.B[t])])


def write_tail_csv(tail: EmpiricalTail, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "estimate", "upper_conf"])
        for x, e, u in zip(tail.x_grid, tail.estimates, tail.upper_conf):
            w.writerow([f"{x:.10g}", f"{e:.10g}", f"{u:.10g}"])
