"""Bounding functions: nonnegative, wide-sense decreasing tails.

Numeric paths always round toward a *larger* bound.  A slightly loose tail
bound is still a bound; a slightly tight one is wrong.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from snc.errors import EmptyGrid

INF = math.inf

# grid lookups tolerate this much floating-point noise in x
_SNAP = 1e-9

__all__ = [
    "TailBound", "Deterministic", "Vacuous", "Exp", "ExpMinPlus", "GridDec",
    "PointwiseMin", "PointwiseMax", "Complement", "prob_at", "complement_clip",
    "minplus_conv_bar", "minplus_closed_form", "stieltjes_conv_bound", "pointwise_min_bar",
    "pointwise_max_bar", "make_grid", "default_grid",
]


class TailBound:
    """Base class; ``eval`` takes scalars or arrays, ``x < 0`` reads ``x = 0``."""

    def _at(self, x: np.ndarray) -> np.ndarray:  # x >= 0
        raise NotImplementedError

    def eval(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self._at(np.maximum(arr, 0.0)), dtype=float)
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    def prob_at(self, x):
        return np.minimum(self.eval(x), 1.0) if np.ndim(x) else min(self.eval(x), 1.0)

    # decay rate used to pick default grid spacing; None if not exponential
    @property
    def decay(self) -> float | None:
        return None

    @property
    def extent(self) -> float:
        """An x beyond which the bound is negligible (or no longer resolved)."""
        return 0.0


def prob_at(b: TailBound, x):
    return b.prob_at(x)


@dataclass(frozen=True)
class Deterministic(TailBound):
    """The zero bound: the quantity never exceeds any x >= 0."""

    def _at(self, x):
        return np.zeros_like(x)


@dataclass(frozen=True)
class Vacuous(TailBound):
    """+inf everywhere: no information."""

    def _at(self, x):
        return np.full_like(x, INF)


@dataclass(frozen=True)
class Exp(TailBound):
    """``a * exp(-theta * x)``."""

    a: float
    theta: float

    def __post_init__(self):
        if self.a < 0 or self.theta <= 0:
            raise ValueError(f"Exp needs a >= 0 and theta > 0, got {self.a}, {self.theta}")

    def _at(self, x):
        return self.a * np.exp(-self.theta * x)

    @property
    def decay(self):
        return self.theta

    @property
    def extent(self):
        # where a*e^{-theta x} drops below 1e-12
        return max(math.log(max(self.a, 1.0) * 1e12) / self.theta, 0.0)


@dataclass(frozen=True)
class ExpMinPlus(TailBound):
    """Closed form of ``Exp(a, theta) (min,+) Exp(b, theta)``.

    The interior optimum ``2 sqrt(ab) e^{-theta x / 2}`` is only reachable
    when the stationary point lies in ``[0, x]``; otherwise one of the
    boundary values wins.
    """

    a: float
    b: float
    theta: float

    def _at(self, x):
        a, b, th = self.a, self.b, self.theta
        edge = np.minimum(a + b * np.exp(-th * x), a * np.exp(-th * x) + b)
        y_star = (x + math.log(a / b) / th) / 2.0
        feasible = (y_star >= 0) & (y_star <= x)
        inner = 2.0 * math.sqrt(a * b) * np.exp(-th * x / 2.0)
        return np.where(feasible, np.minimum(inner, edge), edge)

    @property
    def decay(self):
        return self.theta

    @property
    def extent(self):
        return max(2 * math.log(max(2 * math.sqrt(self.a * self.b), 1.0) * 1e12) / self.theta, 0.0)


@dataclass(frozen=True, eq=False)
class GridDec(TailBound):
    """Values on an x-grid; between grid points the left neighbour is used.

    For a decreasing function the left neighbour is an upper bound, so
    the step interpolation never understates a tail.
    """

    x: np.ndarray
    v: np.ndarray
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        v = np.array(self.v, dtype=float)
        if x.ndim != 1 or x.size == 0 or x.shape != v.shape:
            raise EmptyGrid("GridDec needs matching nonempty 1-D x and v")
        if x[0] != 0 or np.any(np.diff(x) <= 0):
            raise ValueError("GridDec x must start at 0 and be strictly increasing")
        if self._check:
            if np.isnan(v).any() or np.any(v < 0):
                raise ValueError("GridDec values must be nonnegative")
            if not np.all(v[1:] <= v[:-1]):
                raise ValueError("GridDec values must be wide-sense decreasing")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    def _at(self, q):
        q = np.asarray(q, dtype=float)
        idx = np.searchsorted(self.x, q + _SNAP * np.maximum(1.0, q), side="right") - 1
        return self.v[np.clip(idx, 0, None)]

    @property
    def extent(self):
        return float(self.x[-1])

    def __repr__(self):
        return f"GridDec(n={self.x.size}, x_max={self.x[-1]:g}, v0={self.v[0]:g}, v_end={self.v[-1]:g})"


@dataclass(frozen=True)
class PointwiseMin(TailBound):
    f: TailBound
    g: TailBound

    def _at(self, x):
        return np.minimum(self.f._at(x), self.g._at(x))

    @property
    def extent(self):
        return max(self.f.extent, self.g.extent)


@dataclass(frozen=True)
class PointwiseMax(TailBound):
    f: TailBound
    g: TailBound

    def _at(self, x):
        return np.maximum(self.f._at(x), self.g._at(x))

    @property
    def extent(self):
        return max(self.f.extent, self.g.extent)


def pointwise_min_bar(f: TailBound, g: TailBound) -> TailBound:
    if isinstance(f, Vacuous):
        return g
    if isinstance(g, Vacuous) or f == g:
        return f
    return PointwiseMin(f, g)


def pointwise_max_bar(f: TailBound, g: TailBound) -> TailBound:
    if isinstance(f, Deterministic) or f == g:
        return g
    if isinstance(g, Deterministic):
        return f
    return PointwiseMax(f, g)


@dataclass(frozen=True)
class Complement:
    """``1 - min(f(x), 1)``: a wide-sense increasing function into [0, 1]."""

    f: TailBound

    def __call__(self, x):
        return 1.0 - np.minimum(self.f.eval(x), 1.0)


def complement_clip(f: TailBound) -> Complement:
    return Complement(f)


def make_grid(x_max: float, step: float) -> np.ndarray:
    """Uniform grid ``0, step, ..., >= x_max``."""
    if step <= 0:
        raise EmptyGrid("grid step must be positive")
    n = int(math.ceil(x_max / step - 1e-9)) + 1
    return np.arange(max(n, 1), dtype=float) * step


def default_grid(*bounds: TailBound, step: float | None = None,
                 x_max: float | None = None) -> np.ndarray:
    """Grid wide enough for every input, fine relative to any decay rate."""
    decays = [b.decay for b in bounds if b.decay]
    if step is None:
        step = min([0.01] + [0.05 / d for d in decays])
    if x_max is None:
        x_max = max([1.0] + [b.extent for b in bounds])
    return make_grid(x_max, step)


def _check_grid(x_grid) -> np.ndarray:
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise EmptyGrid("empty x grid")
    if x[0] != 0 or np.any(np.diff(x) <= 0):
        raise EmptyGrid("x grid must start at 0 and be strictly increasing")
    return x


def _uniform(x: np.ndarray) -> bool:
    if x.size < 3:
        return True
    d = np.diff(x)
    return bool(np.allclose(d, d[0], rtol=1e-9, atol=0))


def minplus_closed_form(f: TailBound, g: TailBound) -> TailBound | None:
    """Exact dependent-sum bound when one is known, else ``None``."""
    if isinstance(f, Vacuous) or isinstance(g, Vacuous):
        return Vacuous()
    if isinstance(f, Deterministic):
        return g
    if isinstance(g, Deterministic):
        return f
    if isinstance(f, Exp) and isinstance(g, Exp) and f.theta == g.theta:
        if f.a == 0:
            return g
        if g.a == 0:
            return f
        return ExpMinPlus(f.a, g.a, f.theta)
    return None


def minplus_conv_bar(f: TailBound, g: TailBound, x_grid=None,
                     method: str = "auto") -> TailBound:
    """Dependent-sum bound ``inf_{0<=y<=x} f(y) + g(x - y)``.

    Closed forms cover the identity, the absorbing element and same-rate
    exponentials.  Otherwise y ranges over the x grid only, which can only
    raise the infimum, so the result stays a valid bound.
    """
    if method not in ("auto", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        closed = minplus_closed_form(f, g)
        if closed is not None:
            return closed
    x = default_grid(f, g) if x_grid is None else _check_grid(x_grid)
    n = x.size
    fy = f.eval(x)
    out = np.full(n, INF)
    if _uniform(x):
        gx = g.eval(x)
        for j in range(n):
            np.minimum(out[j:], fy[j] + gx[: n - j], out=out[j:])
    else:
        for j in range(n):
            np.minimum(out[j:], fy[j] + g.eval(x[j:] - x[j]), out=out[j:])
    return GridDec(x, out)


def stieltjes_conv_bound(f: TailBound, g: TailBound, x_grid) -> GridDec:
    """Independent-sum bound ``1 - (fbar * gbar)(x)``.

    ``fbar = 1 - min(f, 1)``.  The Stieltjes integral is replaced by a lower
    Riemann sum: on each cell ``(y_k, y_{k+1}]`` the integrand is taken at
    ``x - y_{k+1}``, its smallest value there.  ``gbar``'s atom at 0 is
    included exactly.  The result is therefore never below the true
    expression, then clipped to [0, 1] and made nonincreasing.
    """
    x = _check_grid(x_grid)
    fbar, gbar = Complement(f), Complement(g)
    G = np.asarray(gbar(x), dtype=float)
    dG = np.empty_like(G)
    dG[0] = G[0]
    dG[1:] = np.diff(G)
    if _uniform(x):
        F = np.asarray(fbar(x), dtype=float)
        mass = np.convolve(F, dG)[: x.size]
    else:
        mass = np.empty(x.size)
        for i in range(x.size):
            mass[i] = np.dot(fbar(x[i] - x[: i + 1]), dG[: i + 1])
    h = np.clip(1.0 - mass, 0.0, 1.0)
    return GridDec(x, np.minimum.accumulate(h))
