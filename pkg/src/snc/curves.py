"""Curves in F (nonnegative, wide-sense increasing) over discrete time.

Every curve is *eventually affine*: past an integer ``kink`` it continues
with constant ``tail_slope``.  All (min,+) operations exploit this so that
results are exact at every integer slot, not just inside a sampled window.

Negative arguments take the value at zero, ``c(t) = c(0)`` for ``t < 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from snc.errors import DivergentDeconvolution, NotInF

INF = math.inf

__all__ = [
    "Curve", "Epsilon", "Identity", "ConstantRate", "Affine", "RateLatency",
    "GridPWL", "eval_curve", "min_plus_conv", "min_plus_deconv",
    "pointwise_min", "pointwise_max", "curve_add", "curve_sub", "is_in_F",
    "check_in_F", "inf_deficit", "inf_deficit_shifted_service", "to_grid",
    "affine_params", "curves_equal",
]


class Curve:
    """Base class. Subclasses define ``kink``, ``tail_slope`` and ``_at``."""

    kink: int = 0
    tail_slope: float = 0.0

    def _at(self, t: np.ndarray) -> np.ndarray:  # t >= 0
        raise NotImplementedError

    def eval(self, t):
        arr = np.asarray(t, dtype=float)
        out = self._at(np.maximum(arr, 0.0))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = eval

    def samples(self, n: int) -> np.ndarray:
        """Values at t = 0, 1, ..., n."""
        return np.asarray(self._at(np.arange(n + 1, dtype=float)), dtype=float)


@dataclass(frozen=True)
class Epsilon(Curve):
    """The zero element of the dioid: +inf everywhere."""

    kink: int = 0
    tail_slope: float = INF

    def _at(self, t):
        return np.full(np.shape(t), INF)


@dataclass(frozen=True)
class Identity(Curve):
    """The identity of (min,+) convolution: 0 at t=0, +inf afterwards."""

    kink: int = 1
    tail_slope: float = INF

    def _at(self, t):
        return np.where(np.asarray(t) <= 0, 0.0, INF)


@dataclass(frozen=True)
class ConstantRate(Curve):
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise NotInF(f"negative rate {self.r}")

    @property
    def tail_slope(self):
        return float(self.r)

    def _at(self, t):
        return self.r * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Affine(Curve):
    """Token bucket ``rho * t + sigma``; note ``Affine(rho, sigma)(0) == sigma``."""

    rho: float
    sigma: float

    def __post_init__(self):
        if self.rho < 0 or self.sigma < 0:
            raise NotInF(f"Affine({self.rho}, {self.sigma}) is not in F")

    @property
    def tail_slope(self):
        return float(self.rho)

    def _at(self, t):
        return self.rho * np.asarray(t, dtype=float) + self.sigma


@dataclass(frozen=True)
class RateLatency(Curve):
    R: float
    T: float

    def __post_init__(self):
        if self.R < 0 or self.T < 0:
            raise NotInF(f"RateLatency({self.R}, {self.T}) is not in F")

    @property
    def kink(self):
        return int(math.ceil(self.T))

    @property
    def tail_slope(self):
        return float(self.R)

    def _at(self, t):
        return self.R * np.maximum(np.asarray(t, dtype=float) - self.T, 0.0)


@dataclass(frozen=True, eq=False)
class GridPWL(Curve):
    """Samples at t = 0..H, then affine continuation with ``tail_slope``.

    Between integer slots the curve is linearly interpolated; every
    operation in this module only relies on the integer samples.
    """

    samples_: np.ndarray
    tail_slope: float = 0.0
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        s = np.array(self.samples_, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("GridPWL needs a nonempty 1-D sample array")
        s.setflags(write=False)
        object.__setattr__(self, "samples_", s)
        if self._check:
            if self.tail_slope < 0:
                raise NotInF(f"negative tail slope {self.tail_slope}")
            if np.isnan(s).any() or np.any(s < 0):
                raise NotInF("GridPWL has negative or NaN samples")
            if not np.all(s[1:] >= s[:-1]):
                raise NotInF("GridPWL samples are not wide-sense increasing")

    @property
    def horizon(self) -> int:
        return self.samples_.size - 1

    @property
    def kink(self):
        return self.horizon

    def _at(self, t):
        t = np.asarray(t, dtype=float)
        H = self.horizon
        s = self.samples_
        tc = np.minimum(t, H)
        lo = np.floor(tc).astype(int)
        hi = np.minimum(lo + 1, H)
        frac = tc - lo
        with np.errstate(invalid="ignore"):
            inside = np.where(frac == 0, s[lo], s[lo] + frac * (s[hi] - s[lo]))
            tail = s[H] + self.tail_slope * np.maximum(t - H, 0.0)
        return np.where(t <= H, inside, tail)

    def __repr__(self):
        head = ", ".join(f"{v:g}" for v in self.samples_[:6])
        more = ", ..." if self.samples_.size > 6 else ""
        return f"GridPWL([{head}{more}], H={self.horizon}, tail_slope={self.tail_slope:g})"


def eval_curve(c: Curve, t):
    return c.eval(t)


def affine_params(c: Curve):
    """``(rho, sigma)`` for rate/affine curves, else ``None``."""
    if isinstance(c, ConstantRate):
        return float(c.r), 0.0
    if isinstance(c, Affine):
        return float(c.rho), float(c.sigma)
    return None


def _affine(rho: float, sigma: float) -> Curve:
    if rho < 0 or sigma < 0:
        raise NotInF(f"rho={rho}, sigma={sigma} is not in F")
    return ConstantRate(rho) if sigma == 0 else Affine(rho, sigma)


def to_grid(c: Curve, horizon: int | None = None) -> GridPWL:
    if isinstance(c, GridPWL) and (horizon is None or horizon == c.horizon):
        return c
    H = c.kink if horizon is None else max(int(horizon), c.kink)
    return GridPWL(c.samples(H), c.tail_slope, _check=False)


def _is_special(c: Curve) -> bool:
    return isinstance(c, (Epsilon, Identity))


def curves_equal(f: Curve, g: Curve, horizon: int | None = None, tol: float = 0.0) -> bool:
    """Compare two curves at every integer slot (exact up to ``tol``)."""
    H = max(f.kink, g.kink) + 1 if horizon is None else horizon
    a, b = f.samples(H), g.samples(H)
    both_inf = np.isinf(a) & np.isinf(b)
    close = both_inf | (np.abs(a - b) <= tol)
    slopes = f.tail_slope == g.tail_slope or abs(f.tail_slope - g.tail_slope) <= tol
    return bool(close.all() and (horizon is not None or slopes))


def is_in_F(c: Curve, horizon: int | None = None) -> bool:
    H = (c.kink if horizon is None else max(horizon, c.kink)) + 1
    s = c.samples(H)
    if np.isnan(s).any() or (s < 0).any() or not np.all(s[1:] >= s[:-1]):
        return False
    return c.tail_slope >= 0


def check_in_F(c: Curve, what: str = "curve") -> Curve:
    if not is_in_F(c):
        raise NotInF(f"{what} is not nonnegative and wide-sense increasing: {c!r}")
    return c


def _grid_min_conv(fs: np.ndarray, gs: np.ndarray) -> np.ndarray:
    """``out[t] = min_{0<=y<=t} fs[y] + gs[t-y]`` for equal-length arrays."""
    n = fs.size
    out = np.full(n, INF)
    for y in range(n):
        np.minimum(out[y:], fs[y] + gs[: n - y], out=out[y:])
    return out


def min_plus_conv(f: Curve, g: Curve) -> Curve:
    """(min,+) convolution ``inf_{0<=y<=t} f(y) + g(t-y)`` over integer y."""
    if isinstance(f, Epsilon) or isinstance(g, Epsilon):
        return Epsilon()
    if isinstance(g, Identity):
        return f
    if isinstance(f, Identity):
        return g
    if isinstance(f, RateLatency) and isinstance(g, RateLatency):
        return RateLatency(min(f.R, g.R), f.T + g.T)
    pf, pg = affine_params(f), affine_params(g)
    if pf and pg:
        return _affine(min(pf[0], pg[0]), pf[1] + pg[1])

    Kf, Kg = f.kink, g.kink
    sf, sg = f.tail_slope, g.tail_slope
    N = Kf + Kg
    fs, gs = f.samples(N), g.samples(N)
    head = _grid_min_conv(fs, gs)
    # Past N the result is the lower envelope of two lines, one per tail slope.
    z = np.arange(Kg + 1)
    cf = np.min(gs[: Kg + 1] + fs[Kf] - sf * (z + Kf))
    y = np.arange(Kf + 1)
    cg = np.min(fs[: Kf + 1] + gs[Kg] - sg * (y + Kg))
    H = N
    if sf != sg:
        cross = (cg - cf) / (sf - sg)
        if cross > N:
            H = int(math.ceil(cross))
    if H > N:
        t = np.arange(N + 1, H + 1, dtype=float)
        ext = np.minimum(cf + sf * t, cg + sg * t)
        head = np.concatenate([head, ext])
    return GridPWL(head, min(sf, sg))


def min_plus_deconv(f: Curve, g: Curve, y_max: int | None = None) -> Curve:
    """``sup_{0<=y<=y_max} f(t+y) - g(y)``.

    With ``y_max=None`` the supremum over all ``y >= 0`` is computed
    exactly; it is attained before both curves reach their tails.
    """
    if isinstance(g, Identity):
        return f
    if _is_special(f) or isinstance(g, Epsilon):
        raise ValueError("deconvolution is undefined for infinite-valued operands")
    sf, sg = f.tail_slope, g.tail_slope
    if sf > sg:
        raise DivergentDeconvolution(
            f"arrival tail slope {sf:g} exceeds service tail slope {sg:g}")
    if y_max is not None and y_max < 1:
        raise ValueError("y_max must be >= 1")
    pf = affine_params(f)
    exact = y_max is None or y_max >= max(f.kink, g.kink)
    if pf and exact:
        if isinstance(g, RateLatency):
            return _affine(pf[0], pf[1] + pf[0] * g.T)
        pg = affine_params(g)
        if pg and pg[1] == 0:
            return _affine(*pf)
    Y = max(f.kink, g.kink) if y_max is None else int(y_max)
    Kf = f.kink
    ys = np.arange(Y + 1)
    gy = g.samples(Y)
    fs = f.samples(Kf + Y)
    out = np.array([np.max(fs[t + ys] - gy) for t in range(Kf + 1)])
    return GridPWL(np.maximum(out, 0.0), sf)


def _envelope(f: Curve, g: Curve, pick) -> Curve:
    K = max(f.kink, g.kink)
    sf, sg = f.tail_slope, g.tail_slope
    H = K
    if sf != sg and math.isfinite(sf) and math.isfinite(sg):
        # past K both are lines; extend until they stop crossing
        cf, cg = f.eval(K) - sf * K, g.eval(K) - sg * K
        cross = (cg - cf) / (sf - sg)
        if cross > K:
            H = int(math.ceil(cross))
    s = pick(f.samples(H), g.samples(H))
    slope = min(sf, sg) if pick is np.minimum else max(sf, sg)
    return GridPWL(s, slope)


def pointwise_min(f: Curve, g: Curve) -> Curve:
    return _envelope(f, g, np.minimum)


def pointwise_max(f: Curve, g: Curve) -> Curve:
    return _envelope(f, g, np.maximum)


def curve_add(f: Curve, g: Curve) -> Curve:
    if isinstance(f, Epsilon) or isinstance(g, Epsilon):
        return Epsilon()
    pf, pg = affine_params(f), affine_params(g)
    if pf and pg:
        return _affine(pf[0] + pg[0], pf[1] + pg[1])
    H = max(f.kink, g.kink)
    return GridPWL(f.samples(H) + g.samples(H), f.tail_slope + g.tail_slope,
                   _check=not (_is_special(f) or _is_special(g)))


def curve_sub(f: Curve, g: Curve) -> Curve:
    """Pointwise ``f - g``; raises NotInF unless the result lies in F."""
    if _is_special(f) or _is_special(g):
        raise ValueError("cannot subtract infinite-valued curves")
    pf, pg = affine_params(f), affine_params(g)
    if pf and pg:
        return _affine(pf[0] - pg[0], pf[1] - pg[1])
    if isinstance(g, ConstantRate) and g.r == 0:
        return f
    H = max(f.kink, g.kink)
    diff = GridPWL(f.samples(H) - g.samples(H), f.tail_slope - g.tail_slope, _check=False)
    if not is_in_F(diff):
        raise NotInF(f"{f!r} - {g!r} is not nonnegative and wide-sense increasing")
    return diff


def _alpha_at(alpha: Curve, u: np.ndarray, negative: str) -> np.ndarray:
    vals = alpha.eval(u)
    if negative == "hold":
        return vals
    if negative == "linear":
        # continue the first slot's slope backwards, clipped at zero
        a0, a1 = alpha.eval(0.0), alpha.eval(1.0)
        back = np.maximum(a0 + (a1 - a0) * u, 0.0)
        return np.where(u < 0, back, vals)
    raise ValueError(f"unknown negative-argument policy {negative!r}")


def _stable(beta: Curve, alpha: Curve) -> bool:
    return beta.tail_slope >= alpha.tail_slope


def inf_deficit(beta: Curve, alpha: Curve, x_shift: float = 0.0,
                s_max: int | None = None, negative: str = "hold") -> float:
    """``inf_{0<=s<=s_max} beta(s) - alpha(s - x_shift)`` over integer s.

    Returns ``-inf`` when beta grows slower than alpha.  ``s_max=None``
    picks a window past both kinks, where the infimum is already attained.
    ``negative`` chooses how alpha is extended to negative arguments:
    ``"hold"`` uses alpha(0), ``"linear"`` continues its initial slope
    backwards and clips at zero.
    """
    if not _stable(beta, alpha):
        return -INF
    if s_max is None:
        s_max = max(beta.kink, alpha.kink) + int(math.ceil(max(x_shift, 0.0))) + 1
    s = np.arange(int(s_max) + 1, dtype=float)
    return float(np.min(beta.eval(s) - _alpha_at(alpha, s - x_shift, negative)))


def inf_deficit_shifted_service(beta: Curve, alpha: Curve, x: float,
                                s_max: int | None = None) -> float:
    """``inf_{0<=s<=s_max} beta(s + x) - alpha(s)`` over integer s."""
    if not _stable(beta, alpha):
        return -INF
    if s_max is None:
        s_max = max(beta.kink, alpha.kink) + 1
    s = np.arange(int(s_max) + 1, dtype=float)
    return float(np.min(beta.eval(s + x) - alpha.eval(s)))
