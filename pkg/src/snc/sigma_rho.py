"""From a log-MGF traffic envelope to an m.b.c stochastic arrival curve.

Only i.i.d. per-slot increments are handled: the log-MGF of a sum of
independent slots is additive, so sigma is 0 and rho is the per-slot
effective bandwidth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from snc.curves import ConstantRate
from snc.errors import NoFeasibleTheta, RateTooSmall
from snc.models import StochasticArrivalCurve, mbc
from snc.tailbounds import Exp

__all__ = [
    "SigmaRho", "IncrementDist", "bernoulli", "discrete", "log_mgf",
    "sigma_rho_iid", "mbc_from_sigma_rho", "optimize_theta", "ThetaChoice",
]


@dataclass(frozen=True)
class SigmaRho:
    theta: float
    rho: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.rho < 0 or self.sigma < 0:
            raise ValueError("rho and sigma must be nonnegative")


@dataclass(frozen=True, eq=False)
class IncrementDist:
    """Finite-support law of one slot's arrivals."""

    values: np.ndarray
    probs: np.ndarray
    kind: str = "discrete"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        p = np.asarray(self.probs, dtype=float).ravel()
        if v.size == 0 or v.shape != p.shape:
            raise ValueError("values and probabilities must be nonempty and aligned")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("increment values must be finite and nonnegative")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    @property
    def peak(self) -> float:
        return float(self.values[self.probs > 0].max())

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "bernoulli":
            p, b = self.probs[1], self.values[1]
            return (rng.random(n) < p) * b
        return rng.choice(self.values, size=n, p=self.probs)

    def __repr__(self):
        if self.kind == "bernoulli":
            return f"Bernoulli(p={self.probs[1]:g}, batch={self.values[1]:g})"
        return f"Discrete({dict(zip(self.values.tolist(), self.probs.tolist()))})"


def bernoulli(p: float, batch: float = 1.0) -> IncrementDist:
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return IncrementDist(np.array([0.0, batch]), np.array([1.0 - p, p]), "bernoulli")


def discrete(table: dict | Sequence, probs: Sequence | None = None) -> IncrementDist:
    """``discrete({0: .5, 2: .5})`` or ``discrete(values, probs)``."""
    if probs is None:
        items = sorted(dict(table).items())
        return IncrementDist(np.array([k for k, _ in items]), np.array([w for _, w in items]))
    return IncrementDist(np.asarray(table), np.asarray(probs))


def log_mgf(dist: IncrementDist, theta: float) -> float:
    """``log E exp(theta a)``, stable for large theta * a."""
    mask = dist.probs > 0
    # log p goes into the exponent; weights via b= overflow for subnormal p
    return float(logsumexp(theta * dist.values[mask] + np.log(dist.probs[mask])))


def sigma_rho_iid(dist: IncrementDist, theta: float) -> SigmaRho:
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    # log E e^{theta a} >= theta E a >= 0; clip rounding below zero
    return SigmaRho(theta, max(log_mgf(dist, theta) / theta, 0.0), 0.0)


def mbc_from_sigma_rho(sr: SigmaRho, r: float) -> StochasticArrivalCurve:
    """m.b.c curve ``<a e^{-theta x}, r t>`` for any rate ``r > rho``.

    ``a = e^{theta sigma} / (1 - e^{theta (rho - r)})`` is the geometric
    series summing the per-interval Chernoff bounds.
    """
    if not r > sr.rho:
        raise RateTooSmall(f"rate r={r} must exceed rho(theta)={sr.rho:.6g}")
    a = math.exp(sr.theta * sr.sigma) / -math.expm1(sr.theta * (sr.rho - r))
    return mbc(ConstantRate(r), Exp(a, sr.theta))


@dataclass(frozen=True)
class ThetaChoice:
    theta: float
    sigma_rho: SigmaRho
    curve: StochasticArrivalCurve
    value: float  # f(x_star)


def optimize_theta(dist: IncrementDist, theta_grid: Iterable[float], r: float,
                   x_star: float) -> ThetaChoice:
    """Grid search for the theta minimizing the bound at ``x_star``.

    Infeasible candidates (``rho(theta) >= r``) are skipped.  Ties go to the
    larger theta, which decays faster past ``x_star``.
    """
    best = None
    for th in sorted(set(float(t) for t in theta_grid)):
        sr = sigma_rho_iid(dist, th)
        if not r > sr.rho:
            continue
        curve = mbc_from_sigma_rho(sr, r)
        val = float(curve.f.eval(x_star))
        if best is None or val <= best.value:
            best = ThetaChoice(th, sr, curve, val)
    if best is None:
        raise NoFeasibleTheta(f"no theta in the grid has rho(theta) < r={r}")
    return best
