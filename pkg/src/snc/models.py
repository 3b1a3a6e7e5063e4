"""Traffic and server models: stochastic arrival curves, service curves,
stochastic strict servers, and the legal conversions among them.

Model objects are declarations.  Whether a process really satisfies one is
checked empirically with :mod:`snc.simulate`, not at construction time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from snc.curves import ConstantRate, Curve, curve_sub, is_in_F
from snc.errors import IllegalStrengthening, NotInF
from snc.tailbounds import Deterministic, TailBound


class ArrivalVariant(enum.IntEnum):
    """Ordered weakest to strongest, so ``a >= b`` means "a implies b"."""

    TAC = 0  # traffic-amount-centric
    VBC = 1  # virtual-backlog-centric
    MBC = 2  # maximum-(virtual)-backlog-centric


class ServiceVariant(enum.IntEnum):
    WEAK_SC = 0
    SC = 1


@dataclass(frozen=True)
class StochasticArrivalCurve:
    variant: ArrivalVariant
    alpha: Curve
    f: TailBound

    def __post_init__(self):
        if not is_in_F(self.alpha):
            raise NotInF(f"arrival curve {self.alpha!r} is not in F")


@dataclass(frozen=True)
class ServiceCurveModel:
    variant: ServiceVariant
    beta: Curve
    g: TailBound

    def __post_init__(self):
        if not is_in_F(self.beta):
            raise NotInF(f"service curve {self.beta!r} is not in F")


@dataclass(frozen=True)
class StrictServer:
    """Ideal service ``beta_hat`` minus an impairment process.

    The impairment is described by its own m.b.c arrival curve
    ``<impairment_bound, impairment_alpha>``.
    """

    beta_hat: Curve
    impairment_alpha: Curve
    impairment_bound: TailBound

    def __post_init__(self):
        if self.beta_hat.eval(0.0) != 0:
            raise NotInF("a strict server's ideal service curve must be 0 at t=0")

    @classmethod
    def unimpaired(cls, beta_hat: Curve) -> "StrictServer":
        return cls(beta_hat, ConstantRate(0.0), Deterministic())

    @property
    def impairment(self) -> StochasticArrivalCurve:
        return StochasticArrivalCurve(ArrivalVariant.MBC, self.impairment_alpha,
                                      self.impairment_bound)


def mbc(alpha: Curve, f: TailBound) -> StochasticArrivalCurve:
    return StochasticArrivalCurve(ArrivalVariant.MBC, alpha, f)


def sc(beta: Curve, g: TailBound) -> ServiceCurveModel:
    return ServiceCurveModel(ServiceVariant.SC, beta, g)


def from_deterministic_arrival(alpha: Curve) -> StochasticArrivalCurve:
    """A deterministic arrival curve is an m.b.c curve with the zero bound."""
    return mbc(alpha, Deterministic())


def from_deterministic_service(beta: Curve) -> ServiceCurveModel:
    return sc(beta, Deterministic())


def weaken_arrival(a: StochasticArrivalCurve, to: ArrivalVariant) -> StochasticArrivalCurve:
    to = ArrivalVariant(to)
    if to > a.variant:
        raise IllegalStrengthening(f"cannot turn a {a.variant.name} curve into {to.name}")
    return replace(a, variant=to)


def weaken_service(s: ServiceCurveModel) -> ServiceCurveModel:
    if s.variant != ServiceVariant.SC:
        raise IllegalStrengthening("only a stochastic service curve can be weakened")
    return replace(s, variant=ServiceVariant.WEAK_SC)


def strict_to_service_curve(ss: StrictServer) -> ServiceCurveModel:
    """Service curve ``beta_hat - gamma`` with the impairment's bound."""
    beta = curve_sub(ss.beta_hat, ss.impairment_alpha)
    return sc(beta, ss.impairment_bound)
