import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snc.curves import ConstantRate
from snc.errors import NoFeasibleTheta, RateTooSmall
from snc.models import ArrivalVariant
from snc.sigma_rho import (
    SigmaRho, bernoulli, discrete, log_mgf, mbc_from_sigma_rho, optimize_theta, sigma_rho_iid,
)
from snc.tailbounds import Exp

RHO_03 = math.log(0.7 + 0.3 * math.e)


def test_bernoulli_rho():
    sr = sigma_rho_iid(bernoulli(0.3), 1.0)
    assert sr.rho == pytest.approx(RHO_03, rel=1e-14) and sr.sigma == 0


def test_null_flow():
    sr = sigma_rho_iid(discrete({0: 1.0}), 2.5)
    assert sr.rho == 0 and sr.sigma == 0


def test_degenerate_batch():
    assert sigma_rho_iid(bernoulli(1.0, 2), 1.0).rho == pytest.approx(2.0, rel=1e-14)


def test_discrete_matches_direct_mgf():
    d = discrete([0, 1, 4], [0.5, 0.3, 0.2])
    direct = math.log(0.5 + 0.3 * math.e ** 0.7 + 0.2 * math.e ** 2.8) / 0.7
    assert sigma_rho_iid(d, 0.7).rho == pytest.approx(direct, rel=1e-13)


def test_log_mgf_large_theta_is_finite():
    assert math.isfinite(log_mgf(bernoulli(0.5, 100), 50.0))


def test_probabilities_must_sum_to_one():
    with pytest.raises(ValueError):
        discrete([0, 1], [0.5, 0.6])
    with pytest.raises(ValueError):
        discrete([-1, 1], [0.5, 0.5])


def test_mbc_from_sigma_rho_plug_in():
    c = mbc_from_sigma_rho(SigmaRho(1.0, RHO_03, 0.0), 0.6)
    assert c.variant == ArrivalVariant.MBC and c.alpha == ConstantRate(0.6)
    assert isinstance(c.f, Exp) and c.f.theta == 1.0
    assert c.f.a == pytest.approx(1 / (1 - math.exp(RHO_03 - 0.6)), rel=1e-13)


def test_rate_at_rho_is_rejected():
    with pytest.raises(RateTooSmall):
        mbc_from_sigma_rho(SigmaRho(1.0, 0.5, 0.0), 0.5)


def test_large_rate_approaches_chernoff():
    c = mbc_from_sigma_rho(SigmaRho(1.0, 0.5, 0.0), 60.0)
    assert c.f.a == pytest.approx(1.0, rel=1e-12)
    c = mbc_from_sigma_rho(SigmaRho(2.0, 0.5, 1.5), 60.0)
    assert c.f.a == pytest.approx(math.exp(3.0), rel=1e-12)


def test_optimize_theta_two_candidates():
    d = bernoulli(0.3)
    vals = {}
    for th in (0.5, 1.0):
        sr = sigma_rho_iid(d, th)
        vals[th] = math.exp(th * 0) / (1 - math.exp(th * (sr.rho - 0.6))) * math.exp(-th * 10)
    best = optimize_theta(d, [0.5, 1.0], 0.6, 10)
    assert best.theta == min(vals, key=vals.get)
    assert best.value == pytest.approx(vals[best.theta], rel=1e-12)


def test_optimize_theta_singleton_and_infeasible():
    assert optimize_theta(bernoulli(0.3), [1.0], 0.6, 0).theta == 1.0
    with pytest.raises(NoFeasibleTheta):
        optimize_theta(bernoulli(0.3), [1.0, 2.0], 0.3, 0)


def test_optimize_theta_skips_infeasible():
    # rho(4) for Bernoulli(0.3) exceeds 0.6, so only 0.5 survives
    assert sigma_rho_iid(bernoulli(0.3), 4.0).rho > 0.6
    assert optimize_theta(bernoulli(0.3), [0.5, 4.0], 0.6, 10).theta == 0.5


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0.1, 5), st.floats(0.01, 3), st.floats(0.01, 3))
def test_rho_nondecreasing_in_theta(p, batch, t1, t2):
    d = bernoulli(p, batch)
    lo, hi = sorted((t1, t2))
    assert sigma_rho_iid(d, lo).rho <= sigma_rho_iid(d, hi).rho + 1e-12
    assert d.mean - 1e-12 <= sigma_rho_iid(d, lo).rho <= d.peak + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.1, 3), st.floats(0.01, 2), st.floats(0.01, 2))
def test_prefactor_above_one_and_falls_with_rate(p, theta, gap1, gap2):
    sr = sigma_rho_iid(bernoulli(p), theta)
    r1, r2 = sr.rho + min(gap1, gap2), sr.rho + max(gap1, gap2)
    a1, a2 = mbc_from_sigma_rho(sr, r1).f.a, mbc_from_sigma_rho(sr, r2).f.a
    assert a1 > 1 and a2 > 1 and a2 <= a1
