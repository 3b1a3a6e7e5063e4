import numpy as np
import pytest

from snc.calculus import (
    Mode, NetworkSpec, analyze_tandem, backlog_bound, backlog_bound_indep, concatenate,
    concatenate_indep, delay_bound, delay_bound_det_server, delay_bound_indep, leftover,
    leftover_indep, output, output_indep, superpose, superpose_indep,
)
from snc.curves import Affine, ConstantRate, RateLatency, curves_equal
from snc.errors import DivergentDeconvolution, NotInF, UnsupportedTopology, VariantMismatch
from snc.models import (
    ArrivalVariant, StrictServer, from_deterministic_arrival, from_deterministic_service,
    mbc, sc, weaken_arrival, weaken_service,
)
from snc.tailbounds import Deterministic, Exp, make_grid, prob_at

X = make_grid(10.0, 0.01)
XI = np.arange(0, 11, dtype=float)
E = Exp(1, 1)
TWO_HALF = 2 * np.exp(-X / 2)
ONE_PLUS = (1 + X) * np.exp(-X)


def det(c):
    return from_deterministic_arrival(c)


# -- superposition ------------------------------------------------------------

def test_superpose_dependent():
    s = superpose([mbc(ConstantRate(1), E)] * 2)
    assert curves_equal(s.alpha, ConstantRate(2), 20)
    assert np.allclose(s.f.eval(X), TWO_HALF, rtol=1e-12)


def test_superpose_single_and_deterministic():
    a = mbc(Affine(1, 1), E)
    assert superpose([a]) == a
    s = superpose([det(Affine(1, 2)), det(ConstantRate(3))])
    assert curves_equal(s.alpha, Affine(4, 2), 20) and isinstance(s.f, Deterministic)


def test_superpose_rejects_weaker_variants():
    with pytest.raises(VariantMismatch):
        superpose([weaken_arrival(mbc(ConstantRate(1), E), ArrivalVariant.VBC)])


def test_superpose_independent():
    s = superpose_indep([mbc(ConstantRate(1), E)] * 2, X)
    h = s.f.eval(X)
    assert np.all(h >= ONE_PLUS) and np.max(h / ONE_PLUS - 1) <= 0.02
    one = superpose_indep([mbc(ConstantRate(1), E), det(ConstantRate(1))], X)
    assert np.allclose(prob_at(one.f, X), prob_at(E, X), atol=1e-9)
    assert isinstance(superpose_indep([det(ConstantRate(1))] * 2).f, Deterministic)


# -- concatenation ------------------------------------------------------------

def test_concatenate_rate_latency_pair():
    s = concatenate([sc(RateLatency(2, 3), E), sc(RateLatency(3, 1), E)])
    assert curves_equal(s.beta, RateLatency(2, 4), 50)
    assert np.allclose(s.g.eval(X), TWO_HALF, rtol=1e-12)


def test_concatenate_single_and_deterministic():
    s = sc(RateLatency(2, 3), E)
    assert concatenate([s]) == s
    d = concatenate([from_deterministic_service(RateLatency(2, 3)),
                     from_deterministic_service(RateLatency(3, 1))])
    assert curves_equal(d.beta, RateLatency(2, 4), 50) and isinstance(d.g, Deterministic)


def test_concatenate_rejects_weak():
    with pytest.raises(VariantMismatch):
        concatenate([weaken_service(sc(ConstantRate(2), E))] * 2)


def test_concatenate_association_order():
    a, b, c = sc(RateLatency(2, 1), E), sc(RateLatency(3, 2), Exp(2, 1)), sc(ConstantRate(4), E)
    left = concatenate([concatenate([a, b]), c], X)
    right = concatenate([a, concatenate([b, c])], X)
    t = np.arange(40.0)
    assert np.array_equal(left.beta.eval(t), right.beta.eval(t))
    assert np.allclose(left.g.eval(X), right.g.eval(X), rtol=1e-12)


def test_concatenate_independent():
    ss = StrictServer(ConstantRate(3), ConstantRate(0.5), E)
    s = concatenate_indep([ss, ss], X)
    assert curves_equal(s.beta, ConstantRate(2.5), 50)
    h = s.g.eval(X)
    assert np.all(h >= ONE_PLUS) and np.max(h / ONE_PLUS - 1) <= 0.02
    one = concatenate_indep([ss])
    assert curves_equal(one.beta, ConstantRate(2.5), 50) and one.g == E
    free = concatenate_indep([StrictServer.unimpaired(RateLatency(2, 1))] * 2)
    assert curves_equal(free.beta, RateLatency(2, 2), 50) and isinstance(free.g, Deterministic)


# -- output -------------------------------------------------------------------

def test_output_general():
    o = output(mbc(Affine(1, 1), E), sc(ConstantRate(2), E))
    assert curves_equal(o.alpha, Affine(1, 1), 50)
    assert np.allclose(o.f.eval(X), TWO_HALF, rtol=1e-12)
    d = output(det(Affine(1, 2)), from_deterministic_service(RateLatency(2, 3)))
    assert curves_equal(d.alpha, Affine(1, 5), 50) and isinstance(d.f, Deterministic)
    with pytest.raises(DivergentDeconvolution):
        output(det(Affine(3, 0)), from_deterministic_service(ConstantRate(2)))


def test_output_independent():
    o = output_indep(mbc(Affine(1, 1), E), StrictServer(ConstantRate(3), ConstantRate(1), E), X)
    assert curves_equal(o.alpha, Affine(1, 1), 50)
    h = o.f.eval(X)
    assert np.all(h >= ONE_PLUS) and np.max(h / ONE_PLUS - 1) <= 0.02


# -- leftover -----------------------------------------------------------------

def test_leftover_examples():
    with pytest.raises(NotInF):
        leftover(from_deterministic_service(ConstantRate(3)), mbc(Affine(1, 1), E))
    s = leftover(from_deterministic_service(ConstantRate(3)), mbc(Affine(1, 0), E))
    assert curves_equal(s.beta, ConstantRate(2), 50) and s.g == E
    same = leftover(sc(ConstantRate(3), E), det(ConstantRate(0)))
    assert curves_equal(same.beta, ConstantRate(3), 50) and same.g == E
    s = leftover(sc(ConstantRate(3), E), mbc(Affine(1, 0), E))
    assert curves_equal(s.beta, ConstantRate(2), 50)
    assert np.allclose(s.g.eval(X), TWO_HALF, rtol=1e-12)


def test_leftover_independent():
    s = leftover_indep(StrictServer(ConstantRate(3), ConstantRate(0), E), mbc(Affine(1, 0), E), X)
    assert curves_equal(s.beta, ConstantRate(2), 50)
    h = s.g.eval(X)
    assert np.all(h >= ONE_PLUS) and np.max(h / ONE_PLUS - 1) <= 0.02


# -- backlog and delay --------------------------------------------------------

def test_deterministic_backlog_step():
    r = backlog_bound(det(Affine(1, 2)), from_deterministic_service(RateLatency(2, 1)), XI)
    assert np.array_equal(r.values, (XI < 3).astype(float)) and r.zero_crossing() == 3


def test_backlog_exp_flow_deterministic_server():
    r = backlog_bound(mbc(Affine(1, 0), E), from_deterministic_service(ConstantRate(2)), X)
    assert np.allclose(r.values, prob_at(E, X), rtol=1e-12)


def test_unstable_backlog_is_vacuous():
    r = backlog_bound(mbc(Affine(3, 0), E), from_deterministic_service(ConstantRate(2)), XI)
    assert r.vacuous and np.all(r.values == 1)


def test_delay_sigma_over_rho_and_sigma_over_r():
    flow, beta = det(Affine(1, 4)), ConstantRate(2)
    d1 = delay_bound(flow, from_deterministic_service(beta), XI)
    d2 = delay_bound_det_server(flow, beta, XI)
    assert d1.zero_crossing() == 4 and d2.zero_crossing() == 2
    assert d1.values[0] == 1 and d2.values[0] == 1


def test_det_server_delay_requires_deterministic_server():
    with pytest.raises(VariantMismatch):
        delay_bound_det_server(det(Affine(1, 4)), sc(ConstantRate(2), E), XI)
    same = delay_bound_det_server(det(Affine(1, 0)), Affine(1, 0), XI)
    assert same.zero_crossing() == 0


def test_independent_backlog_example():
    flow = mbc(ConstantRate(1), E)
    ss = StrictServer(ConstantRate(2), ConstantRate(1), E)
    ind = backlog_bound_indep(flow, ss, X)
    gen = backlog_bound(flow, sc(ConstantRate(1), E), X)
    target = np.minimum(ONE_PLUS, 1)
    assert np.all(ind.values >= target) and np.max(ind.values / target - 1) <= 0.02
    assert np.all(ind.values <= gen.values)


def test_independent_with_deterministic_impairment():
    flow = mbc(Affine(1, 0), E)
    ind = backlog_bound_indep(flow, StrictServer.unimpaired(ConstantRate(2)), X)
    gen = backlog_bound(flow, from_deterministic_service(ConstantRate(2)), X)
    assert np.allclose(ind.values, gen.values, atol=1e-9)


def test_reports_nonincreasing_and_in_unit_interval():
    flow = mbc(Affine(1, 2), Exp(3, 0.5))
    ss = StrictServer(ConstantRate(3), ConstantRate(0.5), Exp(2, 1))
    for r in (delay_bound_indep(flow, ss, XI), delay_bound(flow, sc(RateLatency(2.5, 2), Exp(2, 1)), XI)):
        assert np.all((r.values >= 0) & (r.values <= 1)) and np.all(np.diff(r.values) <= 0)


# -- tandem -------------------------------------------------------------------

def test_tandem_single_node_matches_direct():
    flow, srv = mbc(Affine(1, 2), E), sc(RateLatency(2, 1), E)
    res = analyze_tandem(NetworkSpec([srv], flow), XI)
    assert np.array_equal(res.backlog.values, backlog_bound(flow, srv, XI).values)
    assert np.array_equal(res.delay.values, delay_bound(flow, srv, XI).values)


def test_tandem_deterministic_two_nodes():
    flow = det(Affine(1, 2))
    nodes = [from_deterministic_service(RateLatency(2, 3)), from_deterministic_service(RateLatency(3, 1))]
    res = analyze_tandem(NetworkSpec(nodes, flow), XI)
    one = from_deterministic_service(RateLatency(2, 4))
    assert np.array_equal(res.backlog.values, backlog_bound(flow, one, XI).values)
    assert np.array_equal(res.delay.values, delay_bound(flow, one, XI).values)


def test_tandem_independent_not_above_general():
    flow = mbc(ConstantRate(1), E)
    nodes = [StrictServer(ConstantRate(3), ConstantRate(0.5), E)] * 2
    x = np.arange(0, 20.0)
    gen = analyze_tandem(NetworkSpec(nodes, flow, independence=Mode.GENERAL), x)
    ind = analyze_tandem(NetworkSpec(nodes, flow, independence=Mode.INDEPENDENT), x)
    assert np.all(ind.delay.values <= gen.delay.values)
    assert np.all(ind.backlog.values <= gen.backlog.values)


def test_tandem_with_cross_traffic():
    flow = mbc(ConstantRate(1), E)
    node = sc(ConstantRate(4), E)
    res = analyze_tandem(NetworkSpec([node], flow, [[mbc(ConstantRate(1), E)]]), XI)
    assert curves_equal(res.end_to_end.beta, ConstantRate(3), 50)


def test_tandem_topology_checks():
    with pytest.raises(UnsupportedTopology):
        NetworkSpec([], mbc(ConstantRate(1), E))
    with pytest.raises(UnsupportedTopology):
        NetworkSpec([sc(ConstantRate(2), E)], mbc(ConstantRate(1), E), [[], []])
    with pytest.raises(VariantMismatch):
        analyze_tandem(NetworkSpec([sc(ConstantRate(2), E)], mbc(ConstantRate(1), E),
                                   independence=Mode.INDEPENDENT), XI)
