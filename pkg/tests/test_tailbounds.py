import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snc.errors import EmptyGrid
from snc.tailbounds import (
    Deterministic, Exp, ExpMinPlus, GridDec, Vacuous, complement_clip, default_grid,
    make_grid, minplus_conv_bar, pointwise_max_bar, pointwise_min_bar, prob_at,
    stieltjes_conv_bound,
)

from _oracles import bar_conv_oracle
from dioid import check_dioid_laws, random_griddec

X = make_grid(10.0, 0.01)


def test_eval_and_prob_at():
    assert Exp(1, 1).eval(2) == pytest.approx(math.exp(-2), rel=1e-15)
    assert prob_at(Exp(5, 1), 0) == 1
    assert Deterministic().eval(0) == 0
    assert Exp(1, 1).eval(-3) == 1


def test_griddec_uses_left_neighbour():
    b = GridDec(np.array([0.0, 1.0, 2.0]), np.array([3.0, 2.0, 1.0]))
    assert b.eval(0.5) == 3 and b.eval(1.0) == 2 and b.eval(1.0 - 1e-12) == 2
    assert b.eval(7.0) == 1


def test_griddec_rejects_increasing_values():
    with pytest.raises(ValueError):
        GridDec(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    with pytest.raises(EmptyGrid):
        GridDec(np.array([]), np.array([]))


def test_same_rate_exponentials_closed_form():
    got = minplus_conv_bar(Exp(1, 1), Exp(1, 1))
    assert isinstance(got, ExpMinPlus)
    assert np.allclose(got.eval(X), 2 * np.exp(-X / 2), rtol=1e-12, atol=0)


def test_closed_form_boundary_clamp():
    # for a >> b the stationary point leaves [0, x] at small x
    got = minplus_conv_bar(Exp(100, 1), Exp(1, 1)).eval(X)
    grid = minplus_conv_bar(Exp(100, 1), Exp(1, 1), x_grid=X, method="grid").eval(X)
    assert np.all(grid >= got * (1 - 1e-12))
    assert np.allclose(grid, got, rtol=1e-3)


def test_conv_with_deterministic_and_vacuous():
    f = Exp(2, 0.5)
    assert minplus_conv_bar(f, Deterministic()) == f
    assert isinstance(minplus_conv_bar(f, Vacuous()), Vacuous)


def test_grid_conv_matches_bruteforce():
    x = np.arange(15, dtype=float)
    f, g = Exp(3, 0.7), Exp(1, 0.2)
    got = minplus_conv_bar(f, g, x_grid=x).eval(x)
    assert np.allclose(got, bar_conv_oracle(f.eval(x), g.eval(x)), rtol=1e-14)


def test_complement_clip():
    assert complement_clip(Exp(1, 1))(0) == 0
    assert np.all(complement_clip(Deterministic())(X) == 1)
    assert complement_clip(Exp(2, 1))(math.log(2)) == pytest.approx(0, abs=1e-15)


def test_stieltjes_gamma_example():
    h = stieltjes_conv_bound(Exp(1, 1), Exp(1, 1), X).eval(X)
    exact = (1 + X) * np.exp(-X)
    assert np.all(h >= exact)
    assert np.max(h / exact - 1) <= 0.02
    assert np.all(h <= 2 * np.exp(-X / 2))


def test_stieltjes_with_deterministic():
    g = Exp(3, 0.8)
    h = stieltjes_conv_bound(Deterministic(), g, X).eval(X)
    assert np.allclose(h, prob_at(g, X), atol=1e-12)
    assert np.all(stieltjes_conv_bound(Deterministic(), Deterministic(), X).eval(X) == 0)


def test_stieltjes_nonuniform_grid_agrees():
    xn = np.concatenate([np.arange(0, 5, 0.01), np.arange(5, 10.001, 0.02)])
    h = stieltjes_conv_bound(Exp(1, 1), Exp(1, 1), xn).eval(xn)
    assert np.all(h >= (1 + xn) * np.exp(-xn))


def test_stieltjes_empty_grid():
    with pytest.raises(EmptyGrid):
        stieltjes_conv_bound(Exp(1, 1), Exp(1, 1), [])


def test_pointwise_bar_examples():
    assert pointwise_min_bar(Exp(1, 1), Exp(1, 2)).eval(1) == pytest.approx(math.exp(-2))
    f = Exp(1, 1)
    assert pointwise_min_bar(f, Vacuous()) == f and pointwise_min_bar(f, f) == f
    assert pointwise_max_bar(f, Deterministic()) == f


def test_default_grid_resolves_decay():
    x = default_grid(Exp(1, 10))
    assert x[1] == pytest.approx(0.005)
    assert Exp(1, 10).eval(x[-1]) < 1e-12


def test_refinement_only_tightens():
    coarse, fine = make_grid(10, 0.02), make_grid(10, 0.01)
    for op in (lambda x: minplus_conv_bar(Exp(2, 1), Exp(1, 0.5), x_grid=x),
               lambda x: stieltjes_conv_bound(Exp(2, 1), Exp(1, 0.5), x)):
        assert np.all(op(fine).eval(coarse) <= op(coarse).eval(coarse) + 1e-12)


def test_independent_rule_beats_dependent_rule_on_example():
    h = stieltjes_conv_bound(Exp(1, 1), Exp(1, 1), X).eval(X)
    assert np.all(h <= minplus_conv_bar(Exp(1, 1), Exp(1, 1)).eval(X))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_dioid_laws(seed, n):
    rng = np.random.default_rng(seed)
    f, g, h = (random_griddec(rng, n) for _ in range(3))
    assert check_dioid_laws(f, g, h) == []


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 50), st.floats(0.05, 5), st.floats(0, 40))
def test_prob_at_is_capped_and_decreasing(a, theta, x):
    b = Exp(a, theta)
    assert 0 <= prob_at(b, x) <= 1
    assert prob_at(b, x + 1) <= prob_at(b, x)
