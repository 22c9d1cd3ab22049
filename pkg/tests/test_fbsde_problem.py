import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teugels_fbsde import families as fam
from teugels_fbsde.errors import NonFiniteData
from teugels_fbsde.fbsde_problem import (
    X0Law, check_H2, check_V0, lipschitz_audit, norm_terms, solution_norm, zero_triple,
)
from teugels_fbsde.path_engine import TimeGrid, simulate


def test_x0_law():
    law = X0Law(1.0, 4.0)
    assert law.second_moment == 5.0 and not law.deterministic
    assert np.array_equal(law.sample(np.array([0.0, 1.0])), [1.0, 3.0])
    assert np.array_equal(X0Law(2.0).sample(np.zeros(3)), [2.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        X0Law(0.0, -1.0)


def test_V0_closed_form():
    # f = 0, sigma^1 = 2, g = 0.3, phi(0) = 0.5, X0 ~ N(1, 1): V0^2 = 2 + 0.25 + (4 + 0.09) T
    p = fam.oracle(2, 2.0, X0Law(1.0, 1.0), sigma=2.0, c=0.3, shift=0.5)
    assert check_V0(p) == pytest.approx(math.sqrt(2.0 + 0.25 + 4.09 * 2.0), rel=1e-12)
    assert check_V0(fam.zero(1, 1.0)) == 0.0


def test_V0_non_finite():
    p = fam.oracle(1, 1.0, X0Law(0.0))
    bad = p.with_terminal(lambda x: np.full_like(x, np.inf), 1.0)
    with pytest.raises(NonFiniteData):
        check_V0(bad)


@pytest.mark.parametrize("family,ok", [
    ("zero", True), ("oracle", True), ("coupled_h2", True), ("coupled_linear", False),
])
def test_h2_on_families(family, ok):
    p = fam.make_problem(family, 3, 1.0)
    rep = check_H2(p)
    assert rep.passed is ok


def test_h2_constructed_violation():
    rep = check_H2(fam.linear(1, 1.0, c1=1.0, a2=1.0))
    assert rep.sum_residual == pytest.approx(1.0, abs=1e-6)
    assert not rep.passed
    rep = check_H2(fam.linear(2, 1.0, c1=[0.0, 1.0], b2=[1.0, 0.0], b1=0.0))
    assert rep.cross_residual == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(-1.0, 1.0), min_size=11, max_size=11))
def test_declared_lipschitz_constants_hold(vals):
    keys = ("a1", "b1", "c1", "a2", "b2", "a3", "b3", "c3", "P", "sat_f", "sat_phi")
    p = fam.affine_problem(2, 1.0, **dict(zip(keys, vals)))
    assert lipschitz_audit(p).passed


def test_family_lipschitz_values():
    assert fam.coupled_linear(3, 1.0, lam=0.2).lam == pytest.approx(0.2)
    assert fam.coupled_h2(3, 1.0, lam=0.2).lam == pytest.approx(0.2)
    assert fam.oracle(1, 1.0).lam == 0.0 and fam.oracle(1, 1.0).lam0 == 1.0
    with pytest.raises(ValueError):
        fam.affine_problem(1, 1.0, c1=[0.0, 1.0])
    with pytest.raises(ValueError):
        fam.affine_problem(1, 1.0, bogus=1.0)
    with pytest.raises(KeyError):
        fam.make_problem("nope", 1, 1.0)


def test_norm_of_zero_triple(brownian):
    model, basis = brownian
    b = simulate(model, basis, TimeGrid.uniform(1.0, 4), 10, seed=0)
    assert solution_norm(zero_triple(b)) == 0.0


def test_norm_terms_by_hand():
    X = np.array([[0.0, 1.0, -2.0]])
    Y = np.array([[3.0, 0.0, 0.0]])
    Z = np.array([[[1.0, 1.0], [2.0, 0.0]]])
    assert norm_terms(X, Y, Z, np.array([0.5, 0.25]))[0] == 4.0 + 9.0 + 2 * 0.5 + 4 * 0.25
