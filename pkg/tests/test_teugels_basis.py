import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teugels_fbsde import levy_model as lm
from teugels_fbsde.errors import DegenerateMeasure
from teugels_fbsde.teugels_basis import (
    basis_for_model, basis_from_dict, basis_to_dict, build_basis, check_lemma_identity,
    evaluate_poly, gram_matrix, orthonormality_residual,
)

from conftest import MODELS


def test_hankel_oracle_two_atoms():
    # mu = (3, 0, 2, 0, 2); Cholesky rows computed symbolically
    basis = basis_for_model(lm.two_atom_gaussian(), 5)
    assert basis.K_eff == 3
    assert np.allclose(basis.q_polys[0], [1 / math.sqrt(3)], atol=1e-14)
    assert np.allclose(basis.q_polys[1], [0.0, 1 / math.sqrt(2)], atol=1e-14)
    assert np.allclose(basis.q_polys[2], [-math.sqrt(6) / 3, 0.0, math.sqrt(6) / 2], atol=1e-14)


@pytest.mark.parametrize("name,k_eff", [("brownian", 1), ("poisson", 1), ("two_atom", 3)])
def test_rank_drops(name, k_eff):
    basis = basis_for_model(MODELS[name], 5)
    assert basis.K_requested == 5
    assert basis.K_eff == k_eff


def test_brownian_and_poisson_coefficients():
    assert basis_for_model(lm.brownian(), 3).a.tolist() == [[1.0]]
    assert basis_for_model(lm.poisson(1.0), 3).a.tolist() == [[1.0]]
    b = basis_for_model(lm.poisson(4.0), 2)
    assert b.a[0, 0] == pytest.approx(0.5)


def test_three_atoms_with_gaussian_part():
    model = lm.LevyModel(gaussian_var=0.5, atoms=((1.0, 1.0), (0.5, -2.0), (2.0, 0.3)))
    basis = basis_for_model(model, 5)
    assert basis.K_eff == 4
    assert orthonormality_residual(basis, model) < 1e-10
    assert check_lemma_identity(basis, model) < 1e-10


def test_density_model_full_rank():
    model = lm.LevyModel(gaussian_var=0.0, density=lm.exp_tail(1.0, 1.0, 0.1, 10.0))
    basis = basis_for_model(model, 4)
    assert basis.K_eff == 4
    assert orthonormality_residual(basis, model) < 1e-8
    assert check_lemma_identity(basis, model) < 1e-8


@settings(max_examples=40, deadline=None)
@given(
    atoms=st.lists(
        st.tuples(st.floats(0.1, 3.0), st.floats(-2.0, 2.0).filter(lambda b: abs(b) > 0.05)),
        min_size=1, max_size=4, unique_by=lambda a: round(a[1], 2)),
    s2=st.sampled_from([0.0, 0.3, 1.0]),
)
def test_orthonormality_property(atoms, s2):
    model = lm.LevyModel(gaussian_var=s2, atoms=atoms)
    basis = basis_for_model(model, 5)
    assert 1 <= basis.K_eff <= len(atoms) + (s2 > 0)
    G = gram_matrix(basis, model)
    assert np.max(np.abs(G - np.eye(basis.K_eff))) < 1e-6
    assert check_lemma_identity(basis, model) < 1e-6


def test_degenerate_measure():
    with pytest.raises(DegenerateMeasure):
        basis_for_model(lm.LevyModel(gaussian_var=0.0), 2)


def test_bad_arguments():
    table = lm.moments(lm.brownian(), 4)
    with pytest.raises(ValueError):
        build_basis(table, 0)
    with pytest.raises(ValueError):
        build_basis(table, 11)
    with pytest.raises(ValueError):
        build_basis(table, 4)  # table too short


def test_export_roundtrip():
    basis = basis_for_model(lm.two_atom_gaussian(), 4)
    back = basis_from_dict(basis_to_dict(basis))
    assert back.K_eff == basis.K_eff
    assert np.array_equal(back.a, basis.a)
    for q1, q2 in zip(back.q_polys, basis.q_polys):
        assert np.array_equal(q1, q2)


def test_evaluate_poly():
    assert evaluate_poly([1.0, 2.0, 3.0], 2.0) == 17.0
    assert np.array_equal(evaluate_poly([1.0, 2.0], np.array([0.0, 1.0])), [1.0, 3.0])
    basis = basis_for_model(lm.two_atom_gaussian(), 5)
    assert basis.p(2, 1.0) == pytest.approx(1.0 * basis.q(1, 1.0))
