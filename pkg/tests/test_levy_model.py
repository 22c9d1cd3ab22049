import math

import numpy as np
import pytest

from teugels_fbsde import levy_model as lm
from teugels_fbsde.errors import ExponentialTailViolation, NonIntegrableMeasure, QuadratureFailure

# high-precision reference values (mpmath, 30 digits)
M2_EXP_TAIL = 3.9883038048568950095
M4_EXP_TAIL = 46.595867291761059141
INT_EXP_Z_EXP_Z2 = 86.834040471312074963
INT_EXP_Z2 = 14.989976019600048616


def test_atom_moments_exact():
    model = lm.LevyModel(drift=0.5, gaussian_var=2.0, atoms=((1.0, 1.0), (2.0, -0.5)))
    table = lm.moments(model, 4)
    assert table.m[0] == 3.0
    assert table.m[1] == pytest.approx(0.5 + 1.0 - 1.0)
    assert table.m[2] == 1.0 + 2.0 * 0.25
    assert table.m[3] == 1.0 - 2.0 * 0.125
    assert table.mu[0] == table.m[2] + 2.0
    assert table.mu[1] == table.m[3]
    assert table.mu[2] == table.m[4]


def test_density_moments_match_reference():
    model = lm.LevyModel(gaussian_var=0.0, density=lm.exp_tail(1.0, 1.0, 0.1, 10.0))
    table = lm.moments(model, 4)
    assert table.m[2] == pytest.approx(M2_EXP_TAIL, rel=1e-10)
    assert table.m[4] == pytest.approx(M4_EXP_TAIL, rel=1e-10)
    assert table.m[3] == pytest.approx(0.0, abs=1e-9)


def test_density_integral_weights():
    band = lm.Density(fn=lambda z: math.exp(z * z), support=((1.0, 2.0),))
    assert lm.density_integral(band, lambda z: 1.0) == pytest.approx(INT_EXP_Z2, rel=1e-10)
    assert lm.density_integral(band, lambda z: z, log_weight=True) == pytest.approx(
        INT_EXP_Z_EXP_Z2, rel=1e-10)


def test_quadrature_failure_is_raised_not_partial():
    spiky = lm.Density(fn=lambda z: 1.0 / abs(z - 0.5) ** 0.999, support=((0.1, 1.0),))
    with pytest.raises(QuadratureFailure):
        lm.density_integral(spiky, lambda z: 1.0, limit=5)


def test_validate_accepts_builtin_models():
    for model in (lm.brownian(), lm.poisson(), lm.two_atom_gaussian(),
                  lm.LevyModel(density=lm.exp_tail(1.0, 2.0, 0.01, math.inf))):
        rep = lm.validate_model(model)
        assert rep.passed


def test_validate_rejects_heavy_tail():
    model = lm.LevyModel(density=lm.exp_tail(1.0, 0.5, 0.1, math.inf), exp_moment_alpha=1.0)
    with pytest.raises(ExponentialTailViolation):
        lm.validate_model(model)
    rep = lm.validate_model(model, raise_on_fail=False)
    assert rep.small_jump_ok and not rep.exp_moment_ok


def test_validate_rejects_bad_atoms():
    with pytest.raises(NonIntegrableMeasure):
        lm.validate_model(lm.LevyModel(atoms=((1.0, 0.0),)))
    with pytest.raises(NonIntegrableMeasure):
        lm.validate_model(lm.LevyModel(atoms=((1.0, 1.0), (2.0, 1.0))))
    rep = lm.validate_model(lm.LevyModel(atoms=((-1.0, 1.0),)), raise_on_fail=False)
    assert not rep.atoms_ok


def test_infinite_activity_mass_reported_as_inf():
    dens = lm.Density(fn=lambda z: abs(z) ** -1.5, support=((0.0, 1.0),))
    table = lm.moments(lm.LevyModel(gaussian_var=0.0, density=dens), 4)
    assert math.isinf(table.m[0])
    assert table.m[2] == pytest.approx(2.0 / 3.0, rel=1e-8)


def test_model_dict_roundtrip():
    model = lm.LevyModel(drift=0.1, gaussian_var=0.5, atoms=((1.0, 1.0),),
                         density=lm.uniform_band(2.0, 0.5, 1.5))
    back = lm.model_from_dict(lm.model_to_dict(model))
    assert back.atoms == model.atoms
    assert back.density.params == model.density.params
    assert np.allclose(lm.moments(back, 6).m, lm.moments(model, 6).m)


def test_invalid_constructions():
    with pytest.raises(ValueError):
        lm.LevyModel(gaussian_var=-1.0)
    with pytest.raises(ValueError):
        lm.exp_tail(lo=2.0, hi=1.0)
    with pytest.raises(ValueError):
        lm.uniform_band(lo=-1.0, hi=1.0)
