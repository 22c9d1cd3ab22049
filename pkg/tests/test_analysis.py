import math

import numpy as np
import pytest

from teugels_fbsde import families as fam
from teugels_fbsde.analysis import (
    LINEAR_CASES, PerturbationSpec, brackets_experiment, check_comparison_hypotheses,
    comparison_experiment, convergence_experiment, h2_experiment, linear_proposition_check,
    linear_suite, perturb, sobol_probes, stability_experiment, zero_anchor,
)
from teugels_fbsde.errors import HypothesisViolated
from teugels_fbsde.fbsde_problem import X0Law, lipschitz_audit
from teugels_fbsde.solver import SolverConfig

CFG = SolverConfig(n_paths=4000, pilot_paths=1000)

# explicit-scheme value of y0 for Y' = -(0.1 Y + 0.5), Y_T = 0 on 50 steps
LINEAR_IN_Y_SCHEME = 5.0 * ((1 + 0.1 / 50) ** 50 - 1)


def test_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec(which=("h",))
    with pytest.raises(ValueError):
        PerturbationSpec(direction="wiggle")
    with pytest.raises(ValueError):
        PerturbationSpec(magnitudes=(-0.1,))


def test_perturb_adjusts_lipschitz_and_stays_valid():
    p = fam.coupled_h2(3, 1.0)
    q = perturb(p, PerturbationSpec(("f", "sigma", "g", "phi", "x0"), "sin"), 0.1)
    assert q.lam == pytest.approx(p.lam + 0.1) and q.lam0 == pytest.approx(p.lam0 + 0.1)
    assert q.x0.mean == p.x0.mean + 0.1
    assert lipschitz_audit(q).passed
    assert perturb(p, PerturbationSpec(), 0.0) is p


def test_stability_zero_and_shift_oracle(poisson):
    model, basis = poisson
    p = fam.oracle(basis.K_eff, 1.0, X0Law(0.0))
    res = stability_experiment(p, model, basis, PerturbationSpec(("phi",), "const", (0.1, 0.0)),
                               CFG, 1)
    rows = {r["eps"]: r for r in res.rows}
    assert rows[0.0]["dPi"] == 0.0
    assert rows[0.1]["dPi"] == pytest.approx(0.1, rel=1e-9)
    assert rows[0.1]["ratio"] == pytest.approx(1.0, rel=1e-9)
    assert res.passed


def test_stability_driver_shift(poisson):
    model, basis = poisson
    p = fam.oracle(basis.K_eff, 1.0, X0Law(0.0))
    res = stability_experiment(p, model, basis, PerturbationSpec(("g",), "const", (0.05,)), CFG, 1)
    assert res.rows[0]["dy0"] == pytest.approx(0.05, rel=1e-9)


def test_convergence_constant_and_halving(two_atom):
    model, basis = two_atom
    p = fam.coupled_h2(basis.K_eff, 0.5)
    flat = convergence_experiment(p, model, basis, PerturbationSpec(which=()), CFG, 2, levels=3)
    assert all(r["distance"] == 0.0 for r in flat.rows) and flat.passed
    res = convergence_experiment(p, model, basis, PerturbationSpec(("g", "x0"), "tanh"), CFG, 2)
    assert res.passed
    assert all(abs(h - 0.5) < 0.05 for h in res.summary["halving_ratios"])


def test_comparison_identical_and_oracles(poisson):
    model, basis = poisson
    p = fam.oracle(basis.K_eff, 1.0)
    same = comparison_experiment(p, p, model, basis, CFG, 3)
    assert same.rows[0]["diff"] == 0.0 and same.passed
    up = perturb(p, PerturbationSpec(("g",)), 0.1)
    res = comparison_experiment(p, up, model, basis, CFG, 3, expected=0.1)
    assert res.passed and res.rows[0]["diff"] == pytest.approx(0.1, abs=1e-9)


def test_comparison_hypothesis_violations():
    p = fam.oracle(1, 1.0)
    with pytest.raises(HypothesisViolated, match="g0 > g1"):
        check_comparison_hypotheses(p, perturb(p, PerturbationSpec(("g",), "sin"), 0.1))
    with pytest.raises(HypothesisViolated, match="phi0 > phi1"):
        check_comparison_hypotheses(perturb(p, PerturbationSpec(("phi",)), 0.1), p)
    with pytest.raises(HypothesisViolated, match="share f"):
        check_comparison_hypotheses(p, perturb(p, PerturbationSpec(("f",)), 0.1))
    bad = fam.linear(1, 1.0, c1=1.0, a2=1.0)
    with pytest.raises(HypothesisViolated, match="structure condition"):
        check_comparison_hypotheses(bad, bad)


def test_sobol_probe_envelope():
    t, x, y, z = sobol_probes(fam.zero(2, 3.0), 1000, 2.0)
    assert len(t) == 1000 and z.shape == (1000, 2)
    assert t.min() >= 0 and t.max() <= 3.0 and np.abs(x).max() <= 2.0


def test_linear_cases(two_atom):
    model, basis = two_atom
    res = linear_suite(model, basis, CFG, 4)
    assert res.passed
    rows = {r["case"]: r for r in res.rows}
    assert rows["constant_terminal"]["y0"] == pytest.approx(1.0, abs=1e-9)
    assert rows["drift_integral"]["y0"] == pytest.approx(1.0, abs=1e-9)
    assert rows["linear_in_y"]["y0"] == pytest.approx(LINEAR_IN_Y_SCHEME, abs=1e-9)
    assert rows["linear_in_y"]["y0"] == pytest.approx(rows["linear_in_y"]["expected"], abs=1e-3)


def test_linear_hypotheses(two_atom):
    model, basis = two_atom
    with pytest.raises(HypothesisViolated):
        linear_proposition_check({"T": 1.0, "params": {"alpha": -1.0}}, model, basis, CFG, 1)
    with pytest.raises(HypothesisViolated):
        linear_proposition_check({"T": 1.0, "params": {"b2": 0.1, "c1": 0.1}}, model, basis, CFG, 1)


def test_brackets_h2_zero(two_atom):
    model, basis = two_atom
    assert brackets_experiment(model, basis, 20_000, 20, 1.0, 1).passed
    assert h2_experiment(fam.coupled_h2(basis.K_eff, 1.0)).passed
    assert not h2_experiment(fam.coupled_linear(basis.K_eff, 1.0)).passed
    assert zero_anchor(fam.zero(basis.K_eff, 1.0), model, basis, CFG, 1).passed
