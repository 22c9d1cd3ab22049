"""Command-line entry point: basis, simulate, solve and verify.

Exit codes: 0 pass, 1 analytic failure, 2 configuration error,
3 hypothesis violated.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    LINEAR_CASES,
    ExperimentResult,
    PerturbationSpec,
    brackets_experiment,
    comparison_experiment,
    convergence_experiment,
    h2_experiment,
    linear_suite,
    perturb,
    stability_experiment,
)
from .config import EXPERIMENTS, RunConfig, parse_x0, load_config
from .errors import (
    ConfigError,
    DeltaUnderflow,
    ExponentialTailViolation,
    HypothesisViolated,
    MaxIterExceeded,
    NoContraction,
    NonIntegrableMeasure,
    TeugelsError,
    UnsupportedMeasure,
)
from .families import FAMILIES, make_problem
from .io import write_csv, write_json
from .levy_model import model_to_dict, validate_model
from .path_engine import TimeGrid, martingale_diagnostics, simulate
from .solver import LipschitzBudgetWarning, glue_solve
from .teugels_basis import (
    basis_for_model,
    basis_to_dict,
    check_lemma_identity,
    orthonormality_residual,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_HYPOTHESIS = 0, 1, 2, 3
BASIS_RESIDUAL_TOL = 1e-8


def _prepare(cfg: RunConfig):
    try:
        validate_model(cfg.model)
    except (NonIntegrableMeasure, ExponentialTailViolation) as exc:
        raise ConfigError(f"model: {exc}") from exc
    return basis_for_model(cfg.model, cfg.K, cfg.rank_tol)


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "tool_version": __version__, "seed": cfg.seed,
            "config": cfg.raw, **extra}


def cmd_basis(cfg: RunConfig, out: Path) -> int:
    basis = _prepare(cfg)
    orth = orthonormality_residual(basis, cfg.model)
    lemma = check_lemma_identity(basis, cfg.model)
    passed = orth <= BASIS_RESIDUAL_TOL and lemma <= BASIS_RESIDUAL_TOL
    write_json(out / "basis.json", "basis",
               {**basis_to_dict(basis), "model": model_to_dict(cfg.model)})
    write_json(out / "manifest.json", "manifest", _manifest(
        cfg, "basis", K_eff=basis.K_eff, orthonormality_residual=orth,
        lemma_residual=lemma, tolerance=BASIS_RESIDUAL_TOL, passed=passed))
    print(f"{'PASS' if passed else 'FAIL'} basis K_eff={basis.K_eff} "
          f"orthonormality={orth:.3e} lemma={lemma:.3e}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    basis = _prepare(cfg)
    sim = cfg.simulate
    n_paths = int(sim.get("n_paths", cfg.solver.n_paths))
    n_steps = int(sim.get("n_steps", cfg.n_steps))
    if n_paths < 1 or n_steps < 1:
        raise ConfigError("simulate.n_paths and simulate.n_steps must be positive")
    try:
        bundle = simulate(cfg.model, basis, TimeGrid.uniform(cfg.T, n_steps), n_paths, cfg.seed,
                          (), cfg.solver.threads, bool(sim.get("record_jumps", False)))
    except UnsupportedMeasure as exc:
        raise ConfigError(f"model: {exc}") from exc
    rep = martingale_diagnostics(bundle)
    K = basis.K_eff
    rows = [{"i": i + 1, "j": j + 1, "cov": rep.cov[i, j], "target": cfg.T * float(i == j),
             "se": rep.se[i, j], "z": rep.z[i, j]} for i in range(K) for j in range(i, K)]
    write_csv(out / "brackets.csv", "brackets", rows)
    if sim.get("dump", False):
        # plain .npy files are byte-deterministic, unlike zip archives
        for name in ("dH", "dB", "x0_noise"):
            np.save(out / f"paths_{name}.npy", getattr(bundle, name))
    passed = rep.passed()
    write_json(out / "manifest.json", "manifest", _manifest(
        cfg, "simulate", K_eff=K, n_paths=n_paths, n_steps=n_steps,
        max_abs_z=rep.max_abs_z, passed=passed))
    print(f"{'PASS' if passed else 'FAIL'} simulate max|z|={rep.max_abs_z:.3f}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    basis = _prepare(cfg)
    problem = cfg.problem(basis.K_eff)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LipschitzBudgetWarning)
        try:
            res = glue_solve(problem, cfg.model, basis, cfg.solver, cfg.seed)
        except UnsupportedMeasure as exc:
            raise ConfigError(f"model: {exc}") from exc
    sol = res.solution
    t = sol.grid.points
    zsq = np.sum(sol.Z ** 2, axis=2)
    rows = []
    for k in range(len(t)):
        rows.append({"t": t[k], "mean_X": float(np.mean(sol.X[:, k])),
                     "sd_X": float(np.std(sol.X[:, k])), "mean_Y": float(np.mean(sol.Y[:, k])),
                     "sd_Y": float(np.std(sol.Y[:, k])),
                     "mean_Z2": float(np.mean(zsq[:, k])) if k < len(t) - 1 else ""})
    write_csv(out / "solution.csv", "solution", rows)
    write_json(out / "manifest.json", "manifest", _manifest(
        cfg, "solve", problem=problem.name, lam=problem.lam, lam0=problem.lam0,
        delta=res.delta, delta_trace=res.delta_trace, n_segments=res.n_segments,
        iterations=res.segment_iterations, distances=res.segment_distances,
        lipschitz_budget=res.budget, budget_ok=res.budget_ok,
        budget_breaches=res.budget_breaches,
        terminal_lipschitz=[G.lipschitz_estimate for G in res.terminals],
        y0=sol.y0, y0_se=sol.y0_se, passed=True))
    print(f"PASS solve y0={sol.y0:.6g} se={sol.y0_se:.3g} delta={res.delta:.4g} "
          f"segments={res.n_segments} budget_ok={res.budget_ok}")
    return EXIT_OK


def _spec(exp: dict) -> PerturbationSpec:
    try:
        kwargs = {"which": tuple(exp.get("which", ("g",))),
                  "direction": exp.get("direction", "const")}
        if "magnitudes" in exp:
            kwargs["magnitudes"] = tuple(exp["magnitudes"])
        return PerturbationSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment: {exc}") from exc


def _second_problem(cfg: RunConfig, problem, K, exp):
    if "problem1" in exp:
        sec = exp["problem1"] or {}
        family = sec.get("family", cfg.family)
        if family not in FAMILIES:
            raise ConfigError(f"experiment.problem1.family: unknown {family!r}")
        x0 = parse_x0(sec.get("x0")) if "x0" in sec else cfg.x0
        try:
            return make_problem(family, K, cfg.T, x0, **(sec.get("params") or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"experiment.problem1.params: {exc}") from exc
    pert = exp.get("perturbation", {"which": ["g"], "direction": "const", "eps": 0.0})
    if not isinstance(pert, dict) or "eps" not in pert:
        raise ConfigError("experiment.perturbation: needs which, direction and eps")
    spec = _spec(pert)
    return perturb(problem, spec, float(pert["eps"]))


EXPERIMENT_KEYS = {
    "stability": {"which", "direction", "magnitudes", "max_spread"},
    "convergence": {"which", "direction", "magnitudes", "levels", "scale"},
    "comparison": {"perturbation", "problem1", "expected", "probes"},
    "linear": {"cases"},
    "brackets": {"n_paths", "n_steps", "threshold"},
    "h2": {"probes"},
}


def run_experiment(cfg: RunConfig, name: str) -> ExperimentResult:
    exp = dict(cfg.experiment)
    if exp.get("name", name) != name:
        raise ConfigError(f"experiment.name: section is for {exp['name']!r}, not {name!r}")
    exp.pop("name", None)
    extra = set(exp) - EXPERIMENT_KEYS[name]
    if extra:
        raise ConfigError(f"experiment: unknown keys {sorted(extra)} for {name}")
    basis = _prepare(cfg)
    model, solver, seed = cfg.model, cfg.solver, cfg.seed
    if name == "brackets":
        return brackets_experiment(model, basis, int(exp.get("n_paths", 100_000)),
                                   int(exp.get("n_steps", cfg.n_steps)), cfg.T, seed,
                                   solver.threads, float(exp.get("threshold", 4.0)))
    if name == "linear":
        cases = exp.get("cases", LINEAR_CASES)
        return linear_suite(model, basis, solver, seed, cases)
    problem = cfg.problem(basis.K_eff)
    if name == "h2":
        return h2_experiment(problem, int(exp.get("probes", 1000)), seed)
    if name == "stability":
        return stability_experiment(problem, model, basis, _spec(exp), solver, seed,
                                    float(exp.get("max_spread", 10.0)))
    if name == "convergence":
        return convergence_experiment(problem, model, basis, _spec(exp), solver, seed,
                                      int(exp.get("levels", 6)), exp.get("scale"))
    p1 = _second_problem(cfg, problem, basis.K_eff, exp)
    return comparison_experiment(problem, p1, model, basis, solver, seed,
                                 int(exp.get("probes", 10_000)), exp.get("expected"))


def cmd_verify(cfg: RunConfig, out: Path, name: str) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LipschitzBudgetWarning)
        try:
            result = run_experiment(cfg, name)
        except UnsupportedMeasure as exc:
            raise ConfigError(f"model: {exc}") from exc
    if result.rows:
        write_csv(out / f"{name}.csv", name, result.rows)
    write_json(out / f"{name}_summary.json", "summary",
               {"experiment": name, "verdict": "PASS" if result.passed else "FAIL",
                "summary": result.summary, "seed": cfg.seed, "config": cfg.raw})
    detail = ""
    if name == "h2":
        r = result.rows[0]
        detail = f" cross={r['cross_residual']:.3e} sum={r['sum_residual']:.3e}"
    print(f"{'PASS' if result.passed else 'FAIL'} {name}{detail}")
    return EXIT_OK if result.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teugels-fbsde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads")

    common(sub.add_parser("basis", help="build the Teugels basis and check its identities"))
    common(sub.add_parser("simulate", help="simulate Teugels increments and check brackets"))
    common(sub.add_parser("solve", help="solve the configured FBSDE"))
    verify = sub.add_parser("verify", help="run a verification experiment")
    verify.add_argument("experiment", choices=EXPERIMENTS)
    common(verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.out, args.threads)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "basis":
            return cmd_basis(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        return cmd_verify(cfg, out, args.experiment)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolated as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (NoContraction, MaxIterExceeded) as exc:
        ratios = ", ".join(f"{r:.3g}" for r in exc.ratios[-5:])
        print(f"FAIL {type(exc).__name__}: {exc} (last ratios: {ratios})", file=sys.stderr)
        return EXIT_FAIL
    except (DeltaUnderflow, TeugelsError) as exc:
        print(f"FAIL {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
