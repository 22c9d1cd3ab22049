"""YAML run configuration with field-path diagnostics.

Layout::

    seed: 7
    out: results
    model:   {gaussian_var: 1.0, atoms: [{mass: 1, location: 1}], ...}
    basis:   {K: 3, rank_tol: 1.0e-12}
    grid:    {T: 1.0, n_steps: 50}
    problem: {family: oracle, params: {c: 0.3}, x0: {mean: 0.0, var: 0.0}}
    solver:  {n_paths: 10000, degree: 5, ...}
    simulate:   {n_paths: 100000, dump: false}
    experiment: {name: stability, which: [g], direction: const, magnitudes: [0.1, 0.01]}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .families import FAMILIES, make_problem
from .fbsde_problem import FbsdeProblem, X0Law
from .levy_model import BUILTIN_DENSITIES, LevyModel, model_from_dict
from .solver import SolverConfig
from .teugels_basis import DEFAULT_RANK_TOL, K_MAX

SECTIONS = {"seed", "out", "model", "basis", "grid", "problem", "solver", "simulate", "experiment"}
EXPERIMENTS = ("stability", "convergence", "comparison", "linear", "brackets", "h2")
SOLVER_FIELDS = {f.name for f in dataclasses.fields(SolverConfig)} - {"n_steps", "threads"}


@dataclass
class RunConfig:
    seed: int
    out: str
    model: LevyModel
    K: int
    rank_tol: float
    T: float
    n_steps: int
    family: str
    params: dict
    x0: X0Law
    solver: SolverConfig
    simulate: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def problem(self, K_eff: int) -> FbsdeProblem:
        try:
            return make_problem(self.family, K_eff, self.T, self.x0, **self.params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"problem.params: {exc}") from exc

    def with_overrides(self, seed=None, out=None, threads=None) -> "RunConfig":
        cfg = dataclasses.replace(self)
        if seed is not None:
            cfg.seed = int(seed)
            cfg.raw = {**cfg.raw, "seed": int(seed)}
        if out is not None:
            cfg.out = str(out)
        if threads is not None:
            if threads < 1:
                raise ConfigError("--threads: must be positive")
            cfg.solver = dataclasses.replace(cfg.solver, threads=int(threads))
        return cfg


def _section(doc, name, required=False) -> dict:
    val = doc.get(name)
    if val is None:
        if required:
            raise ConfigError(f"{name}: missing required section")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(val).__name__}")
    return val


def _number(sec, path, key, default=None, kind=float, positive=False, nonneg=False):
    where = f"{path}.{key}"
    if key not in sec or sec[key] is None:
        if default is None:
            raise ConfigError(f"{where}: missing")
        return default
    val = sec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {val!r}")
    if kind is int and float(val) != int(val):
        raise ConfigError(f"{where}: expected an integer, got {val!r}")
    val = kind(val)
    if positive and not val > 0:
        raise ConfigError(f"{where}: must be positive, got {val!r}")
    if nonneg and val < 0:
        raise ConfigError(f"{where}: must be nonnegative, got {val!r}")
    return val


def _no_unknown(sec, path, allowed):
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")


def _parse_model(sec) -> LevyModel:
    _no_unknown(sec, "model", {"drift", "gaussian_var", "atoms", "density", "exp_moment_alpha"})
    for i, atom in enumerate(sec.get("atoms") or []):
        if not isinstance(atom, dict):
            raise ConfigError(f"model.atoms[{i}]: expected a mapping with mass and location")
        _no_unknown(atom, f"model.atoms[{i}]", {"mass", "location"})
        _number(atom, f"model.atoms[{i}]", "mass", positive=True)
        _number(atom, f"model.atoms[{i}]", "location")
    dens = sec.get("density")
    if dens is not None:
        if not isinstance(dens, dict) or dens.get("name") not in BUILTIN_DENSITIES:
            raise ConfigError(f"model.density.name: choose from {sorted(BUILTIN_DENSITIES)}")
    _number(sec, "model", "gaussian_var", 1.0, nonneg=True)
    _number(sec, "model", "drift", 0.0)
    _number(sec, "model", "exp_moment_alpha", 1.0, positive=True)
    try:
        return model_from_dict(sec)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def parse_x0(val) -> X0Law:
    if val is None:
        return None
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return X0Law(float(val))
    if not isinstance(val, dict):
        raise ConfigError("problem.x0: expected a number or {mean, var}")
    _no_unknown(val, "problem.x0", {"mean", "var"})
    return X0Law(_number(val, "problem.x0", "mean", 0.0),
                  _number(val, "problem.x0", "var", 0.0, nonneg=True))


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a mapping")
    _no_unknown(doc, "config", SECTIONS)
    if "seed" not in doc:
        raise ConfigError("seed: missing (no wall-clock default)")
    seed = doc["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a nonnegative integer, got {seed!r}")
    model = _parse_model(_section(doc, "model", required=True))

    basis = _section(doc, "basis")
    _no_unknown(basis, "basis", {"K", "rank_tol"})
    K = _number(basis, "basis", "K", 1, kind=int, positive=True)
    if K > K_MAX:
        raise ConfigError(f"basis.K: at most {K_MAX}")
    rank_tol = _number(basis, "basis", "rank_tol", DEFAULT_RANK_TOL, positive=True)

    grid = _section(doc, "grid", required=True)
    _no_unknown(grid, "grid", {"T", "n_steps"})
    T = _number(grid, "grid", "T", positive=True)
    n_steps = _number(grid, "grid", "n_steps", 50, kind=int, positive=True)

    prob = _section(doc, "problem")
    _no_unknown(prob, "problem", {"family", "params", "x0"})
    family = prob.get("family", "zero")
    if family not in FAMILIES:
        raise ConfigError(f"problem.family: unknown {family!r}; choose from {sorted(FAMILIES)}")
    params = prob.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("problem.params: expected a mapping")
    x0 = parse_x0(prob.get("x0"))

    sol = _section(doc, "solver")
    _no_unknown(sol, "solver", SOLVER_FIELDS)
    try:
        solver = SolverConfig(n_steps=n_steps, **sol)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    sim = _section(doc, "simulate")
    _no_unknown(sim, "simulate", {"n_paths", "n_steps", "dump", "record_jumps"})
    exp = _section(doc, "experiment")
    if "name" in exp and exp["name"] not in EXPERIMENTS:
        raise ConfigError(f"experiment.name: choose from {list(EXPERIMENTS)}")

    cfg = RunConfig(seed=seed, out=str(doc.get("out", "results")), model=model, K=K,
                    rank_tol=rank_tol, T=T, n_steps=n_steps, family=family, params=params,
                    x0=x0, solver=solver, simulate=sim, experiment=exp, raw={})
    cfg.problem(K)  # surfaces bad family parameters now, with a field path
    cfg.raw = {k: doc[k] for k in sorted(doc) if k != "out"}
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: YAML parse error: {exc}") from exc
    return parse_config(doc)
