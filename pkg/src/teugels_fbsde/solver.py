"""Least-squares Monte Carlo solver for the coupled FBSDE.

One decoupled sweep freezes the prior (Y, Z) in the forward coefficients,
runs an Euler pass for X and a regression backward pass for (Y, Z).
Picard iteration of the sweep gives the solution on short horizons; long
horizons are cut into segments that are glued through terminal functions
G_i computed on an x-grid.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DeltaUnderflow,
    GridMismatch,
    MaxIterExceeded,
    NoContraction,
    NumericalBreakdown,
    RegressionSingular,
)
from .fbsde_problem import FbsdeProblem, SolutionTriple, norm_terms, zero_triple
from .levy_model import LevyModel
from .path_engine import PathBundle, TimeGrid, simulate
from .teugels_basis import TeugelsBasis

REGRESSION_RANK_TOL = 1e-10
BUDGET_RTOL = 1e-9
HORIZON_ATOL = 1e-12


class LipschitzBudgetWarning(UserWarning):
    """A terminal function G_i exceeded the Lipschitz budget."""


@dataclass(frozen=True)
class SolverConfig:
    n_paths: int = 10_000
    n_steps: int = 50            # per segment
    degree: int = 5
    picard_tol: float = 1e-4
    max_iter: int = 50
    no_contraction_run: int = 3
    delta_shrink: float = 0.5
    accept_ratio: float = 0.9
    pilot_paths: int = 2000
    x_grid_count: int = 17
    x_grid_sd: float = 6.0
    x_grid_halfwidth_min: float = 1.0
    grid_paths: int = 2000
    budget_c: float = 1.0
    threads: int = 1

    def __post_init__(self):
        for name in ("n_paths", "n_steps", "max_iter", "pilot_paths", "grid_paths",
                     "threads", "no_contraction_run"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.degree < 1:
            raise ValueError("regression degree must be at least 1")
        if self.x_grid_count < 2:
            raise ValueError("x_grid_count must be at least 2")
        for name in ("picard_tol", "x_grid_sd", "x_grid_halfwidth_min", "budget_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta_shrink < 1:
            raise ValueError("delta_shrink must lie in (0, 1)")
        if not 0 < self.accept_ratio < 1:
            raise ValueError("accept_ratio must lie in (0, 1)")


# -- regression -------------------------------------------------------------

def _design(x: np.ndarray, degree: int) -> np.ndarray:
    if len(x) == 0:
        raise RegressionSingular("regression on zero paths")
    m = float(np.mean(x))
    s = float(np.std(x))
    if not s > 1e-12 * max(1.0, abs(m)):
        return np.ones((len(x), 1))
    return np.vander((x - m) / s, degree + 1, increasing=True)


def projector(x: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal basis Q of the polynomial design in standardised x.

    Drops to lower degrees while R has a relatively tiny pivot.
    """
    for d in range(degree, -1, -1):
        A = _design(x, d)
        if A.shape[1] != d + 1 and d > 0:
            continue
        Q, R = np.linalg.qr(A)
        diag = np.abs(np.diag(R))
        if diag.size and diag.max() > 0 and diag.min() > REGRESSION_RANK_TOL * diag.max():
            return Q
    raise RegressionSingular(f"regression design singular even at degree 0 ({len(x)} paths)")


def regress(x: np.ndarray, targets: np.ndarray, degree: int) -> np.ndarray:
    """Fitted values of the least-squares regression of ``targets`` on x."""
    Q = projector(x, degree)
    return Q @ (Q.T @ targets)


# -- distances ---------------------------------------------------------------

def _check_same(a: SolutionTriple, b: SolutionTriple):
    if a.bundle is b.bundle:
        return
    if not a.bundle.same_source(b.bundle) or a.X.shape != b.X.shape or a.Z.shape != b.Z.shape:
        raise GridMismatch("solutions live on different bundles or grids")


def m2_terms(a: SolutionTriple, b: SolutionTriple) -> np.ndarray:
    """Per-path sup|dX|^2 + sup|dY|^2 + sum ||dZ||^2 dt."""
    _check_same(a, b)
    return norm_terms(a.X - b.X, a.Y - b.Y, a.Z - b.Z, a.grid.dt)


def m2_distance(a: SolutionTriple, b: SolutionTriple) -> float:
    return math.sqrt(float(np.mean(m2_terms(a, b))))


def m2_distance_se(a: SolutionTriple, b: SolutionTriple) -> tuple[float, float]:
    """Distance and a delta-method standard error."""
    terms = m2_terms(a, b)
    d2 = float(np.mean(terms))
    d = math.sqrt(d2)
    if len(terms) < 2 or d == 0:
        return d, 0.0
    return d, float(np.std(terms, ddof=1)) / math.sqrt(len(terms)) / (2 * d)


# -- one sweep ---------------------------------------------------------------

def decoupled_sweep(problem: FbsdeProblem, bundle: PathBundle, prior_Y: np.ndarray,
                    prior_Z: np.ndarray, degree: int = 5, x_start=None) -> SolutionTriple:
    """Solve the FBSDE with (Y, Z) frozen at the prior in f and sigma.

    Forward Euler for X, then backward regression with the explicit driver
    g(t_k, X_k, E[Y_{k+1} | X_k], Z_k).  Z uses the centred product
    (Y_{k+1} - E[Y_{k+1} | X_k]) dH_k, which has the same conditional mean
    as Y_{k+1} dH_k and less variance.
    """
    grid = bundle.grid
    t = grid.points
    dt = grid.dt
    N, n, K = bundle.dH.shape
    if x_start is None:
        x0 = problem.x0.sample(bundle.x0_noise)
    else:
        x0 = np.broadcast_to(np.asarray(x_start, dtype=float), (N,))
    X = np.empty((N, n + 1))
    X[:, 0] = x0
    for k in range(n):
        xk, yk, zk = X[:, k], prior_Y[:, k], prior_Z[:, k]
        drift = problem.f(t[k], xk, yk, zk) * dt[k]
        vol = np.sum(np.asarray(problem.sigma(t[k], xk, yk)) * bundle.dH[:, k], axis=1)
        X[:, k + 1] = xk + drift + vol
    Y = np.empty((N, n + 1))
    Z = np.empty((N, n, K))
    Y[:, n] = problem.phi(X[:, n])
    samples = Y[:, n].copy()
    for k in range(n - 1, -1, -1):
        Q = projector(X[:, k], degree)
        cond = Q @ (Q.T @ Y[:, k + 1])
        resid = (Y[:, k + 1] - cond)[:, None] * bundle.dH[:, k]
        Z[:, k] = Q @ (Q.T @ resid) / dt[k]
        gk = problem.g(t[k], X[:, k], cond, Z[:, k]) * dt[k]
        Y[:, k] = cond + gk
        samples += gk
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
        raise NumericalBreakdown("non-finite values in the sweep")
    y0 = float(np.mean(Y[:, 0]))
    se = float(np.std(samples, ddof=1)) / math.sqrt(N) if N > 1 else 0.0
    return SolutionTriple(bundle, X, Y, Z, y0, se, samples)


# -- Picard ------------------------------------------------------------------

@dataclass
class PicardResult:
    solution: SolutionTriple
    iterations: int
    ratios: list
    distances: list

    def __iter__(self):
        return iter((self.solution, self.iterations, self.ratios))


def picard_solve(problem: FbsdeProblem, bundle: PathBundle, config: SolverConfig,
                 x_start=None) -> PicardResult:
    """Iterate the sweep from the zero triple until the M^2 step falls below tol."""
    end = bundle.grid.points[-1]
    if abs(end - problem.T) > HORIZON_ATOL * max(1.0, abs(problem.T)):
        raise GridMismatch(f"bundle ends at {end} but the problem horizon is {problem.T}")
    prev = zero_triple(bundle)
    distances, ratios = [], []
    run = 0
    for m in range(1, config.max_iter + 1):
        cur = decoupled_sweep(problem, bundle, prev.Y, prev.Z, config.degree, x_start)
        d = m2_distance(cur, prev)
        if distances:
            r = d / distances[-1] if distances[-1] > 0 else (0.0 if d == 0 else math.inf)
            ratios.append(r)
            run = run + 1 if r >= 1 else 0
        distances.append(d)
        if d < config.picard_tol:
            return PicardResult(cur, m, ratios, distances)
        if run >= config.no_contraction_run:
            raise NoContraction(
                f"{run} consecutive Picard ratios >= 1 (last {ratios[-1]:.3g}); shrink the horizon",
                ratios, distances)
        prev = cur
    raise MaxIterExceeded(f"no convergence in {config.max_iter} Picard iterations "
                          f"(last distance {distances[-1]:.3g})", ratios, distances)


# -- delta -------------------------------------------------------------------

def estimate_delta(problem: FbsdeProblem, model: LevyModel, basis: TeugelsBasis,
                   config: SolverConfig, seed: int, stream: tuple = (9,),
                   trace: list | None = None) -> float:
    """Largest tested horizon min(T, 1) * shrink^j whose Picard ratios stay <= accept_ratio."""
    T = problem.T
    T_try = min(T, 1.0)
    while True:
        if T_try < 1e-4 * T:
            raise DeltaUnderflow(f"no contracting horizon above {1e-4 * T:.3g}")
        grid = TimeGrid.uniform(T_try, config.n_steps)
        bundle = simulate(model, basis, grid, config.pilot_paths, seed, stream, config.threads)
        try:
            res = picard_solve(problem.with_horizon(T_try), bundle, config)
            worst = max(res.ratios, default=0.0)
            status = "ok" if worst <= config.accept_ratio else "slow"
        except (NoContraction, MaxIterExceeded) as exc:
            worst = max(exc.ratios, default=math.inf)
            status = type(exc).__name__
        if trace is not None:
            trace.append({"T_try": T_try, "max_ratio": worst, "status": status})
        if status == "ok":
            return T_try
        T_try *= config.delta_shrink


# -- gluing ------------------------------------------------------------------

@dataclass(frozen=True)
class TerminalFunction:
    """Piecewise-linear x -> G(x) with linear continuation outside the nodes."""

    xs: np.ndarray
    ys: np.ndarray
    node_se: np.ndarray
    lipschitz_estimate: float

    @classmethod
    def from_nodes(cls, xs, ys, node_se=None) -> "TerminalFunction":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        slopes = np.diff(ys) / np.diff(xs)
        se = np.zeros_like(ys) if node_se is None else np.asarray(node_se, dtype=float)
        return cls(xs, ys, se, float(np.max(np.abs(slopes))) if len(slopes) else 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xs, ys = self.xs, self.ys
        out = np.interp(x, xs, ys)
        lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
        hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        out = np.where(x < xs[0], ys[0] + lo_slope * (x - xs[0]), out)
        return np.where(x > xs[-1], ys[-1] + hi_slope * (x - xs[-1]), out)


def lipschitz_budget(problem: FbsdeProblem, c: float = 1.0) -> float:
    lam, lam0 = problem.lam, problem.lam0
    try:
        growth = math.exp((2 * lam + lam * lam) * problem.T)
    except OverflowError:
        return math.inf
    return c * ((lam0 + 1.0) * growth - 1.0)


@dataclass
class GlueResult:
    solution: SolutionTriple
    delta: float
    n_segments: int
    terminals: list = field(default_factory=list)     # G_1 .. G_{n-1}
    budget: float = math.nan
    budget_breaches: list = field(default_factory=list)
    segment_iterations: list = field(default_factory=list)
    segment_distances: list = field(default_factory=list)
    delta_trace: list = field(default_factory=list)

    @property
    def budget_ok(self) -> bool:
        return not self.budget_breaches


def main_bundle(problem: FbsdeProblem, model: LevyModel, basis: TeugelsBasis,
                config: SolverConfig, seed: int, n_segments: int = 1,
                stream: tuple = ()) -> PathBundle:
    """The bundle a glued solve with ``n_segments`` runs its forward pass on."""
    grid = TimeGrid.uniform(problem.T, config.n_steps * n_segments)
    return simulate(model, basis, grid, config.n_paths, seed, stream, config.threads)


def _x_grids(problem, model, basis, config, seed, stream, n):
    """Node sets at T_1..T_{n-1} from a pilot forward pass with zero prior."""
    grid = TimeGrid.uniform(problem.T, config.n_steps * n)
    pilot = simulate(model, basis, grid, config.pilot_paths, seed, stream + (1,), config.threads)
    zero = zero_triple(pilot)
    sweep = decoupled_sweep(problem, pilot, zero.Y, zero.Z, config.degree)
    out = []
    for i in range(1, n):
        xs = sweep.X[:, i * config.n_steps]
        half = max(config.x_grid_sd * float(np.std(xs)), config.x_grid_halfwidth_min)
        out.append(np.linspace(float(np.mean(xs)) - half, float(np.mean(xs)) + half,
                               config.x_grid_count))
    return out


def glue_solve(problem: FbsdeProblem, model: LevyModel, basis: TeugelsBasis,
               config: SolverConfig, seed: int, stream: tuple = (),
               delta: float | None = None, n_segments: int | None = None) -> GlueResult:
    """Solve on [0, T] by backward construction of G_i and forward stitching.

    ``n_segments`` overrides the count ceil(T / delta).  With a single
    segment the result is exactly ``picard_solve`` on ``main_bundle``.
    """
    trace: list = []
    budget = lipschitz_budget(problem, config.budget_c)
    if n_segments is None:
        if delta is None:
            delta = estimate_delta(problem, model, basis, config, seed, stream + (9,), trace)
        n = max(1, math.ceil(problem.T / delta - 1e-12))
    else:
        n = int(n_segments)
        if n < 1:
            raise ValueError("n_segments must be positive")
        delta = problem.T / n if delta is None else delta
    bundle = main_bundle(problem, model, basis, config, seed, n, stream)
    if n == 1:
        res = picard_solve(problem, bundle, config)
        return GlueResult(res.solution, delta, 1, [], budget, [], [res.iterations],
                          [res.distances], trace)

    knots = problem.T * np.arange(n + 1) / n
    x_grids = _x_grids(problem, model, basis, config, seed, stream, n)
    terminals = [None] * (n + 1)
    terminals[n] = problem.phi
    breaches = []
    for i in range(n, 1, -1):
        sub = problem.with_terminal(terminals[i], float(knots[i]))
        grid = TimeGrid.uniform(float(knots[i] - knots[i - 1]), config.n_steps, float(knots[i - 1]))
        gb = simulate(model, basis, grid, config.grid_paths, seed, stream + (2, i), config.threads)

        def node(x, sub=sub, gb=gb):
            sol = picard_solve(sub, gb, config, x_start=x).solution
            return sol.y0, sol.y0_se

        xs = x_grids[i - 2]
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                vals = list(pool.map(node, xs))
        else:
            vals = [node(x) for x in xs]
        G = TerminalFunction.from_nodes(xs, [v[0] for v in vals], [v[1] for v in vals])
        if G.lipschitz_estimate > budget * (1 + BUDGET_RTOL):
            breaches.append({"segment": i - 1, "lipschitz": G.lipschitz_estimate, "budget": budget})
            warnings.warn(f"G_{i - 1} Lipschitz estimate {G.lipschitz_estimate:.4g} exceeds "
                          f"budget {budget:.4g}", LipschitzBudgetWarning, stacklevel=2)
        terminals[i - 1] = G

    # forward stitching on the main bundle
    N, K = bundle.n_paths, bundle.K_eff
    X = np.empty((N, bundle.grid.n_steps + 1))
    Y = np.empty_like(X)
    Z = np.empty((N, bundle.grid.n_steps, K))
    iters, dists = [], []
    x_start = None
    first = None
    s = config.n_steps
    for i in range(1, n + 1):
        seg = bundle.slice_steps((i - 1) * s, i * s)
        sub = problem.with_terminal(terminals[i], float(seg.grid.points[-1]))
        res = picard_solve(sub, seg, config, x_start=x_start)
        sol = res.solution
        X[:, (i - 1) * s:i * s + 1] = sol.X
        Y[:, (i - 1) * s:i * s + 1] = sol.Y
        Z[:, (i - 1) * s:i * s] = sol.Z
        x_start = sol.X[:, -1]
        iters.append(res.iterations)
        dists.append(res.distances)
        if first is None:
            first = sol
    # node errors of the interpolated terminals enter y0 additively
    g_var = sum(float(np.max(terminals[i].node_se)) ** 2 for i in range(1, n))
    se = math.sqrt(first.y0_se ** 2 + g_var)
    stitched = SolutionTriple(bundle, X, Y, Z, first.y0, se, first.y0_samples)
    return GlueResult(stitched, delta, n, terminals[1:n], budget, breaches, iters, dists, trace)
