"""FBSDE data, assumption checks and the solution-space norm.

Coefficients are vectorised callables over paths::

    f(t, x, y, z)  -> (N,)      x, y: (N,), z: (N, K)
    sigma(t, x, y) -> (N, K)
    g(t, x, y, z)  -> (N,)
    phi(x)         -> (N,)

They must be pure (no hidden state), since experiments evaluate them from
several threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NonFiniteData
from .path_engine import PathBundle


@dataclass(frozen=True)
class X0Law:
    """X0 = mean + sqrt(var) * xi with xi the bundle's reserved normals."""

    mean: float = 0.0
    var: float = 0.0

    def __post_init__(self):
        if self.var < 0:
            raise ValueError("X0 variance must be nonnegative")

    @property
    def deterministic(self) -> bool:
        return self.var == 0.0

    @property
    def second_moment(self) -> float:
        return self.mean ** 2 + self.var

    def sample(self, noise: np.ndarray) -> np.ndarray:
        if self.deterministic:
            return np.full(len(noise), float(self.mean))
        return self.mean + math.sqrt(self.var) * noise


@dataclass(frozen=True)
class FbsdeProblem:
    f: Callable
    sigma: Callable
    g: Callable
    phi: Callable
    x0: X0Law
    lam: float
    lam0: float
    T: float
    K: int
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def with_terminal(self, phi: Callable, T: float) -> "FbsdeProblem":
        return replace(self, phi=phi, T=T)

    def with_horizon(self, T: float) -> "FbsdeProblem":
        return replace(self, T=T)


@dataclass(eq=False)
class SolutionTriple:
    """Discrete (X, Y, Z) on a bundle.

    ``y0_samples`` are the pathwise values phi(X_T) + sum_k g_k dt_k whose
    mean equals ``y0``; they give the Monte Carlo standard error.
    """

    bundle: PathBundle
    X: np.ndarray          # (N, n + 1)
    Y: np.ndarray          # (N, n + 1)
    Z: np.ndarray          # (N, n, K)
    y0: float
    y0_se: float = 0.0
    y0_samples: np.ndarray | None = None

    @property
    def grid(self):
        return self.bundle.grid


def zero_triple(bundle: PathBundle) -> SolutionTriple:
    N, n, K = bundle.dH.shape
    return SolutionTriple(bundle, np.zeros((N, n + 1)), np.zeros((N, n + 1)),
                          np.zeros((N, n, K)), 0.0, 0.0, np.zeros(N))


def norm_terms(X, Y, Z, dt) -> np.ndarray:
    """Per-path sup|X|^2 + sup|Y|^2 + sum_k ||Z_k||^2 dt_k."""
    return (np.max(X ** 2, axis=1) + np.max(Y ** 2, axis=1)
            + np.einsum("pki,k->p", Z ** 2, dt))


def solution_norm(sol: SolutionTriple) -> float:
    """Monte Carlo (E[sup|X|^2 + sup|Y|^2] + E int ||Z||^2 dt)^(1/2) on the grid."""
    return math.sqrt(float(np.mean(norm_terms(sol.X, sol.Y, sol.Z, sol.grid.dt))))


def _zeros_args(K, n=1):
    return np.zeros(n), np.zeros(n), np.zeros((n, K))


def check_V0(problem: FbsdeProblem, n_quad: int = 32, t0: float = 0.0) -> float:
    """sqrt(E|X0|^2 + |phi(0)|^2 + int [|f|^2 + ||sigma||^2 + |g|^2](t, 0, 0, 0) dt)."""
    x, y, z = _zeros_args(problem.K)
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    length = problem.T - t0
    ts = t0 + 0.5 * length * (nodes + 1.0)
    ws = 0.5 * length * weights
    integral = 0.0
    for t, w in zip(ts, ws):
        val = (float(problem.f(t, x, y, z)[0]) ** 2
               + float(np.sum(np.asarray(problem.sigma(t, x, y))[0] ** 2))
               + float(problem.g(t, x, y, z)[0]) ** 2)
        integral += w * val
    phi0 = float(problem.phi(np.zeros(1))[0])
    terms = {"E|X0|^2": problem.x0.second_moment, "|phi(0)|^2": phi0 ** 2, "integral": integral}
    for label, val in terms.items():
        if not math.isfinite(val):
            raise NonFiniteData(f"{label} is not finite ({val})")
    return math.sqrt(sum(terms.values()))


def _probe_points(problem: FbsdeProblem, n: int, radius: float, seed: int):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, problem.T, n)
    x = rng.uniform(-radius, radius, n)
    y = rng.uniform(-radius, radius, n)
    z = rng.uniform(-radius, radius, (n, problem.K))
    return t, x, y, z


@dataclass(frozen=True)
class H2Report:
    cross_residual: float      # max_ij |sigma_y^i f_z^j|
    sum_residual: float        # max |f_y + <sigma_x, f_z> + <sigma_y, g_z>|
    tol: float
    probes: int

    @property
    def passed(self) -> bool:
        return self.cross_residual <= self.tol and self.sum_residual <= self.tol


def check_H2(problem: FbsdeProblem, probes: int = 1000, fd_step: float = 1e-5,
             radius: float = 3.0, seed: int = 0, tol: float | None = None) -> H2Report:
    """Central-difference check of sigma_y f_z = 0 and f_y + sigma_x f_z + sigma_y g_z = 0.

    Products of the l2-valued derivatives are read componentwise for the
    first condition and as inner products for the second.  Probes are split
    into eight chunks, each evaluated at one random time so that calls stay
    vectorised.
    """
    h = fd_step
    if tol is None:
        tol = 1e-6 + 10 * h * h
    times, x, y, z = _probe_points(problem, probes, radius, seed)
    times = times[:8]
    cross = total = 0.0
    K = problem.K
    for chunk, t in enumerate(times):
        sl = slice(chunk * probes // 8, (chunk + 1) * probes // 8)
        xs, ys, zs = x[sl], y[sl], z[sl]
        f_y = (problem.f(t, xs, ys + h, zs) - problem.f(t, xs, ys - h, zs)) / (2 * h)
        f_z = np.empty((len(xs), K))
        g_z = np.empty((len(xs), K))
        for i in range(K):
            e = np.zeros(K)
            e[i] = h
            f_z[:, i] = (problem.f(t, xs, ys, zs + e) - problem.f(t, xs, ys, zs - e)) / (2 * h)
            g_z[:, i] = (problem.g(t, xs, ys, zs + e) - problem.g(t, xs, ys, zs - e)) / (2 * h)
        s_x = (np.asarray(problem.sigma(t, xs + h, ys)) - np.asarray(problem.sigma(t, xs - h, ys))) / (2 * h)
        s_y = (np.asarray(problem.sigma(t, xs, ys + h)) - np.asarray(problem.sigma(t, xs, ys - h))) / (2 * h)
        if len(xs):
            cross = max(cross, float(np.max(np.abs(s_y[:, :, None] * f_z[:, None, :]))))
            resid = f_y + np.sum(s_x * f_z, axis=1) + np.sum(s_y * g_z, axis=1)
            total = max(total, float(np.max(np.abs(resid))))
    return H2Report(cross, total, tol, probes)


@dataclass(frozen=True)
class LipschitzAudit:
    ratios: dict            # observed quotient / declared constant, per coefficient
    rel_tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(r <= 1.0 + self.rel_tol for r in self.ratios.values())


def lipschitz_audit(problem: FbsdeProblem, pairs: int = 2000, radius: float = 3.0,
                    seed: int = 1, rel_tol: float = 1e-6) -> LipschitzAudit:
    """Largest sampled difference quotient of f, sigma, g, phi over the declared constants."""
    t, x, y, z = _probe_points(problem, pairs, radius, seed)
    _, x2, y2, z2 = _probe_points(problem, pairs, radius, seed + 1)
    t = float(t[0])
    dxyz = np.abs(x - x2) + np.abs(y - y2) + np.linalg.norm(z - z2, axis=1)
    dxy2 = (x - x2) ** 2 + (y - y2) ** 2
    lam, lam0 = problem.lam, problem.lam0

    def ratio(q, c):
        q = float(np.max(q))
        if c > 0:
            return q / c
        return 0.0 if q <= 1e-12 else math.inf

    out = {
        "f": ratio(np.abs(problem.f(t, x, y, z) - problem.f(t, x2, y2, z2)) / dxyz, lam),
        "g": ratio(np.abs(problem.g(t, x, y, z) - problem.g(t, x2, y2, z2)) / dxyz, lam),
        "sigma": ratio(np.sqrt(np.sum((np.asarray(problem.sigma(t, x, y))
                                       - np.asarray(problem.sigma(t, x2, y2))) ** 2, axis=1) / dxy2), lam),
        "phi": ratio(np.abs(problem.phi(x) - problem.phi(x2)) / np.abs(x - x2), lam0),
    }
    return LipschitzAudit(out, rel_tol)
