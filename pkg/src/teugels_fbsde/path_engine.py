"""Monte Carlo paths of the Teugels martingales for Brownian + atom models.

Seeding contract: paths are generated in fixed blocks of ``BLOCK_SIZE``.
Block ``b`` of stream ``s`` draws from a Philox generator keyed by
``SeedSequence(seed, spawn_key=(*s, b))``, in the order
normals -> X0 noise -> Poisson counts.  A bundle is therefore a pure
function of (model, basis, grid, n_paths, seed, stream), independent of
how blocks are distributed over worker threads, and the first n paths of a
larger bundle equal the bundle of n paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedMeasure
from .levy_model import LevyModel
from .teugels_basis import TeugelsBasis

BLOCK_SIZE = 512


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("a grid needs at least two points")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int, origin: float = 0.0) -> "TimeGrid":
        if horizon <= 0 or n_steps < 1:
            raise ValueError("uniform grid needs horizon > 0 and n_steps >= 1")
        return cls(origin + horizon * np.arange(n_steps + 1) / n_steps)

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    @property
    def origin(self) -> float:
        return float(self.points[0])

    @property
    def horizon(self) -> float:
        return float(self.points[-1] - self.points[0])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.points)

    def sub(self, k0: int, k1: int) -> "TimeGrid":
        return TimeGrid(self.points[k0:k1 + 1])

    def same_as(self, other: "TimeGrid") -> bool:
        return len(self.points) == len(other.points) and bool(np.array_equal(self.points, other.points))


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Simulated driving noise on a grid.

    dH:       (n_paths, n_steps, K_eff) Teugels increments
    dB:       (n_paths, n_steps) Gaussian part of L, variance sigma^2 dt
    x0_noise: (n_paths,) standard normals reserved for sampling X0
    """

    grid: TimeGrid
    dH: np.ndarray
    dB: np.ndarray
    x0_noise: np.ndarray
    seed: int
    stream: tuple = ()
    jump_log: list | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.dH.shape[0]

    @property
    def K_eff(self) -> int:
        return self.dH.shape[2]

    def H(self) -> np.ndarray:
        """Cumulative H on the grid, shape (n_paths, n_steps + 1, K_eff)."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1, self.K_eff))
        np.cumsum(self.dH, axis=1, out=out[:, 1:, :])
        return out

    def slice_steps(self, k0: int, k1: int) -> "PathBundle":
        return PathBundle(
            grid=self.grid.sub(k0, k1), dH=self.dH[:, k0:k1], dB=self.dB[:, k0:k1],
            x0_noise=self.x0_noise, seed=self.seed, stream=self.stream + (("steps", k0, k1),),
        )

    def same_source(self, other: "PathBundle") -> bool:
        return (self.seed == other.seed and self.stream == other.stream
                and self.n_paths == other.n_paths and self.grid.same_as(other.grid))


def block_generator(seed: int, stream: tuple, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1),
                                spawn_key=tuple(int(s) for s in stream) + (int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _check_simulable(model: LevyModel, basis: TeugelsBasis):
    if model.density is not None:
        raise UnsupportedMeasure(
            f"cannot simulate density jumps ({model.density.name}); only atoms are simulated")
    if basis.K_eff < 1:
        raise ValueError("basis has no Teugels martingales")


def simulate(model: LevyModel, basis: TeugelsBasis, grid: TimeGrid, n_paths: int, seed: int,
             stream: tuple = (), threads: int = 1, record_jumps: bool = False) -> PathBundle:
    """Simulate Teugels increments dH^i = sum_j a_ij dY^(j) on ``grid``.

    Per step, jumps at atom beta_j arrive as Poisson(alpha_j dt) counts, so
    the power sums of the step are exact.  Compensators t m_j are
    subtracted analytically; the drift cancels inside Y^(1).
    """
    _check_simulable(model, basis)
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n = grid.n_steps
    K = basis.K_eff
    dt = grid.dt
    masses = model.atom_masses
    locs = model.atom_locations
    powers = np.array([locs ** j for j in range(1, K + 1)]).T if len(locs) else np.zeros((0, K))
    # jump compensators m_j restricted to the atoms, j = 1..K
    comp = masses @ powers if len(locs) else np.zeros(K)
    sd = math.sqrt(model.gaussian_var)
    a_t = basis.a.T

    dH = np.empty((n_paths, n, K))
    dB = np.empty((n_paths, n))
    x0 = np.empty(n_paths)
    n_blocks = -(-n_paths // BLOCK_SIZE)
    counts_by_block = [None] * n_blocks if record_jumps else None

    def run_block(b):
        rng = block_generator(seed, stream, b)
        normals = rng.standard_normal((BLOCK_SIZE, n))
        noise0 = rng.standard_normal(BLOCK_SIZE)
        if len(masses):
            counts = rng.poisson(np.outer(dt, masses), size=(BLOCK_SIZE, n, len(masses)))
            sums = counts @ powers                      # (B, n, K) power sums
        else:
            counts = None
            sums = np.zeros((BLOCK_SIZE, n, K))
        gauss = normals * (sd * np.sqrt(dt))
        dY = sums - dt[None, :, None] * comp[None, None, :]
        dY[:, :, 0] += gauss
        lo, hi = b * BLOCK_SIZE, min((b + 1) * BLOCK_SIZE, n_paths)
        m = hi - lo
        dH[lo:hi] = dY[:m] @ a_t
        dB[lo:hi] = gauss[:m]
        x0[lo:hi] = noise0[:m]
        if record_jumps and counts is not None:
            counts_by_block[b] = counts[:m]

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_block, range(n_blocks)))
    else:
        for b in range(n_blocks):
            run_block(b)

    jump_log = None
    if record_jumps:
        jump_log = _jump_log(counts_by_block, grid, locs, seed, stream, n_paths)
    for arr in (dH, dB, x0):
        arr.setflags(write=False)
    return PathBundle(grid=grid, dH=dH, dB=dB, x0_noise=x0, seed=int(seed),
                      stream=tuple(stream), jump_log=jump_log)


def _jump_log(counts_by_block, grid, locs, seed, stream, n_paths):
    """Per-path arrays of (time, size); times uniform inside their step."""
    log = [np.zeros((0, 2)) for _ in range(n_paths)]
    if not len(locs):
        return log
    for b, counts in enumerate(counts_by_block):
        # separate stream so that recording jumps never changes dH
        rng = block_generator(seed, tuple(stream) + (1,), b)
        for p in range(counts.shape[0]):
            steps, atoms = np.nonzero(counts[p])
            reps = counts[p][steps, atoms]
            steps = np.repeat(steps, reps)
            sizes = np.repeat(locs[atoms], reps)
            u = rng.random(len(steps))
            times = grid.points[steps] + u * grid.dt[steps]
            order = np.argsort(times, kind="stable")
            log[b * BLOCK_SIZE + p] = np.column_stack([times[order], sizes[order]])
    return log


@dataclass(frozen=True)
class BracketReport:
    """Sample covariance of H_T against delta_ij T with standard errors."""

    cov: np.ndarray
    error: np.ndarray
    se: np.ndarray
    z: np.ndarray
    mean_z: np.ndarray
    n_paths: int
    horizon: float

    @property
    def max_abs_z(self) -> float:
        vals = np.concatenate([self.z.ravel(), self.mean_z.ravel()])
        if np.any(np.isnan(vals)):
            return math.nan
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def passed(self, threshold: float = 4.0) -> bool:
        mz = self.max_abs_z
        return not math.isnan(mz) and mz <= threshold


def martingale_diagnostics(bundle: PathBundle) -> BracketReport:
    """Compare Cov(H^i_T, H^j_T) with delta_ij T.

    Standard errors come from the same run: the spread of the centred
    products (H^i - mean)(H^j - mean).  With a single path every z-score
    is NaN.
    """
    HT = bundle.dH.sum(axis=1)
    N, K = HT.shape
    T = bundle.grid.horizon
    if N < 2:
        nan = np.full((K, K), np.nan)
        return BracketReport(nan, nan, nan, nan, np.full(K, np.nan), N, T)
    c = HT - HT.mean(axis=0)
    prods = c[:, :, None] * c[:, None, :]
    cov = prods.sum(axis=0) / (N - 1)
    se = prods.std(axis=0, ddof=1) / math.sqrt(N)
    err = cov - T * np.eye(K)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, err / se, np.where(err == 0, 0.0, np.inf))
        mean_se = HT.std(axis=0, ddof=1) / math.sqrt(N)
        mean_z = np.where(mean_se > 0, HT.mean(axis=0) / mean_se, 0.0)
    return BracketReport(cov, err, se, z, mean_z, N, T)
