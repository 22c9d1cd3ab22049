"""Levy triplets, power moments of the Levy measure and integrability checks.

A model is a drift, a Gaussian variance rate and a jump measure made of
point masses (atoms) plus an optional density.  Only the atom part can be
simulated; densities are supported for moment computation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    ExponentialTailViolation,
    NonIntegrableMeasure,
    QuadratureFailure,
)

DEFAULT_SUBDIVISIONS = 60
MOMENT_RTOL = 1e-10
MOMENT_ATOL = 1e-14
DIVERGENCE_GUARD = 1e12


@dataclass(frozen=True)
class Atom:
    mass: float
    location: float


@dataclass(frozen=True)
class Density:
    """Jump density nu(z) dz restricted to a union of intervals.

    ``fn`` must accept a float.  Intervals are ``(lo, hi)`` with ``lo < hi``;
    ``hi`` may be ``inf`` and ``lo`` may be ``-inf``.  Intervals must not
    straddle zero.
    """

    fn: Callable[[float], float]
    support: tuple[tuple[float, float], ...]
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)


def exp_tail(rate=1.0, decay=1.0, lo=0.1, hi=10.0, sides="both") -> Density:
    """``rate * exp(-decay |z|)`` on ``lo <= |z| <= hi``."""
    if not 0.0 <= lo < hi:
        raise ValueError("exp_tail needs 0 <= lo < hi")
    if sides not in ("both", "positive", "negative"):
        raise ValueError(f"unknown sides {sides!r}")
    support = []
    if sides in ("both", "negative"):
        support.append((-hi, -lo))
    if sides in ("both", "positive"):
        support.append((lo, hi))
    return Density(
        fn=lambda z: rate * math.exp(-decay * abs(z)),
        support=tuple(support),
        name="exp_tail",
        params=dict(rate=rate, decay=decay, lo=lo, hi=hi, sides=sides),
    )


def uniform_band(rate=1.0, lo=0.5, hi=1.5) -> Density:
    """Constant intensity ``rate`` on the signed interval ``[lo, hi]``."""
    if not lo < hi or lo < 0.0 < hi:
        raise ValueError("uniform_band needs lo < hi on one side of zero")
    return Density(
        fn=lambda z: rate,
        support=((lo, hi),),
        name="uniform_band",
        params=dict(rate=rate, lo=lo, hi=hi),
    )


BUILTIN_DENSITIES = {"exp_tail": exp_tail, "uniform_band": uniform_band}


@dataclass(frozen=True)
class LevyModel:
    drift: float = 0.0
    gaussian_var: float = 1.0
    atoms: tuple[Atom, ...] = ()
    density: Density | None = None
    exp_moment_alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "atoms", tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        )
        if self.gaussian_var < 0:
            raise ValueError("gaussian_var must be nonnegative")
        if self.exp_moment_alpha <= 0:
            raise ValueError("exp_moment_alpha must be positive")

    @property
    def is_finite_activity(self) -> bool:
        return self.density is None

    @property
    def jump_intensity(self) -> float:
        """Total atom mass (the Poisson rate of the atom part)."""
        return float(sum(a.mass for a in self.atoms))

    @property
    def atom_masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms], dtype=float)

    @property
    def atom_locations(self) -> np.ndarray:
        return np.array([a.location for a in self.atoms], dtype=float)


def brownian(gaussian_var=1.0, drift=0.0) -> LevyModel:
    return LevyModel(drift=drift, gaussian_var=gaussian_var)


def poisson(intensity=1.0, jump=1.0) -> LevyModel:
    return LevyModel(gaussian_var=0.0, atoms=(Atom(intensity, jump),))


def two_atom_gaussian(gaussian_var=1.0) -> LevyModel:
    """nu = delta_1 + delta_{-1} plus a Gaussian part."""
    return LevyModel(gaussian_var=gaussian_var, atoms=(Atom(1.0, 1.0), Atom(1.0, -1.0)))


def density_integral(density: Density, weight: Callable[[float], float],
                     limit=DEFAULT_SUBDIVISIONS, rtol=MOMENT_RTOL, log_weight=False,
                     atol=MOMENT_ATOL) -> float:
    """Integrate ``weight(z) * nu(z)`` over the density support.

    With ``log_weight`` the callable returns log of the weight and the
    product is formed as ``exp(logw + log nu)`` to avoid overflow.
    Raises QuadratureFailure instead of returning a partial value.
    """
    if log_weight:
        def integrand(z):
            dens = density.fn(z)
            if dens <= 0.0:
                return 0.0
            try:
                return math.exp(weight(z) + math.log(dens))
            except OverflowError:
                return math.inf
    else:
        def integrand(z):
            return weight(z) * density.fn(z)
    total = 0.0
    for lo, hi in density.support:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            out = integrate.quad(
                integrand, lo, hi,
                epsabs=atol, epsrel=rtol, limit=limit, full_output=1,
            )
        val, err = out[0], out[1]
        if not np.isfinite(val) or not np.isfinite(err):
            raise QuadratureFailure(f"non-finite integral on [{lo}, {hi}]")
        # quad appends a message only when ier > 0
        if len(out) == 4:
            raise QuadratureFailure(
                f"quadrature on [{lo}, {hi}] failed (guard {limit} subdivisions, "
                f"error estimate {err:.3g}): {out[3].splitlines()[0]}"
            )
        total += val
    return total


@dataclass(frozen=True)
class ValidationReport:
    small_jump_integral: float       # int (1 ^ z^2) nu(dz)
    exp_moment_integral: float       # int_{|z| >= eps} e^{alpha |z|} nu(dz)
    small_jump_ok: bool
    exp_moment_ok: bool
    atoms_ok: bool
    messages: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.small_jump_ok and self.exp_moment_ok and self.atoms_ok


def validate_model(model: LevyModel, tail_eps=1e-3, limit=DEFAULT_SUBDIVISIONS,
                   divergence_guard=DIVERGENCE_GUARD, raise_on_fail=True) -> ValidationReport:
    """Check the two integrability conditions on the Levy measure.

    The exponential-moment integral is taken over ``|z| >= tail_eps`` for
    the density part and over all atoms.  An integral that fails to
    converge or exceeds ``divergence_guard`` counts as divergent.
    """
    msgs = []
    atoms_ok = True
    locs = [a.location for a in model.atoms]
    for a in model.atoms:
        if not a.mass > 0:
            atoms_ok = False
            msgs.append(f"atom at {a.location} has nonpositive mass {a.mass}")
        if a.location == 0:
            atoms_ok = False
            msgs.append("atom located at 0")
    if len(set(locs)) != len(locs):
        atoms_ok = False
        msgs.append("atom locations are not distinct")
    if not atoms_ok:
        if raise_on_fail:
            raise NonIntegrableMeasure("; ".join(msgs))
        return ValidationReport(math.nan, math.nan, False, False, False, tuple(msgs))

    alpha = model.exp_moment_alpha
    small = sum(a.mass * min(1.0, a.location ** 2) for a in model.atoms)
    tail = sum(a.mass * math.exp(alpha * abs(a.location)) for a in model.atoms)
    small_ok = tail_ok = True
    if model.density is not None:
        try:
            small += density_integral(model.density, lambda z: min(1.0, z * z), limit=limit)
        except QuadratureFailure as exc:
            small_ok = False
            small = math.inf
            msgs.append(f"small-jump integral: {exc}")
        clipped = Density(
            fn=model.density.fn,
            support=tuple(
                iv for iv in (_clip_away_from_zero(lo, hi, tail_eps)
                              for lo, hi in model.density.support) if iv is not None
            ),
        )
        try:
            tail += density_integral(clipped, _exp_weight(alpha), limit=limit, log_weight=True)
        except QuadratureFailure as exc:
            tail_ok = False
            tail = math.inf
            msgs.append(f"exponential moment at alpha={alpha}: {exc}")
    for label, val in (("small-jump integral", small), ("exponential moment", tail)):
        if val > divergence_guard and np.isfinite(val):
            msgs.append(f"{label} {val:.6g} exceeds divergence guard {divergence_guard:.3g}")
    if small > divergence_guard:
        small_ok = False
    if tail > divergence_guard:
        tail_ok = False
    if raise_on_fail and not small_ok:
        raise NonIntegrableMeasure("; ".join(msgs))
    if raise_on_fail and not tail_ok:
        raise ExponentialTailViolation("; ".join(msgs))
    return ValidationReport(small, tail, small_ok, tail_ok, True, tuple(msgs))


def _exp_weight(alpha):
    return lambda z: alpha * abs(z)


def _clip_away_from_zero(lo, hi, eps):
    if lo >= 0:
        lo = max(lo, eps)
    if hi <= 0:
        hi = min(hi, -eps)
    return (lo, hi) if lo < hi else None


@dataclass(frozen=True)
class MomentTable:
    """Power moments of nu and moments of mu(dx) = x^2 nu(dx) + sigma^2 delta_0.

    ``m[i]`` is m_i for i >= 1 (``m[1]`` is E[L_1], drift included) and
    ``m[0]`` is the jump intensity nu(R), ``inf`` when it is not finite.
    ``mu[k]`` is the k-th moment of mu.
    """

    m: np.ndarray
    mu: np.ndarray
    gaussian_var: float

    @property
    def order(self) -> int:
        return len(self.m) - 1


def moments(model: LevyModel, order: int, limit=DEFAULT_SUBDIVISIONS) -> MomentTable:
    """Compute m_0..m_order of nu and mu_0..mu_{order-2} of mu."""
    if order < 2:
        raise ValueError("order must be at least 2")
    masses = model.atom_masses
    locs = model.atom_locations
    m = np.zeros(order + 1)
    for i in range(order + 1):
        # Exact atom sums; no quadrature involved.
        m[i] = float(np.sum(masses * locs ** i)) if len(masses) else 0.0
    if model.density is not None:
        for i in range(2, order + 1):
            m[i] += density_integral(model.density, lambda z, i=i: z ** i, limit=limit)
        m[1] += density_integral(model.density, lambda z: z, limit=limit)
        try:
            m[0] += density_integral(model.density, lambda z: 1.0, limit=limit)
        except QuadratureFailure:
            m[0] = math.inf
    m[1] += model.drift
    mu = np.empty(order - 1)
    mu[0] = m[2] + model.gaussian_var
    mu[1:] = m[3:]
    return MomentTable(m=m, mu=mu, gaussian_var=model.gaussian_var)


def model_from_dict(section: dict) -> LevyModel:
    """Build a model from a config mapping (the ``model`` section)."""
    atoms = tuple(Atom(float(a["mass"]), float(a["location"])) for a in section.get("atoms", []) or [])
    density = None
    dens = section.get("density")
    if dens:
        name = dens.get("name")
        if name not in BUILTIN_DENSITIES:
            raise KeyError(f"unknown density {name!r}")
        params = {k: v for k, v in dens.items() if k != "name"}
        density = BUILTIN_DENSITIES[name](**params)
    return LevyModel(
        drift=float(section.get("drift", 0.0)),
        gaussian_var=float(section.get("gaussian_var", 1.0)),
        atoms=atoms,
        density=density,
        exp_moment_alpha=float(section.get("exp_moment_alpha", 1.0)),
    )


def model_to_dict(model: LevyModel) -> dict:
    out = {
        "drift": model.drift,
        "gaussian_var": model.gaussian_var,
        "atoms": [{"mass": a.mass, "location": a.location} for a in model.atoms],
        "exp_moment_alpha": model.exp_moment_alpha,
    }
    if model.density is not None:
        out["density"] = {"name": model.density.name, **model.density.params}
    return out


def atoms_from_pairs(pairs: Sequence[tuple[float, float]]) -> tuple[Atom, ...]:
    return tuple(Atom(float(m), float(b)) for m, b in pairs)
