"""Built-in coefficient families selectable by name from a run config.

Every family is a special case of the affine-plus-saturation form

    f     = a1 x + b1 y + <c1, z> + f0 + sat_f tanh(x)
    sigma = a2 x + b2 y + s0                      (vectors over channels)
    g     = a3 x + b3 y + <c3, z> + g0 + sat_g tanh(x)
    phi   = P x + alpha + sat_phi tanh(x)

Vector parameters accept a scalar (acts on channel 1 only) or a list.
Lipschitz constants are derived from the parameters, never declared by hand.
"""

from __future__ import annotations

import math

import numpy as np

from .fbsde_problem import FbsdeProblem, X0Law

SCALARS = ("a1", "b1", "f0", "sat_f", "a3", "b3", "g0", "sat_g", "P", "alpha", "sat_phi")
VECTORS = ("c1", "a2", "b2", "s0", "c3")


def _channel_vector(value, K, name):
    if np.ndim(value) == 0:
        out = np.zeros(K)
        out[0] = float(value)
        return out
    vals = np.asarray(value, dtype=float)
    if len(vals) > K:
        if np.any(vals[K:] != 0):
            raise ValueError(f"{name} has {len(vals)} channels but the basis has K_eff={K}")
        vals = vals[:K]
    out = np.zeros(K)
    out[:len(vals)] = vals
    return out


def affine_problem(K: int, T: float, x0: X0Law | None = None, name="affine_saturation",
                   **params) -> FbsdeProblem:
    unknown = set(params) - set(SCALARS) - set(VECTORS)
    if unknown:
        raise ValueError(f"unknown coefficient parameters: {sorted(unknown)}")
    s = {k: float(params.get(k, 0.0)) for k in SCALARS}
    v = {k: _channel_vector(params.get(k, 0.0), K, k) for k in VECTORS}
    a1, b1, f0, sat_f = s["a1"], s["b1"], s["f0"], s["sat_f"]
    a3, b3, g0, sat_g = s["a3"], s["b3"], s["g0"], s["sat_g"]
    P, alpha, sat_phi = s["P"], s["alpha"], s["sat_phi"]
    c1, a2, b2, s0, c3 = v["c1"], v["a2"], v["b2"], v["s0"], v["c3"]

    def f(t, x, y, z):
        out = a1 * x + b1 * y + z @ c1 + f0
        return out + sat_f * np.tanh(x) if sat_f else out

    def sigma(t, x, y):
        return np.outer(x, a2) + np.outer(y, b2) + s0

    def g(t, x, y, z):
        out = a3 * x + b3 * y + z @ c3 + g0
        return out + sat_g * np.tanh(x) if sat_g else out

    def phi(x):
        out = P * x + alpha
        return out + sat_phi * np.tanh(x) if sat_phi else out

    lam = max(
        abs(a1) + abs(sat_f), abs(b1), float(np.linalg.norm(c1)),
        math.hypot(float(np.linalg.norm(a2)), float(np.linalg.norm(b2))),
        abs(a3) + abs(sat_g), abs(b3), float(np.linalg.norm(c3)),
    )
    lam0 = abs(P) + abs(sat_phi)
    resolved = {**s, **{k: val.tolist() for k, val in v.items()}}
    return FbsdeProblem(f=f, sigma=sigma, g=g, phi=phi, x0=x0 or X0Law(), lam=lam, lam0=lam0,
                        T=float(T), K=K, name=name, params=resolved)


def zero(K, T, x0=None):
    return affine_problem(K, T, x0 or X0Law(), name="zero")


def oracle(K, T, x0=None, sigma=1.0, c=0.0, shift=0.0):
    """f = 0, sigma^1 = const, g = c, phi(x) = x + shift; Y_t = X_t + c (T - t) + shift."""
    return affine_problem(K, T, x0, name="oracle", s0=sigma, g0=c, P=1.0, alpha=shift)


def coupled_linear(K, T, x0=None, lam=0.2, lam0=1.0, s0=1.0):
    """Every coupling coefficient at strength ``lam``; declared Lipschitz constant equals ``lam``."""
    r = lam / math.sqrt(2.0)
    return affine_problem(K, T, x0 or X0Law(1.0), name="coupled_linear",
                          a1=lam, b1=lam, c1=lam, a2=r, b2=r, s0=s0,
                          a3=lam, b3=lam, c3=lam, P=lam0)


def coupled_h2(K, T, x0=None, lam=0.2, lam0=1.0, s0=1.0, g0=0.0, alpha=0.0):
    """Coupled through y and z but with b1 = -a2 c1 and b2 = 0, so the structure condition holds."""
    return affine_problem(K, T, x0 or X0Law(1.0), name="coupled_h2",
                          a1=lam, b1=-lam * lam, c1=lam, a2=lam, s0=s0,
                          a3=lam, b3=lam, c3=lam, g0=g0, P=lam0, alpha=alpha)


def linear_prop(K, T, x0=None, a1=0.0, b1=0.0, c1=0.0, a2=0.0, b2=0.0,
                a3=0.0, b3=0.0, c3=0.0, P=0.0, alpha=0.0, beta=0.0):
    """Homogeneous linear FBSDE from X0 = 0 with terminal P X_T + alpha and driver source beta."""
    return affine_problem(K, T, X0Law(0.0), name="linear_prop",
                          a1=a1, b1=b1, c1=c1, a2=a2, b2=b2,
                          a3=a3, b3=b3, c3=c3, g0=beta, P=P, alpha=alpha)


def linear(K, T, x0=None, **params):
    return affine_problem(K, T, x0, name="linear",
                          **{k: v for k, v in params.items() if not k.startswith("sat_")})


FAMILIES = {
    "zero": zero,
    "oracle": oracle,
    "linear": linear,
    "affine_saturation": affine_problem,
    "coupled_linear": coupled_linear,
    "coupled_h2": coupled_h2,
    "linear_prop": linear_prop,
}


def make_problem(family: str, K: int, T: float, x0: X0Law | None = None, **params) -> FbsdeProblem:
    if family not in FAMILIES:
        raise KeyError(f"unknown problem family {family!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[family](K, T, x0, **params)
