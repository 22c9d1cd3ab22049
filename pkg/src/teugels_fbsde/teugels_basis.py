"""Orthonormal polynomials of mu and the Teugels coefficient matrix.

The polynomials q_0, q_1, ... are orthonormal in L^2(mu) with
mu(dx) = x^2 nu(dx) + sigma^2 delta_0(dx).  With p_i(x) = x q_{i-1}(x) the
Teugels martingale H^i is sum_j a_ij Y^(j) where a_ij is the coefficient of
x^j in p_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMeasure, NumericalBreakdown
from .levy_model import LevyModel, MomentTable, density_integral, moments

K_MAX = 10
DEFAULT_RANK_TOL = 1e-12


def evaluate_poly(coeffs, x):
    """Horner evaluation of ``sum_k coeffs[k] x^k``; ``x`` may be an array."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    out = np.full_like(np.asarray(x, dtype=float), coeffs[-1])
    for c in coeffs[-2::-1]:
        out = out * x + c
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TeugelsBasis:
    K_requested: int
    K_eff: int
    q_polys: tuple[np.ndarray, ...]
    a: np.ndarray
    gaussian_var: float

    @property
    def p_polys(self) -> tuple[np.ndarray, ...]:
        return tuple(np.concatenate(([0.0], q)) for q in self.q_polys)

    @property
    def q_at_zero(self) -> np.ndarray:
        return np.array([q[0] for q in self.q_polys])

    def q(self, i, x):
        return evaluate_poly(self.q_polys[i], x)

    def p(self, i, x):
        """p_i(x) = x q_{i-1}(x), 1-based like the Teugels index."""
        return x * evaluate_poly(self.q_polys[i - 1], x)


def _hankel(mu, K):
    idx = np.add.outer(np.arange(K), np.arange(K))
    return np.asarray(mu, dtype=float)[idx]


def build_basis(table: MomentTable, K: int, rank_tol: float = DEFAULT_RANK_TOL) -> TeugelsBasis:
    """Gram-Schmidt on 1, x, ..., x^{K-1} under <p, q> = int p q dmu.

    Inner products are quadratic forms in the Hankel moment matrix.  Each
    candidate is orthogonalised twice (classical Gram-Schmidt with one
    reorthogonalisation pass).  A residual whose squared norm falls below
    ``rank_tol * max(mu_{2k}, mu_0)`` (the squared norm of x^k, floored at
    the total mass) ends the basis and fixes ``K_eff``.
    """
    if not 1 <= K <= K_MAX:
        raise ValueError(f"K must be in 1..{K_MAX}")
    if not 0 < rank_tol < 1:
        raise ValueError("rank_tol must be in (0, 1)")
    if len(table.mu) < 2 * K - 1:
        raise ValueError(f"moment table too short for K={K}: need mu up to order {2 * K - 2}")
    mu0 = table.mu[0]
    if not mu0 > 0:
        raise DegenerateMeasure(f"mu_0 = {mu0} <= 0: measure has no mass")
    H = _hankel(table.mu, K)
    qs = []
    for k in range(K):
        v = np.zeros(K)
        v[k] = 1.0
        for _ in range(2):
            for q in qs:
                v = v - (q @ H @ v) * q
        norm2 = float(v @ H @ v)
        scale = rank_tol * max(H[k, k], mu0)
        if norm2 < scale:
            # tiny negative residuals are roundoff at a rank drop
            if norm2 < -scale:
                raise NumericalBreakdown(
                    f"Hankel matrix indefinite at order {k}: residual norm^2 = {norm2:.3e}"
                )
            break
        qs.append(v / np.sqrt(norm2))
    K_eff = len(qs)
    q_polys = tuple(q[:i + 1].copy() for i, q in enumerate(qs))
    a = np.zeros((K_eff, K_eff))
    for i, q in enumerate(q_polys):
        a[i, :i + 1] = q
    return TeugelsBasis(
        K_requested=K, K_eff=K_eff, q_polys=q_polys, a=a,
        gaussian_var=table.gaussian_var,
    )


def basis_for_model(model: LevyModel, K: int, rank_tol: float = DEFAULT_RANK_TOL) -> TeugelsBasis:
    return build_basis(moments(model, 2 * K + 2), K, rank_tol)


def _integrate_against_nu(model: LevyModel, fn):
    """int fn dnu by exact atom sums plus quadrature for the density part."""
    total = 0.0
    if model.atoms:
        total += float(np.sum(model.atom_masses * fn(model.atom_locations)))
    if model.density is not None:
        total += density_integral(model.density, lambda z: float(fn(np.float64(z))))
    return total


def gram_matrix(basis: TeugelsBasis, model: LevyModel) -> np.ndarray:
    """int q_i q_j dmu evaluated directly on the measure (not via moments)."""
    K = basis.K_eff
    G = np.empty((K, K))
    q0 = basis.q_at_zero
    for i in range(K):
        for j in range(i, K):
            val = model.gaussian_var * q0[i] * q0[j] + _integrate_against_nu(
                model, lambda z: z * z * basis.q(i, z) * basis.q(j, z))
            G[i, j] = G[j, i] = val
    return G


def orthonormality_residual(basis: TeugelsBasis, model: LevyModel) -> float:
    G = gram_matrix(basis, model)
    return float(np.max(np.abs(G - np.eye(basis.K_eff)))) if basis.K_eff else 0.0


def check_lemma_identity(basis: TeugelsBasis, model: LevyModel) -> float:
    """Max over i, j of |int p_i p_j dnu - (delta_ij - s2 q_{i-1}(0) q_{j-1}(0))|.

    ``s2`` is the Gaussian variance rate (the delta_0 weight of mu).
    """
    K = basis.K_eff
    q0 = basis.q_at_zero
    worst = 0.0
    for i in range(1, K + 1):
        for j in range(i, K + 1):
            lhs = _integrate_against_nu(model, lambda z: basis.p(i, z) * basis.p(j, z))
            rhs = float(i == j) - model.gaussian_var * q0[i - 1] * q0[j - 1]
            worst = max(worst, abs(lhs - rhs))
    return worst


def basis_to_dict(basis: TeugelsBasis) -> dict:
    return {
        "K_requested": basis.K_requested,
        "K_eff": basis.K_eff,
        "gaussian_var": basis.gaussian_var,
        "q_polys": [q.tolist() for q in basis.q_polys],
        "a": basis.a.tolist(),
        "q_at_zero": basis.q_at_zero.tolist(),
    }


def basis_from_dict(d: dict) -> TeugelsBasis:
    K_eff = int(d["K_eff"])
    a = np.array(d["a"], dtype=float).reshape(K_eff, K_eff)
    return TeugelsBasis(
        K_requested=int(d["K_requested"]),
        K_eff=K_eff,
        q_polys=tuple(np.array(q, dtype=float) for q in d["q_polys"]),
        a=a,
        gaussian_var=float(d["gaussian_var"]),
    )
