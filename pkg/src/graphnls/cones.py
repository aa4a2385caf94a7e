"""Positivity cones ``+-P``, their nu-neighbourhoods and the sets ``D*(nu)``, ``S*(nu)``.

Distances to the cones are measured by the H1 (``S``-norm) size of the
offending nodal part, an upper bound for the true metric distance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import InadmissibleIndex, SamplingBudgetExceeded
from .graph import Discretization
from .spectrum import SpectralData, spectral_gap_indices


class ConeClass(str, enum.Enum):
    IN_P_NU = "IN_P_NU"
    IN_MINUS_P_NU = "IN_MINUS_P_NU"
    IN_S_STAR = "IN_S_STAR"


def split_parts(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal clamp: ``u = u_plus - u_minus`` with both parts nonnegative."""
    return np.maximum(u, 0.0), np.maximum(-u, 0.0)


def cone_distances(d: Discretization, u: np.ndarray) -> tuple[float, float]:
    """Surrogate distances ``(dist to P, dist to -P) = (|u-|_H1, |u+|_H1)``."""
    up, um = split_parts(u)
    return d.h1_norm(um), d.h1_norm(up)


@dataclass(frozen=True)
class ConeReport:
    dist_plus: float
    dist_minus: float
    nu: float
    classification: ConeClass

    @property
    def in_d_star(self) -> bool:
        return self.classification is not ConeClass.IN_S_STAR

    def to_dict(self) -> dict:
        return {
            "dist_plus": self.dist_plus,
            "dist_minus": self.dist_minus,
            "nu": self.nu,
            "classification": self.classification.value,
        }


def cone_classify(d: Discretization, u: np.ndarray, nu: float) -> ConeReport:
    if not nu > 0:
        raise ValueError("nu must be positive")
    dp, dm = cone_distances(d, u)
    if dp <= nu and dp <= dm:
        cls = ConeClass.IN_P_NU
    elif dm <= nu:
        cls = ConeClass.IN_MINUS_P_NU
    else:
        cls = ConeClass.IN_S_STAR
    return ConeReport(dp, dm, nu, cls)


@dataclass(frozen=True)
class SeparationEstimate:
    """Smallest cone-distance surrogate found on ``S_{k-1}^perp`` within the kinetic ball."""

    delta: float
    sample: np.ndarray
    k: int
    n_samples: int
    rejected: int
    seed: int

    def default_nu(self, nu_star: float = math.inf) -> float:
        return min(nu_star, 0.5 * self.delta)


def separation_delta(
    spec: SpectralData,
    mu: float,
    rho_star: float,
    k: int = 2,
    n_modes: int = 4,
    n_samples: int = 400,
    n_refine: int = 8,
    seed: int = 0,
    max_rejection_rate: float = 0.95,
) -> SeparationEstimate:
    """Sampled minimum of ``min(|u+|_H1, |u-|_H1)`` over ``u`` orthogonal to ``phi_1..phi_{k-1}``.

    Candidates are mass-``mu`` combinations of ``phi_k .. phi_{k+n_modes-1}``
    (and their negatives) with kinetic energy below ``rho_star``.  The best
    ``n_refine`` candidates are polished by Nelder-Mead on the coefficient
    sphere.

    Raises
    ------
    InadmissibleIndex
        ``k`` is not a gap index.
    SamplingBudgetExceeded
        Too many candidates fall outside the kinetic ball.
    """
    if k not in spectral_gap_indices(spec):
        raise InadmissibleIndex(f"index {k} is not a spectral gap index")
    d = spec.disc
    top = min(spec.k, k + n_modes - 1)
    basis = spec.vectors[:, k - 1:top]
    lam = spec.values[k - 1:top]
    m = basis.shape[1]

    def field(c):
        c = np.asarray(c, dtype=float)
        return math.sqrt(mu) * (basis @ c) / np.linalg.norm(c)

    def inside(c):
        c = np.asarray(c, dtype=float)
        return mu * float(lam @ c**2) / float(c @ c) < rho_star

    def objective(c):
        if not np.any(c) or not inside(c):
            return math.inf
        return min(cone_distances(d, field(c)))

    rng = np.random.default_rng(seed)
    pool = [np.eye(m)[0], -np.eye(m)[0]]
    rejected = 0
    while len(pool) < n_samples:
        c = rng.standard_normal(m) / np.sqrt(1.0 + np.arange(m))
        if inside(c):
            pool.extend([c, -c])
        else:
            rejected += 1
            if rejected > max_rejection_rate * (rejected + len(pool)) and rejected > 50:
                raise SamplingBudgetExceeded(
                    f"{rejected} candidates left the kinetic ball (rho* = {rho_star:.3e})"
                )
    values = np.array([objective(c) for c in pool])
    if not np.isfinite(values).any():
        raise SamplingBudgetExceeded("no admissible candidate inside the kinetic ball")
    order = np.argsort(values, kind="stable")
    best_val, best_c = float(values[order[0]]), pool[order[0]]
    if m > 1:
        for idx in order[:n_refine]:
            res = optimize.minimize(objective, pool[idx], method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400 * m})
            if res.fun < best_val:
                best_val, best_c = float(res.fun), res.x
    return SeparationEstimate(
        delta=best_val, sample=field(best_c), k=k, n_samples=len(pool),
        rejected=rejected, seed=seed,
    )


def g_cone_check(d: Discretization, g_of_u: np.ndarray, side: int, nu: float) -> bool:
    """Is ``G(u)`` in ``(side * P)_{nu/2}``?  ``side`` is +1 or -1."""
    dp, dm = cone_distances(d, g_of_u)
    return (dp if side > 0 else dm) <= 0.5 * nu
