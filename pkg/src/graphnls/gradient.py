"""Constrained H1 gradient on the mass sphere.

With ``S = A + M`` the discrete ``(-d^2/dx^2 + 1)`` and ``N(u)`` the weak load
of ``|u|^{p-2} u``, the gradient is ``u - S^{-1}(N(u) + lambda_u M u)``, where
``lambda_u`` is fixed by M-orthogonality to ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .exceptions import DegeneratePairing
from .graph import Discretization

SPHERE_RTOL = 1e-8


@dataclass(frozen=True)
class GradientResult:
    grad: np.ndarray
    lambda_u: float
    xi: np.ndarray
    h1_norm_grad: float

    @property
    def pde_lambda(self) -> float:
        """``lambda = 1 - lambda_u`` in ``-u'' + lambda u = |u|^{p-2} u``."""
        return 1.0 - self.lambda_u


def resolvent(d: Discretization, u: np.ndarray) -> np.ndarray:
    """Solve ``S xi = M u``."""
    return d.solve_h1(d.M @ u)


def _check_sphere(d: Discretization, u: np.ndarray, mu: float | None) -> float:
    m = d.mass(u)
    if mu is not None and abs(m - mu) > SPHERE_RTOL * mu:
        raise ValueError(f"u is off the mass sphere: mass {m:.12g} vs mu {mu:.12g}")
    return m


def _multiplier(d, u, load, xi, m):
    pairing = float(u @ (d.M @ xi))
    if not pairing > 0.0:
        raise DegeneratePairing(f"<u, xi> = {pairing:.3e} is not positive")
    return (m - float(load @ xi)) / pairing


def lagrange_multiplier(d: Discretization, u: np.ndarray, p: float, mu: float | None = None) -> float:
    """Tangency multiplier ``lambda_u = (mu - <|u|^{p-2}u, xi>) / <u, xi>``.

    Raises
    ------
    DegeneratePairing
        If ``<u, xi>`` is not positive.
    """
    m = _check_sphere(d, u, mu)
    xi = resolvent(d, u)
    return _multiplier(d, u, d.nonlinear_load(u, p), xi, m)


def constrained_gradient(d: Discretization, u: np.ndarray, p: float, mu: float | None = None) -> GradientResult:
    m = _check_sphere(d, u, mu)
    load = d.nonlinear_load(u, p)
    xi = resolvent(d, u)
    lam = _multiplier(d, u, load, xi, m)
    grad = u - d.solve_h1(load) - lam * xi
    nrm = math.sqrt(max(float(grad @ (d.S @ grad)), 0.0))
    return GradientResult(grad=grad, lambda_u=lam, xi=xi, h1_norm_grad=nrm)


def stationary_residual(d: Discretization, u: np.ndarray, p: float, pde_lambda: float) -> float:
    """Dual (S^{-1}) norm of ``A u + lambda M u - N(u)``."""
    r = d.A @ u + pde_lambda * (d.M @ u) - d.nonlinear_load(u, p)
    return math.sqrt(max(float(r @ d.solve_h1(r)), 0.0))


def pde_multiplier(d: Discretization, u: np.ndarray, p: float) -> float:
    """``lambda`` obtained by testing the stationary equation with ``u``: ``(int|u|^p - int|u'|^2)/mu``."""
    return (d.integrate_power(u, p) - d.kinetic(u)) / d.mass(u)


def newton_polish(d: Discretization, u: np.ndarray, p: float, mu: float, lam: float | None = None,
                  max_iter: int = 12, max_move: float = 0.05) -> tuple[np.ndarray, float, float]:
    """Newton iteration on the bordered system ``A u + lam M u = N(u)``, ``u^T M u = mu``.

    Meant for the last digits only: a step moving ``u`` by more than
    ``max_move`` (relative, H1) stops the iteration.  Returns the best
    ``(u, lam, residual)`` seen, the starting point included.
    """
    u = d.normalize(np.asarray(u, dtype=float), mu)
    lam = pde_multiplier(d, u, p) if lam is None else float(lam)
    best = (u, lam, stationary_residual(d, u, p, lam))
    scale = d.h1_norm(u)
    for _ in range(max_iter):
        Mu = d.M @ u
        F = d.A @ u + lam * Mu - d.nonlinear_load(u, p)
        c = 0.5 * (float(u @ Mu) - mu)
        J = d.A + lam * d.M - d.nonlinear_jacobian(u, p)
        col = sparse.csr_matrix(Mu[:, None])
        K = sparse.bmat([[J, col], [col.T, None]], format="csc")
        try:
            step = spsolve(K, np.concatenate((F, [c])))
        except RuntimeError:
            break
        if not np.all(np.isfinite(step)) or d.h1_norm(step[:-1]) > max_move * scale:
            break
        u = d.normalize(u - step[:-1], mu)
        lam = lam - float(step[-1])
        res = stationary_residual(d, u, p, lam)
        if res < best[2]:
            best = (u, lam, res)
        elif res > 2 * best[2]:
            break
        if res <= 1e-15 * max(scale, 1e-300):
            break
    return best
