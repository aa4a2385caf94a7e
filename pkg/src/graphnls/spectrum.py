"""Kirchhoff-Laplacian eigenpairs: ``A phi = lambda M phi``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .exceptions import ConvergenceFailure
from .graph import Discretization

DENSE_LIMIT = 800
GAP_RTOL = 1e-6


@dataclass(frozen=True)
class SpectralData:
    """First ``k`` eigenpairs, ascending, M-orthonormal.

    ``vectors[:, i]`` is the coefficient vector of the (i+1)-th eigenfunction.
    Indices in the public API are 1-based to match the usual labelling
    ``lambda_1 = 0 < lambda_2 <= ...``.
    """

    values: np.ndarray
    vectors: np.ndarray
    disc: Discretization = field(repr=False)
    seed: int = 0
    method: str = "dense"

    @property
    def k(self) -> int:
        return len(self.values)

    def eigenvalue(self, i: int) -> float:
        return float(self.values[i - 1])

    def eigenfunction(self, i: int) -> np.ndarray:
        return self.vectors[:, i - 1]

    def basis(self, upto: int) -> np.ndarray:
        """Columns ``phi_1 .. phi_upto``."""
        return self.vectors[:, :upto]

    def metadata(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.values],
            "seed": self.seed,
            "method": self.method,
            "basis_note": "eigenbasis of multiple eigenvalues fixed by sign convention and seed",
        }


def _sign_fix(vectors: np.ndarray, tol: float) -> np.ndarray:
    out = vectors.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        if i == 0:
            if col.sum() < 0:
                out[:, i] = -col
            continue
        big = np.flatnonzero(np.abs(col) > tol)
        if big.size and col[big[0]] < 0:
            out[:, i] = -col
    return out


def _m_orthonormalize(vectors: np.ndarray, M) -> np.ndarray:
    # two passes of modified Gram-Schmidt in the M inner product
    V = vectors.copy()
    for _ in range(2):
        for i in range(V.shape[1]):
            for j in range(i):
                V[:, i] -= (V[:, j] @ (M @ V[:, i])) * V[:, j]
            V[:, i] /= math.sqrt(V[:, i] @ (M @ V[:, i]))
    return V


def eigenpairs(d: Discretization, k: int, tol: float = 1e-12, seed: int = 0) -> SpectralData:
    """Lowest ``k`` generalized eigenpairs of the discrete Kirchhoff Laplacian.

    Small problems use a dense symmetric-definite solver; larger ones use
    ARPACK in shift-invert mode on ``S = A + M`` (shift -1), started from a
    seeded vector.  Either way the result is re-orthonormalized in ``M`` and
    sign-fixed: ``phi_1 > 0`` and every other eigenfunction is positive at the
    first DOF where its magnitude exceeds ``tol``.

    Raises
    ------
    ConvergenceFailure
        If ARPACK does not converge.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= d.n_dofs:
        raise ValueError(f"k={k} must be smaller than the DOF count {d.n_dofs}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    if d.n_dofs <= DENSE_LIMIT:
        vals, vecs = scipy.linalg.eigh(
            d.A.toarray(), d.M.toarray(), subset_by_index=[0, k - 1]
        )
        method = "dense"
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(d.n_dofs)
        try:
            vals, vecs = eigsh(
                d.A.tocsc(), k=k, M=d.M.tocsc(), sigma=-1.0, which="LM", v0=v0,
                tol=min(tol, 1e-10), maxiter=max(1000, 20 * d.n_dofs),
            )
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(
                f"ARPACK converged {len(exc.eigenvalues)} of {k} eigenpairs"
            ) from exc
        method = "shift-invert-lanczos"

    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = _m_orthonormalize(vecs, d.M)
    # Rayleigh quotients of the orthonormalized vectors are the reported values
    vals = np.array([vecs[:, i] @ (d.A @ vecs[:, i]) for i in range(k)])
    vals[0] = max(vals[0], 0.0)
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    scale = np.max(np.abs(vecs), axis=0)
    vecs = _sign_fix(vecs, tol * float(np.max(scale)))
    return SpectralData(values=vals, vectors=vecs, disc=d, seed=seed, method=method)


def spectral_gap_indices(s: SpectralData, rtol: float = GAP_RTOL) -> list[int]:
    """1-based indices ``k >= 2`` with ``lambda_{k-1} < lambda_k`` (strict gap)."""
    if s.k < 2:
        raise ValueError("need at least two eigenvalues")
    lam = s.values
    return [
        i + 1
        for i in range(1, s.k)
        if lam[i] - lam[i - 1] > rtol * (1.0 + lam[i])
    ]
