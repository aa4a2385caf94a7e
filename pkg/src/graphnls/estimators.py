"""Estimator-style wrappers around the solver pipeline.

Both classes follow the scikit-learn conventions: constructor arguments are
stored verbatim, ``fit`` takes the graph as its only data argument, and fitted
state lives in attributes ending with an underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bifurcation import CSV_COLUMNS, bifurcation_verdict, sweep
from .cones import separation_delta
from .functional import ProblemParams, compute_thresholds, gn_estimate
from .graph import assemble
from .minmax import build_cap, find_sign_changing, positive_solution
from .spectrum import eigenpairs
from .validation import check_exponent, check_graph, check_indices, check_mass


def _setup(graph, cells, k, p, seed, n_k_samples):
    g = check_graph(graph)
    d = assemble(g, cells)
    spec = eigenpairs(d, min(max(k, 2) + 4, d.n_dofs - 1), seed=seed)
    kest = gn_estimate(d, p, n_samples=n_k_samples, seed=seed)
    return d, spec, kest


class BoundStateSolver(BaseEstimator):
    """Normalized bound state of mass ``mu`` on a metric graph.

    ``k = 1`` asks for the positive solution; ``k >= 2`` for the
    sign-changing solution attached to the ``k``-th eigenvalue.
    ``mu="auto"`` picks half of the smallest admissible mass threshold.

    Fitted attributes: ``disc_``, ``spectrum_``, ``thresholds_``,
    ``solution_``, ``coef_``, ``energy_``, ``pde_lambda_``, ``nu_``.
    """

    def __init__(self, p=7.0, mu="auto", k=2, cells=64, nu=None, n_k_samples=200, seed=0):
        self.p = p
        self.mu = mu
        self.k = k
        self.cells = cells
        self.nu = nu
        self.n_k_samples = n_k_samples
        self.seed = seed

    def fit(self, graph, y=None):
        p = check_exponent(self.p)
        k = int(self.k)
        d, spec, kest = _setup(graph, int(self.cells), k, p, self.seed, int(self.n_k_samples))
        idx = [k] if k >= 2 else [2]
        if k >= 2:
            check_indices(spec, idx)
        if self.mu == "auto":
            probe = compute_thresholds(ProblemParams(p, 1.0), kest, spec, idx)
            mu = 0.5 * probe.mu_j
        else:
            mu = check_mass(self.mu)
        rep = compute_thresholds(ProblemParams(p, mu), kest, spec, idx)
        nu = self.nu
        if nu is None:
            nu = separation_delta(spec, mu, rep.rho_star, idx[0], seed=self.seed).default_nu()
        if k >= 2:
            sol = find_sign_changing(build_cap(spec, k, mu), rep, p, nu, seed=self.seed)
        else:
            sol = positive_solution(spec, p, mu, nu, seed=self.seed)
        self.disc_, self.spectrum_, self.thresholds_ = d, spec, rep
        self.nu_, self.solution_ = nu, sol
        self.coef_ = sol.u.copy()
        self.energy_ = sol.energy
        self.pde_lambda_ = sol.pde_lambda
        return self

    def predict(self, coords):
        """Interpolate the fitted field at ``(edge_index, x)`` pairs."""
        check_is_fitted(self, "coef_")
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.shape[1] != 2:
            raise ValueError("coords must have shape (n, 2): edge index and position")
        out = np.empty(len(coords))
        for i, (e, x) in enumerate(coords):
            e = int(e)
            if not (0 <= e < len(self.disc_.graph.edges)) or e != coords[i, 0]:
                raise ValueError(f"bad edge index {coords[i, 0]!r}")
            xs = self.disc_.edge_coordinates(e)
            if not (0.0 <= x <= xs[-1]):
                raise ValueError(f"position {x} outside edge {e} of length {xs[-1]}")
            out[i] = np.interp(x, xs, self.disc_.edge_values(self.coef_, e))
        return out


class BifurcationBranch(BaseEstimator):
    """Index-``k`` branch continued toward zero mass.

    ``fit`` runs the sweep and the verdict; ``transform`` returns the branch
    table (columns as in :data:`CSV_COLUMNS`).
    """

    def __init__(self, k=2, p=7.0, mu_start="auto", n_points=8, ratio=0.5, tol=0.05, cells=64,
                 n_k_samples=200, seed=0):
        self.k = k
        self.p = p
        self.mu_start = mu_start
        self.n_points = n_points
        self.ratio = ratio
        self.tol = tol
        self.cells = cells
        self.n_k_samples = n_k_samples
        self.seed = seed

    def fit(self, graph, y=None):
        p = check_exponent(self.p)
        k = int(self.k)
        d, spec, kest = _setup(graph, int(self.cells), k, p, self.seed, int(self.n_k_samples))
        check_indices(spec, [k])
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        rep = compute_thresholds(ProblemParams(p, 1.0), kest, spec, [k])
        mu0 = 0.5 * min(rep.mu1, rep.mu_check(k)) if self.mu_start == "auto" else check_mass(self.mu_start)
        grid = mu0 * float(self.ratio) ** np.arange(int(self.n_points))
        self.branch_ = sweep(spec, k, grid, p, seed=self.seed)
        self.target_ = spec.eigenvalue(k)
        self.verdict_ = bifurcation_verdict(self.branch_, self.target_, self.tol)
        self.mu_grid_ = grid
        return self

    def transform(self, X=None):
        check_is_fitted(self, "branch_")
        return np.array([b.row() for b in self.branch_])

    columns = CSV_COLUMNS
