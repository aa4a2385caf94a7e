"""Continuation of sign-changing branches as the mass tends to zero."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import BranchLost
from .flow import FlowParams, Termination
from .functional import ThresholdReport, energy
from .gradient import constrained_gradient, newton_polish, stationary_residual
from .minmax import SIGN_CERT, minimax_descent
from .spectrum import SpectralData

CSV_COLUMNS = ("mu", "pde_lambda", "energy_ratio", "kinetic_ratio", "p_norm_ratio", "h1_norm")


@dataclass
class BranchPoint:
    mu: float
    u: np.ndarray = field(repr=False)
    pde_lambda: float
    lambda_u: float
    energy_ratio: float
    kinetic_ratio: float
    p_norm_ratio: float
    h1_norm: float
    residual: float
    sign_changes: int
    sign_certified: bool

    def row(self) -> list:
        return [self.mu, self.pde_lambda, self.energy_ratio, self.kinetic_ratio,
                self.p_norm_ratio, self.h1_norm]


def branch_point(d, u, p, mu) -> BranchPoint:
    T = d.kinetic(u)
    P = d.integrate_power(u, p)
    lam = (P - T) / mu
    gr = constrained_gradient(d, u, p)
    kappa = math.sqrt(mu / d.graph.total_length)
    return BranchPoint(
        mu=mu, u=u, pde_lambda=lam, lambda_u=gr.lambda_u, energy_ratio=energy(d, u, p) / mu,
        kinetic_ratio=T / mu, p_norm_ratio=P / mu, h1_norm=d.h1_norm(u),
        residual=stationary_residual(d, u, p, lam),
        sign_changes=d.sign_changes_along_edges(u, tol=SIGN_CERT * kappa),
        sign_certified=bool(u.min() < -SIGN_CERT * kappa and u.max() > SIGN_CERT * kappa),
    )


def default_grid(report: ThresholdReport, k: int, n_points: int = 8, ratio: float = 0.5) -> np.ndarray:
    """``mu_0 ratio^i`` with ``mu_0 = 0.5 min(mu1, mu_check_k)``."""
    mu0 = 0.5 * min(report.mu1, report.mu_check(k))
    return mu0 * ratio ** np.arange(n_points)


def sweep(spec: SpectralData, k: int, mu_grid, p: float, flow_params: FlowParams = FlowParams(),
          seed: int = 0, residual_tol: float = 1e-7, coarse_tol: float = 1e-6) -> list[BranchPoint]:
    """Warm-started continuation of the index-``k`` branch along a decreasing mass grid.

    Raises
    ------
    BranchLost
        A point fails to converge, loses its sign change or changes its nodal
        pattern.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    if mu_grid.size < 4:
        raise ValueError("need at least 4 grid points")
    if np.any(np.diff(mu_grid) >= 0) or np.any(mu_grid <= 0):
        raise ValueError("mu_grid must be positive and strictly decreasing")
    d = spec.disc
    L = spec.basis(k - 1)
    rng = np.random.default_rng(seed)
    z = spec.basis(min(spec.k, k + 3)) @ rng.standard_normal(min(spec.k, k + 3))
    v = spec.eigenfunction(k) + 1e-3 * z / math.sqrt(d.mass(z))
    prev_mu = None
    branch: list[BranchPoint] = []
    for mu in mu_grid:
        v0 = d.normalize(v, mu) if prev_mu is None else v * math.sqrt(mu / prev_mu)
        res = minimax_descent(d, L, v0, p, mu, flow_params, tol=coarse_tol)
        u, _, _ = newton_polish(d, res.u, p, mu)
        pt = branch_point(d, u, p, mu)
        if res.reason not in (Termination.CONVERGED,) and pt.residual > residual_tol:
            raise BranchLost(f"no convergence at mu={mu:.6g} ({res.reason.value})", mu=mu)
        if pt.residual > residual_tol:
            raise BranchLost(f"residual {pt.residual:.3e} too large at mu={mu:.6g}", mu=mu)
        if not pt.sign_certified:
            raise BranchLost(f"continuation fell into a cone at mu={mu:.6g}", mu=mu)
        if branch and pt.sign_changes != branch[0].sign_changes:
            raise BranchLost(f"nodal pattern changed at mu={mu:.6g}", mu=mu)
        branch.append(pt)
        v, prev_mu = u, mu
    return branch


@dataclass
class Verdict:
    passed: bool
    target: float
    tol: float
    lambda_errors: list
    h1_norms: list
    checks: dict

    def to_dict(self) -> dict:
        return {"verdict": "PASS" if self.passed else "FAIL", "target": self.target, "tol": self.tol,
                "lambda_errors": self.lambda_errors, "h1_norms": self.h1_norms, "checks": self.checks}


def bifurcation_verdict(branch: list[BranchPoint], target: float, tol: float = 0.05) -> Verdict:
    """Judge the tail of a branch against the limit ``-lambda -> target``."""
    if len(branch) < 4:
        raise ValueError("need at least 4 branch points")
    errs = [abs(-b.pde_lambda - target) for b in branch]
    h1 = [b.h1_norm for b in branch]
    last = branch[-1]
    tail = errs[-3:]
    # errors already at round-off level cannot keep shrinking
    floor = 1e-12 * max(1.0, target)
    drops = [h1[i + 1] < h1[i] for i in range(len(h1) - 1)]
    checks = {
        "lambda_tail_decreasing": all(b < a or b <= floor for a, b in zip(tail, tail[1:])),
        "lambda_final_within_tol": errs[-1] <= tol * target,
        "energy_ratio_within_tol": abs(last.energy_ratio - 0.5 * target) <= tol * target,
        "kinetic_ratio_within_tol": abs(last.kinetic_ratio - target) <= tol * target,
        "p_norm_ratio_decay_10x": last.p_norm_ratio < branch[0].p_norm_ratio / 10,
        "h1_norm_decreasing": drops.count(False) <= 1,
        "h1_norm_final_bound": last.h1_norm ** 2 <= 2 * (target + 1) * last.mu,
        "sign_changing_throughout": all(b.sign_certified for b in branch),
    }
    return Verdict(all(checks.values()), target, tol, errs, h1, checks)


def branch_csv(branch: list[BranchPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for b in branch:
        w.writerow([repr(float(x)) for x in b.row()])
    return buf.getvalue()
