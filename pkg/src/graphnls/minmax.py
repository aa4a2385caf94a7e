"""Linked caps ``Q_k`` and the search for sign-changing critical points.

A sign-changing solution of index ``k`` is a saddle of Morse index ``k-1`` on
the mass sphere, so steepest descent alone slides off it.  The search below
keeps the iterate on top of a ``k``-dimensional cap spanned by
``phi_1 .. phi_{k-1}`` and the current direction (local peak selection) and
descends only in the remaining directions.  A few Newton steps on the
bordered stationary system then clean up the last digits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .cones import ConeClass, ConeReport, cone_classify
from .exceptions import (
    DuplicateSolution,
    InadmissibleIndex,
    NoSignChangingFound,
    OrderingViolation,
)
from .flow import FlowParams, Termination, descend, step_project
from .functional import ThresholdReport, c_lower_bar, energy
from .gradient import constrained_gradient, newton_polish, stationary_residual
from .graph import Discretization
from .spectrum import SpectralData, spectral_gap_indices

SIGN_CERT = 1e-6


# -- caps ---------------------------------------------------------------------


def sphere_grid(dim: int, density: int) -> np.ndarray:
    """Deterministic quasi-uniform points on the unit sphere ``S^dim`` in ``R^{dim+1}``."""
    if dim == 0:
        return np.array([[1.0], [-1.0]])
    pts = []
    n_polar = max(density, 2)
    for phi in np.linspace(0.0, math.pi, n_polar + 1):
        ring = max(1, int(round(density * math.sin(phi)))) if dim > 1 else None
        if abs(math.sin(phi)) < 1e-12:
            pts.append(np.concatenate(([math.cos(phi)], np.zeros(dim))))
            continue
        sub = sphere_grid(dim - 1, ring) if dim > 1 else np.array([[1.0], [-1.0]])
        for q in sub:
            pts.append(np.concatenate(([math.cos(phi)], math.sin(phi) * q)))
    pts = np.array(pts)
    _, idx = np.unique(np.round(pts, 12), axis=0, return_index=True)
    return pts[np.sort(idx)]


@dataclass(frozen=True)
class LinkedCap:
    """Samples of ``Q_k = {sqrt(mu) sum t_i phi_i : |t| = 1, t_k >= 0}``."""

    k: int
    mu: float
    spec: SpectralData = field(repr=False)
    params: np.ndarray = field(repr=False)
    grid_density: int = 8

    @property
    def boundary(self) -> np.ndarray:
        """Mask of samples with ``t_k = 0``; these lie on ``S_{k-1}``."""
        return np.abs(self.params[:, -1]) < 1e-12

    def field(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return math.sqrt(self.mu) * (self.spec.basis(self.k) @ t)

    def fields(self) -> np.ndarray:
        """All sample fields as columns."""
        return math.sqrt(self.mu) * (self.spec.basis(self.k) @ self.params.T)


def build_cap(spec: SpectralData, k: int, mu: float, grid_density: int = 8) -> LinkedCap:
    """Quasi-uniform grid on the upper hemisphere ``t_k >= 0`` of ``S^{k-1}``.

    Raises
    ------
    InadmissibleIndex
        If ``lambda_{k-1} = lambda_k`` within the gap tolerance.
    """
    if k not in spectral_gap_indices(spec):
        raise InadmissibleIndex(f"index {k} is not a spectral gap index")
    if grid_density < 8:
        raise ValueError("grid_density must be >= 8")
    # t = (cos(a) w, sin(a)) with w on S^{k-2}, a in [0, pi/2]
    base = sphere_grid(k - 2, grid_density)
    pts = []
    for a in np.linspace(0.0, 0.5 * math.pi, grid_density + 1):
        if abs(math.cos(a)) < 1e-12:
            pts.append(np.concatenate((np.zeros(k - 1), [1.0])))
            continue
        for w in base:
            pts.append(np.concatenate((math.cos(a) * w, [math.sin(a)])))
    pts = np.array(pts)
    pts[np.abs(pts) < 1e-15] = 0.0
    return LinkedCap(k=k, mu=mu, spec=spec, params=pts, grid_density=grid_density)


@dataclass(frozen=True)
class LevelReport:
    k: int
    c_lower_bar: float
    c_underbar: float
    sup_Q: float
    m2: float
    in_regime: bool
    separation_ok: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def level_estimates(cap: LinkedCap, thresholds: ThresholdReport, p: float) -> LevelReport:
    """Energies on the cap and its boundary against the analytic lower bound."""
    d = cap.spec.disc
    if abs(thresholds.mu - cap.mu) > 1e-12 * cap.mu:
        raise ValueError("thresholds were computed for a different mass")
    F = cap.fields()
    E = np.array([energy(d, F[:, i], p) for i in range(F.shape[1])])
    lam_k = cap.spec.eigenvalue(cap.k)
    clb = c_lower_bar(lam_k, cap.mu, p, thresholds.K, thresholds.ell)
    cub = float(E[cap.boundary].max())
    sup_q = float(E.max())
    in_regime = not thresholds.regime_violations(cap.mu)
    ok = in_regime and clb > cub and sup_q < thresholds.M2
    return LevelReport(cap.k, clb, cub, sup_q, thresholds.M2, in_regime, ok)


def link_sanity_check(cap: LinkedCap, n_deformations: int = 20, seed: int = 0,
                      amplitude: float = 0.5) -> float:
    """Fraction of endpoint-fixing random deformations of ``Q_2`` that cross ``S_1^perp``.

    Each deformation adds ``sin(angle)`` times a random smooth field to the arc
    and renormalizes; crossing is detected by a sign change of the
    ``phi_1``-component between consecutive samples.
    """
    if cap.k != 2:
        raise ValueError("the sampled link check is implemented for k = 2")
    d = cap.spec.disc
    phi1 = cap.spec.eigenfunction(1)
    n_modes = min(cap.spec.k, 8)
    theta = np.linspace(0.0, math.pi, 4 * cap.grid_density + 1)
    hits = 0
    for j in range(n_deformations):
        rng = np.random.default_rng([seed, j])
        noise = cap.spec.basis(n_modes) @ rng.standard_normal(n_modes)
        noise *= amplitude * math.sqrt(cap.mu / d.mass(noise))
        comps = []
        for th in theta:
            u = cap.field([math.cos(th), math.sin(th)]) + math.sin(th) * noise
            u = d.normalize(u, cap.mu)
            comps.append(float(u @ (d.M @ phi1)))
        comps = np.array(comps)
        if np.any(comps[:-1] * comps[1:] <= 0):
            hits += 1
    return hits / n_deformations


# -- solutions ---------------------------------------------------------------


@dataclass
class SolutionRecord:
    kind: str
    k: int
    p: float
    mu: float
    u: np.ndarray
    energy: float
    pde_lambda: float
    lambda_u: float
    residual: float
    grad_norm: float
    cone: ConeReport
    sign_changes: int
    nodal_min: float
    nodal_max: float
    flux_max: float
    is_constant: bool
    graph_hash: str
    level_bracket: tuple = ()
    start: int = -1
    iterations: int = 0
    sign_certified: bool = False
    trajectory: object = field(default=None, repr=False)

    def mirror(self) -> "SolutionRecord":
        """The solution ``-u`` (same energy, since the functional is even)."""
        out = SolutionRecord(**self.__dict__)
        out.u = -self.u
        out.nodal_min, out.nodal_max = -self.nodal_max, -self.nodal_min
        out.cone = ConeReport(self.cone.dist_minus, self.cone.dist_plus, self.cone.nu, {
            ConeClass.IN_P_NU: ConeClass.IN_MINUS_P_NU,
            ConeClass.IN_MINUS_P_NU: ConeClass.IN_P_NU,
        }.get(self.cone.classification, self.cone.classification))
        return out

    def to_dict(self, coefficients: bool = True) -> dict:
        out = {
            "kind": self.kind, "k": self.k, "p": self.p, "mu": self.mu,
            "energy": self.energy, "lambda": self.pde_lambda, "lambda_u": self.lambda_u,
            "residual": self.residual, "grad_norm": self.grad_norm,
            "cone": self.cone.to_dict(), "sign_changes": self.sign_changes,
            "nodal_min": self.nodal_min, "nodal_max": self.nodal_max,
            "flux_max": self.flux_max, "is_constant": self.is_constant,
            "graph_hash": self.graph_hash, "level_bracket": list(self.level_bracket),
            "start": self.start, "iterations": self.iterations,
            "sign_certified": self.sign_certified,
        }
        if coefficients:
            out["coefficients"] = [float(x) for x in self.u]
        return out


def make_record(d: Discretization, u: np.ndarray, p: float, mu: float, k: int, kind: str,
                nu: float, **extra) -> SolutionRecord:
    gr = constrained_gradient(d, u, p)
    lam = gr.pde_lambda
    kappa = math.sqrt(mu / d.graph.total_length)
    const = d.h1_norm(np.abs(u) - kappa) <= 1e-6 * d.h1_norm(u)
    rec = SolutionRecord(
        kind=kind, k=k, p=p, mu=mu, u=u, energy=energy(d, u, p), pde_lambda=lam,
        lambda_u=gr.lambda_u, residual=stationary_residual(d, u, p, lam),
        grad_norm=gr.h1_norm_grad, cone=cone_classify(d, u, nu),
        sign_changes=d.sign_changes_along_edges(u, tol=SIGN_CERT * kappa),
        nodal_min=float(u.min()), nodal_max=float(u.max()),
        flux_max=float(np.abs(d.vertex_flux(u)).max()), is_constant=bool(const),
        graph_hash=d.graph.digest(), **extra,
    )
    rec.sign_certified = bool(rec.nodal_min < -SIGN_CERT * kappa and rec.nodal_max > SIGN_CERT * kappa)
    return rec


# -- minimax descent ----------------------------------------------------------


def _peak(d: Discretization, L: np.ndarray, w: np.ndarray, p: float, mu: float, t0: np.ndarray):
    """Local maximizer of E on ``{sqrt(mu) [L, w] t / |t|}`` started at ``t0``."""
    Q = np.column_stack((L, w))
    sq = math.sqrt(mu)

    def f(t):
        nt = float(np.linalg.norm(t))
        u = sq * (Q @ t) / nt
        g = d.A @ u - d.nonlinear_load(u, p)
        Qg = Q.T @ g
        grad = sq * (Qg - (t @ Qg) * t / nt**2) / nt
        return -energy(d, u, p), -grad

    res = optimize.minimize(f, t0, jac=True, method="BFGS",
                            options={"gtol": 1e-14 * max(mu, 1e-300), "maxiter": 400})
    t = res.x / np.linalg.norm(res.x)
    if t[-1] < 0:
        t = -t
    u = d.normalize(sq * (Q @ t), mu)
    return u, t


def _complement(d, L, v):
    w = v - L @ (L.T @ (d.M @ v))
    w = w - L @ (L.T @ (d.M @ w))
    m = d.mass(w)
    return None if m <= 1e-24 * d.mass(v) else w / math.sqrt(m)


@dataclass
class MinimaxResult:
    u: np.ndarray
    reason: Termination
    energies: list
    grad_norms: list
    iterations: int


def minimax_descent(d: Discretization, L: np.ndarray, v0: np.ndarray, p: float, mu: float,
                    params: FlowParams = FlowParams(), tol: float | None = None) -> MinimaxResult:
    """Descend on the peak points of the caps ``span(L, w)`` (local minimax).

    ``L`` holds M-orthonormal support directions (``phi_1 .. phi_{k-1}``).
    Each step moves the current peak point along ``-grad E``, replaces ``w`` by
    the normalized part of the result orthogonal to ``L`` and re-selects the
    peak, accepting the step by an Armijo test on the peak energy.
    """
    tol = params.tol if tol is None else tol
    sq = math.sqrt(mu)
    v = d.normalize(np.asarray(v0, dtype=float), mu)
    w = _complement(d, L, v)
    if w is None:
        raise ValueError("start lies in the support span")
    t0 = np.concatenate((L.T @ (d.M @ v), [w @ (d.M @ v)])) / sq
    v, _ = _peak(d, L, w, p, mu, t0)
    E = energy(d, v, p)
    gr = constrained_gradient(d, v, p)
    energies, norms = [E], [gr.h1_norm_grad]
    s = params.step0
    reason = Termination.MAX_STEPS
    it = 0
    for it in range(1, params.max_steps + 1):
        if gr.h1_norm_grad <= tol * max(1.0, abs(E)):
            reason = Termination.CONVERGED
            break
        g2 = gr.h1_norm_grad ** 2
        noise = 64 * np.finfo(float).eps * (0.5 * d.kinetic(v) + d.integrate_power(v, p) / p)
        accepted = False
        while s > 1e-14:
            vp = step_project(d, v, -gr.grad, s, mu)
            w = _complement(d, L, vp)
            if w is None:
                s *= params.shrink
                continue
            t0 = np.concatenate((L.T @ (d.M @ vp), [w @ (d.M @ vp)])) / sq
            cand, _ = _peak(d, L, w, p, mu, t0)
            Ec = energy(d, cand, p)
            if Ec <= E - params.armijo * s * g2 + noise:
                accepted = True
                break
            s *= params.shrink
        if not accepted:
            reason = Termination.STALLED
            break
        v, E = cand, Ec
        gr = constrained_gradient(d, v, p)
        energies.append(E)
        norms.append(gr.h1_norm_grad)
        s = min(s * params.grow, params.step_max)
    return MinimaxResult(v, reason, energies, norms, it)


def _solve_from(d, L, v0, p, mu, params, coarse_tol):
    res = minimax_descent(d, L, v0, p, mu, params, tol=coarse_tol)
    u, lam, r = newton_polish(d, res.u, p, mu)
    return u, res


def _canonical_sign(u):
    # mirror pairs are reported with a positive first significant coefficient
    idx = np.flatnonzero(np.abs(u) > 1e-12 * np.abs(u).max())
    return -u if idx.size and u[idx[0]] < 0 else u


def find_sign_changing(
    cap: LinkedCap,
    thresholds: ThresholdReport,
    p: float,
    nu: float,
    flow_params: FlowParams = FlowParams(),
    multistart: int = 3,
    seed: int = 0,
    top_fraction: float = 0.1,
    max_starts: int = 12,
    coarse_tol: float = 1e-6,
) -> SolutionRecord:
    """Least-energy sign-changing critical point reached from the top of ``Q_k``.

    Starts are the highest-energy cap samples lying in ``S*(nu)`` (top
    ``top_fraction``), each perturbed by ``multistart`` seeded tangent noises
    of relative size 1e-3.

    Raises
    ------
    NoSignChangingFound
        Every start ended in a cone, at a constant, or without converging.
    """
    d = cap.spec.disc
    mu = cap.mu
    levels = level_estimates(cap, thresholds, p)
    F = cap.fields()
    E = np.array([energy(d, F[:, i], p) for i in range(F.shape[1])])
    order = np.argsort(-E, kind="stable")
    eligible = [i for i in order if cone_classify(d, F[:, i], nu).classification is ConeClass.IN_S_STAR]
    n_top = max(1, int(math.ceil(top_fraction * len(E))))
    picks = [i for i in eligible if i in set(order[:n_top])] or eligible[:1]
    L = cap.spec.basis(cap.k - 1)
    tangent_basis = cap.spec.basis(min(cap.spec.k, cap.k + 4))

    starts = []
    for i in picks:
        for j in range(multistart):
            rng = np.random.default_rng([seed, int(i), j])
            z = tangent_basis @ rng.standard_normal(tangent_basis.shape[1])
            z -= (z @ (d.M @ F[:, i])) / mu * F[:, i]
            z *= 1e-3 * math.sqrt(mu / d.mass(z))
            starts.append((int(i), d.normalize(F[:, i] + z, mu)))
    starts = starts[:max_starts]

    diagnostics, found = [], []
    for i, v0 in starts:
        try:
            u, res = _solve_from(d, L, v0, p, mu, flow_params, coarse_tol)
        except (ValueError, ArithmeticError) as exc:
            diagnostics.append({"start": i, "error": str(exc)})
            continue
        rec = make_record(d, _canonical_sign(u), p, mu, cap.k, "sign-changing", nu,
                          level_bracket=(levels.c_lower_bar, levels.sup_Q), start=i,
                          iterations=res.iterations)
        ok = rec.residual <= 1e-7 and rec.sign_certified and not rec.is_constant
        diagnostics.append({"start": i, "reason": res.reason.value, "energy": rec.energy,
                            "residual": rec.residual, "sign_changing": rec.sign_certified})
        if ok:
            found.append(rec)
    if not found:
        raise NoSignChangingFound(f"no sign-changing critical point for k={cap.k}", diagnostics)
    found.sort(key=lambda r: (r.energy, tuple(np.round(r.u, 12))))
    return found[0]


def positive_solution(spec: SpectralData, p: float, mu: float, nu: float,
                      flow_params: FlowParams = FlowParams(), seed: int = 0,
                      amplitude: float = 0.1) -> SolutionRecord:
    """Cone-restricted descent in ``P`` from a perturbed constant."""
    d = spec.disc
    kappa = math.sqrt(mu / d.graph.total_length)
    rng = np.random.default_rng(seed)
    n = min(spec.k, 6)
    z = spec.basis(n)[:, 1:] @ rng.standard_normal(n - 1)
    z *= amplitude / max(np.abs(z).max(), 1e-300)
    u0 = kappa * (1.0 + z)
    params = FlowParams(**{**flow_params.__dict__, "cone_side": 1})
    traj = descend(d, u0, p, mu, params)
    u, lam, r = newton_polish(d, traj.u, p, mu)
    rec = make_record(d, u, p, mu, 1, "positive", nu, iterations=len(traj.records) - 1)
    rec.trajectory = traj
    return rec


@dataclass
class Ladder:
    positive: SolutionRecord
    sign_changing: list

    @property
    def mirrors(self) -> list:
        return [r.mirror() for r in self.sign_changing]

    def to_dict(self, coefficients: bool = True) -> dict:
        return {
            "positive": self.positive.to_dict(coefficients),
            "sign_changing": [r.to_dict(coefficients) for r in self.sign_changing],
        }


def solve_ladder(spec: SpectralData, thresholds: ThresholdReport, indices, p: float, nu: float,
                 flow_params: FlowParams = FlowParams(), seed: int = 0,
                 grid_density: int = 8) -> Ladder:
    """One sign-changing solution per index plus the positive one, energy-ordered.

    Raises
    ------
    OrderingViolation
        Energies of consecutive indices are not strictly increasing (or agree
        within 1e-8).
    DuplicateSolution
        Two solutions coincide up to sign within 1e-6 in H1.
    """
    d = spec.disc
    indices = sorted(indices)
    sols = []
    for k in indices:
        cap = build_cap(spec, k, thresholds.mu, grid_density)
        sols.append(find_sign_changing(cap, thresholds, p, nu, flow_params, seed=seed))
    for a, b in zip(sols, sols[1:]):
        if not b.energy - a.energy > 1e-8:
            raise OrderingViolation(
                f"E(k={a.k}) = {a.energy:.10g} and E(k={b.k}) = {b.energy:.10g} are not strictly increasing"
            )
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            gap = min(d.h1_norm(sols[i].u - sols[j].u), d.h1_norm(sols[i].u + sols[j].u))
            if gap <= 1e-6:
                raise DuplicateSolution(f"solutions for k={sols[i].k} and k={sols[j].k} coincide")
    pos = positive_solution(spec, p, thresholds.mu, nu, flow_params, seed=seed)
    return Ladder(pos, sols)


def solution_digest(rec: SolutionRecord) -> str:
    blob = json.dumps(rec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
