"""Descending flows on the mass sphere.

Two modes share the same step-and-renormalize kernel:

``SOLVER``
    Steepest descent ``V = -grad E`` with an Armijo line search; used to find
    critical points.
``DEFORMATION``
    The cutoff flow ``V = -h y grad E / |grad E|^2`` integrated by explicit
    Euler; energy drops at unit rate where ``h = y = 1``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cones import ConeClass, cone_classify, g_cone_check
from .exceptions import SingularVelocity
from .functional import energy
from .gradient import constrained_gradient
from .graph import Discretization


class Mode(str, enum.Enum):
    SOLVER = "SOLVER"
    DEFORMATION = "DEFORMATION"


class Termination(str, enum.Enum):
    CONVERGED = "CONVERGED"
    MAX_STEPS = "MAX_STEPS"
    LEFT_BARRIER = "LEFT_BARRIER"
    STALLED = "STALLED"
    HORIZON = "HORIZON"


@dataclass(frozen=True)
class FlowParams:
    mode: Mode = Mode.SOLVER
    step0: float = 1.0
    shrink: float = 0.5
    grow: float = 1.25
    step_max: float = 1.5
    armijo: float = 1e-4
    max_steps: int = 5000
    tol: float = 1e-9
    # barrier B^{M2}: kinetic < rho_star and E < m2
    rho_star: float | None = None
    m2: float | None = None
    enforce_barrier: bool = False
    # cone restriction: +1 keeps iterates in P, -1 in -P
    cone_side: int = 0
    nu: float | None = None
    # deformation cutoffs
    c: float = 0.0
    eps1: float = 0.0
    eps_bar: float = 0.0
    delta1: float = 0.0
    dt: float = 1e-3
    horizon: float = 1.0
    keep_states: bool = False

    def __post_init__(self):
        if not (0 < self.shrink < 1 and self.grow >= 1 and self.step0 > 0):
            raise ValueError("invalid step control")
        if self.enforce_barrier and (self.rho_star is None or self.m2 is None):
            raise ValueError("barrier enforcement needs rho_star and m2")
        if self.cone_side not in (-1, 0, 1):
            raise ValueError("cone_side must be -1, 0 or 1")
        if self.mode is Mode.DEFORMATION:
            if not (0 < 3 * self.eps1 <= self.eps_bar * (1 + 1e-12)):
                raise ValueError("deformation cutoffs need 0 < 3*eps1 <= eps_bar")
            if self.nu is not None and not self.delta1 < self.nu:
                raise ValueError("delta1 must be smaller than nu")
            if self.dt <= 0 or self.horizon <= 0:
                raise ValueError("dt and horizon must be positive")


def default_deformation_params(c: float, c_lower: float, c_upper: float, nu: float,
                               delta_tilde: float, **kw) -> FlowParams:
    """``eps_bar = 0.1 (c_upper - c_lower)``, ``eps1 = eps_bar/3``, ``delta1 = 0.5 min(nu, delta_tilde)``."""
    eps_bar = 0.1 * (c_upper - c_lower)
    return FlowParams(mode=Mode.DEFORMATION, c=c, eps_bar=eps_bar, eps1=eps_bar / 3,
                      delta1=0.5 * min(nu, delta_tilde), nu=nu, **kw)


@dataclass
class FlowRecord:
    t: float
    energy: float
    mass: float
    grad_norm: float
    lambda_u: float
    kinetic: float
    cone_class: str
    in_barrier: bool


@dataclass
class Trajectory:
    records: list
    u: np.ndarray
    reason: Termination
    mu: float
    states: list = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def lambda_u_max(self) -> float:
        return max(r.lambda_u for r in self.records)

    @property
    def final(self) -> FlowRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "E", "mass_err", "grad_norm", "lambda_u", "kinetic", "cone_class"])
        for r in self.records:
            w.writerow([repr(r.t), repr(r.energy), repr((r.mass - self.mu) / self.mu),
                        repr(r.grad_norm), repr(r.lambda_u), repr(r.kinetic), r.cone_class])
        return buf.getvalue()


def step_project(d: Discretization, u: np.ndarray, V: np.ndarray, s: float, mu: float) -> np.ndarray:
    """``sqrt(mu) (u + sV) / |u + sV|_M``."""
    if s <= 0:
        raise ValueError("step must be positive")
    if not np.any(V):
        return u.copy()
    return d.normalize(u + s * V, mu)


def _record(d, u, t, E, gr, mu, params: FlowParams) -> FlowRecord:
    kin = d.kinetic(u)
    cls = "" if params.nu is None else cone_classify(d, u, params.nu).classification.value
    inside = True
    if params.rho_star is not None and params.m2 is not None:
        inside = kin < params.rho_star and E < params.m2
    return FlowRecord(t, E, d.mass(u), gr.h1_norm_grad, gr.lambda_u, kin, cls, inside)


def _energy_noise(d, u, p):
    return 64 * np.finfo(float).eps * (0.5 * d.kinetic(u) + d.integrate_power(u, p) / p)


def _clamp_to_cone(d, u, side, mu):
    v = np.maximum(side * u, 0.0) * side
    return d.normalize(v, mu) if np.any(v) else u


def descend(d: Discretization, u0: np.ndarray, p: float, mu: float,
            params: FlowParams = FlowParams()) -> Trajectory:
    """Armijo steepest descent on the sphere in the H1 metric.

    Accepted steps never increase the energy beyond round-off.  With
    ``enforce_barrier`` candidates leaving ``B^{M2}`` are rejected by the line
    search; with ``cone_side`` each candidate is clamped back into the cone.
    """
    u = d.normalize(np.asarray(u0, dtype=float), mu)
    if params.cone_side:
        u = _clamp_to_cone(d, u, params.cone_side, mu)
    E = energy(d, u, p)
    gr = constrained_gradient(d, u, p)
    t = 0.0
    records = [_record(d, u, t, E, gr, mu, params)]
    states = [u.copy()] if params.keep_states else []
    s = params.step0
    reason = Termination.MAX_STEPS
    for _ in range(params.max_steps):
        if gr.h1_norm_grad <= params.tol * max(1.0, abs(E)):
            reason = Termination.CONVERGED
            break
        V = -gr.grad
        g2 = gr.h1_norm_grad ** 2
        noise = _energy_noise(d, u, p)
        accepted = False
        while s > 1e-14:
            cand = step_project(d, u, V, s, mu)
            if params.cone_side:
                cand = _clamp_to_cone(d, cand, params.cone_side, mu)
            Ec = energy(d, cand, p)
            if params.enforce_barrier and not (d.kinetic(cand) < params.rho_star and Ec < params.m2):
                s *= params.shrink
                continue
            if Ec <= E - params.armijo * s * g2 + noise:
                accepted = True
                break
            s *= params.shrink
        if not accepted:
            reason = Termination.STALLED
            break
        t += s
        u, E = cand, Ec
        gr = constrained_gradient(d, u, p)
        records.append(_record(d, u, t, E, gr, mu, params))
        if params.keep_states:
            states.append(u.copy())
        s = min(s * params.grow, params.step_max)
    return Trajectory(records, u, reason, mu, states)


def h_cutoff(E: float, c: float, eps1: float) -> float:
    """1 on ``|E - c| <= 2 eps1``, 0 on ``|E - c| >= 3 eps1``, linear in between."""
    gap = abs(E - c)
    return float(np.clip((3 * eps1 - gap) / eps1, 0.0, 1.0))


def y_cutoff(dist: float, delta1: float) -> float:
    """0 within ``delta1/3`` of the inventory, 1 beyond ``delta1/2``."""
    if delta1 <= 0:
        return 1.0
    return float(np.clip((dist - delta1 / 3) / (delta1 / 6), 0.0, 1.0))


def deformation_flow(d: Discretization, u0: np.ndarray, p: float, mu: float, params: FlowParams,
                     critical_inventory: Sequence[np.ndarray] = ()) -> Trajectory:
    """Explicit Euler for ``u' = -h(u) y(u) grad E(u) / |grad E(u)|^2`` with renormalization.

    Raises
    ------
    SingularVelocity
        The gradient vanishes (below 1e-14) at a state that is not frozen by
        the cutoffs, i.e. an un-inventoried critical point.
    """
    if params.mode is not Mode.DEFORMATION:
        raise ValueError("deformation_flow needs DEFORMATION-mode parameters")
    inventory = [np.asarray(w, dtype=float) for w in critical_inventory]
    u = d.normalize(np.asarray(u0, dtype=float), mu)
    t = 0.0
    records, states = [], []
    n_steps = int(math.ceil(params.horizon / params.dt - 1e-9))
    reason = Termination.HORIZON
    for n in range(n_steps + 1):
        E = energy(d, u, p)
        gr = constrained_gradient(d, u, p)
        rec = _record(d, u, t, E, gr, mu, params)
        records.append(rec)
        if params.keep_states:
            states.append(u.copy())
        if params.rho_star is not None and params.m2 is not None and not rec.in_barrier:
            reason = Termination.LEFT_BARRIER
            break
        if n == n_steps:
            break
        dist = min((d.h1_norm(u - w) for w in inventory), default=math.inf)
        weight = h_cutoff(E, params.c, params.eps1) * y_cutoff(dist, params.delta1)
        if weight > 0.0:
            if gr.h1_norm_grad < 1e-14:
                raise SingularVelocity(f"gradient vanishes at t={t:.6g}, E={E:.6g} outside the frozen set")
            V = -weight * gr.grad / gr.h1_norm_grad ** 2
            u = step_project(d, u, V, params.dt, mu)
        t += params.dt
    return Trajectory(records, u, reason, mu, states)


@dataclass
class ConeAudit:
    applicable: bool
    invariant: bool
    first_exit_time: float | None
    g_check_passed: bool
    n_audited: int
    regime_violation: bool
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cone_invariance_audit(d: Discretization, traj: Trajectory, nu: float, p: float,
                          mu_tilde: float | None = None) -> ConeAudit:
    """Check that a run started in ``D*(nu)`` stays there and that ``G`` maps each state deeper in.

    ``G(u) = u - grad E(u)`` is required to lie in the ``nu/2`` neighbourhood
    of the cone the state belongs to.  States are taken from ``traj.states``
    when recorded, otherwise only the terminal state is audited.
    """
    states = traj.states or [traj.u]
    first = cone_classify(d, states[0], nu)
    if not first.in_d_star:
        return ConeAudit(False, True, None, True, 0, False, "not applicable (started outside D*)")
    side = 1 if first.classification is ConeClass.IN_P_NU else -1
    target = ConeClass.IN_P_NU if side > 0 else ConeClass.IN_MINUS_P_NU
    exit_time = None
    g_ok = True
    times = [r.t for r in traj.records] if traj.states else [traj.records[-1].t]
    for t, u in zip(times, states):
        rep = cone_classify(d, u, nu)
        if rep.classification is not target and exit_time is None:
            exit_time = t
        gr = constrained_gradient(d, u, p)
        if not g_cone_check(d, u - gr.grad, side, nu):
            g_ok = False
    in_regime = mu_tilde is not None and traj.mu <= mu_tilde
    violation = exit_time is not None and in_regime
    note = "invariant" if exit_time is None else f"left the cone neighbourhood at t={exit_time:.6g}"
    return ConeAudit(True, exit_time is None, exit_time, g_ok, len(states), violation, note)
