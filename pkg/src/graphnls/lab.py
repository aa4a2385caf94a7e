"""Finite-dimensional harness for flow invariance on a sphere.

A scenario bundles two inner products (``S`` for distances and ``M`` for the
sphere ``u^T M u = mu``), a closed set ``B`` given by membership and
``M``-projection oracles, and a map ``G`` whose field ``V(u) = G(u) - u`` is
tangent to the sphere.  The checks measure

* the one-sided limit ``s^{-1} dist(u + s V(u), B ∩ sphere)`` as ``s -> 0``,
* how far explicit step-and-renormalize trajectories stray from ``B``.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import OracleUnavailable
from .graph import Discretization
from .gradient import constrained_gradient


@dataclass
class LabScenario:
    name: str
    S: np.ndarray
    M: np.ndarray
    mu: float
    member: Callable[[np.ndarray], bool]
    project: Callable[[np.ndarray], np.ndarray] | None
    G: Callable[[np.ndarray], np.ndarray]
    horizon: float = 10.0
    step: float = 1e-2
    energy: Callable[[np.ndarray], float] | None = None
    energy_level: float = math.inf
    scaling: bool = True
    patch: Callable[[np.ndarray], bool] | None = None
    section: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def V(self, u: np.ndarray) -> np.ndarray:
        return self.G(u) - u

    def mass(self, u) -> float:
        return float(u @ self.M @ u)

    def normalize(self, u) -> np.ndarray:
        v = u * math.sqrt(self.mu / self.mass(u))
        return v * math.sqrt(self.mu / self.mass(v))

    def snorm(self, w) -> float:
        return math.sqrt(max(float(w @ self.S @ w), 0.0))

    def dist(self, w) -> float:
        """Upper bound for the S-distance from ``w`` to ``B`` via the projection oracle."""
        if self.project is None:
            raise OracleUnavailable(f"scenario {self.name} has no projection oracle")
        return self.snorm(w - self.project(w))

    def digest(self) -> str:
        blob = json.dumps({"name": self.name, "mu": self.mu, "S": self.S.tolist(),
                           "M": self.M.tolist(), "params": self.params}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def witness(self, w, max_iter: int = 200) -> np.ndarray:
        """A point of ``B ∩ sphere`` near ``w``: project, renormalize, and alternate if needed.

        Scenarios whose section ``B ∩ sphere`` is known in closed form supply
        it through ``section``; alternating projections can stall when the set
        touches the sphere tangentially.
        """
        if self.section is not None:
            return self.section(w)
        if self.project is None:
            raise OracleUnavailable(f"scenario {self.name} has no projection oracle")
        r = w
        for _ in range(max_iter + 1):
            q = self.project(r)
            if self.mass(q) <= 1e-300:
                break
            r = self.normalize(q)
            if self.member(r):
                return r
        raise OracleUnavailable(f"no point of B on the sphere found near the query ({self.name})")

    def sample_starts(self, count: int, seed: int = 0) -> list[np.ndarray]:
        """Seeded points of ``B ∩ sphere`` (below the energy level when one is set)."""
        rng = np.random.default_rng(seed)
        out, tries = [], 0
        while len(out) < count:
            tries += 1
            if tries > 200 * count:
                raise RuntimeError("could not sample enough starts")
            try:
                u = self.witness(rng.standard_normal(self.n))
            except OracleUnavailable:
                continue
            if not self.member(u):
                continue
            if self.energy is not None and not self.energy(u) < self.energy_level:
                continue
            out.append(u)
        return out


# -- scenario families --------------------------------------------------------


def _tridiag(n, diag, off):
    return np.diag(np.full(n, diag)) + np.diag(np.full(n - 1, off), 1) + np.diag(np.full(n - 1, off), -1)


def orthant_scenario(n: int = 4, mu: float = 1.0, q: float = 4.0, horizon: float = 10.0,
                     step: float = 1e-2) -> LabScenario:
    """Nonnegative orthant with ``G(u) = S^{-1}(|u|^{q-2} u + lambda_u M u)``.

    ``S`` is a tridiagonal M-matrix (nonnegative inverse), ``M`` is diagonal
    with ``S - M`` positive semidefinite, so ``G`` keeps the orthant whenever
    ``lambda_u >= 0``.
    """
    S = _tridiag(n, 3.0, -1.0)
    M = np.diag(np.linspace(0.9, 1.1, n))
    if np.linalg.eigvalsh(S - M).min() < 0:
        raise ValueError("S - M must be positive semidefinite")
    Sinv = np.linalg.inv(S)

    def G(u):
        F = np.abs(u) ** (q - 2) * u
        a, b = Sinv @ F, Sinv @ (M @ u)
        lam = (mu - a @ M @ u) / (b @ M @ u)
        return a + lam * b

    def energy(u):
        return 0.5 * float(u @ S @ u) - float(np.sum(np.abs(u) ** q)) / q

    return LabScenario(
        name="orthant", S=S, M=M, mu=mu, member=lambda w: bool(np.all(w >= 0)),
        project=lambda w: np.maximum(w, 0.0), G=G, horizon=horizon, step=step,
        energy=energy, energy_level=math.inf, params={"n": n, "q": q},
    )


def _pull_map(M, mu, g0, theta):
    # G(u) = theta g0 + lambda_u u with lambda_u fixed by tangency
    def G(u):
        lam = 1.0 - theta * float(g0 @ M @ u) / mu
        return theta * g0 + lam * u
    return G


def cone_neighborhood_scenario(n: int = 4, mu: float = 1.0, nu: float = 0.2, theta: float = 0.3,
                               side: int = 1, horizon: float = 10.0, step: float = 1e-2) -> LabScenario:
    """``(side P)_nu`` measured in the diagonal ``M`` metric, where it is exactly convex."""
    S = _tridiag(n, 3.0, -1.0)
    M = np.diag(np.linspace(0.9, 1.1, n))
    m = np.diag(M)

    def bad(w):
        return np.maximum(-side * w, 0.0)

    def member(w):
        return math.sqrt(float(np.sum(m * bad(w) ** 2))) <= nu * (1 + 1e-12)

    def project(w):
        b = bad(w)
        r = math.sqrt(float(np.sum(m * b ** 2)))
        if r <= nu:
            return w.copy()
        return w + side * b * (1.0 - nu / r)

    g0 = side * np.ones(n) * math.sqrt(mu / float(np.sum(m)))
    theta = min(theta, 0.99 * math.sqrt(mu) / math.sqrt(float(g0 @ M @ g0)))
    return LabScenario(
        name=f"cone_nu_{'plus' if side > 0 else 'minus'}", S=S, M=M, mu=mu, member=member,
        project=project, G=_pull_map(M, mu, g0, theta), horizon=horizon, step=step,
        params={"n": n, "nu": nu, "theta": theta, "side": side},
    )


def halfspace_scenario(normals, mu: float = 1.0, theta: float = 0.3, horizon: float = 10.0,
                       step: float = 1e-2, dykstra_iter: int = 500) -> LabScenario:
    """Intersection of half-spaces ``a_i^T w >= 0`` through the origin (Euclidean metric)."""
    A = np.atleast_2d(np.asarray(normals, dtype=float))
    n = A.shape[1]
    S = _tridiag(n, 3.0, -1.0)
    M = np.eye(n)

    def member(w):
        return bool(np.all(A @ w >= -1e-12 * max(1.0, np.linalg.norm(w))))

    def project(w):
        # Dykstra's alternating projections onto each half-space
        x = w.copy()
        incs = np.zeros_like(A)
        for _ in range(dykstra_iter):
            x_old = x.copy()
            for i, a in enumerate(A):
                y = x + incs[i]
                viol = min(float(a @ y), 0.0)
                x_new = y - viol * a / float(a @ a)
                incs[i] = y - x_new
                x = x_new
            if np.linalg.norm(x - x_old) <= 1e-15 * max(1.0, np.linalg.norm(x)):
                break
        return x

    # interior direction: normalized sum of the normals, nudged inside
    g0 = A.sum(axis=0)
    g0 = g0 / np.linalg.norm(g0) * math.sqrt(mu)
    if not member(g0):
        raise ValueError("sum of normals must lie in the cone")
    theta = min(theta, 0.99)
    return LabScenario(
        name="halfspaces", S=S, M=M, mu=mu, member=member, project=project,
        G=_pull_map(M, mu, g0, theta), horizon=horizon, step=step,
        params={"normals": A.tolist(), "theta": theta},
    )


def fixed_point_scenario(n: int = 4, mu: float = 1.0) -> LabScenario:
    """Orthant with ``G = id`` so that ``V`` vanishes identically."""
    base = orthant_scenario(n, mu)
    base.name = "orthant_fixed"
    base.G = lambda u: u.copy()
    base.params = {"n": n, "G": "identity"}
    return base


def counterexample_scenario(n: int = 4, mu: float = 1.0, seed: int = 0) -> LabScenario:
    """Flat disc in the tangent hyperplane at ``u0``, centred at ``u0 + V0``.

    The disc is convex and closed and ``G(u0) = u0 + V0`` is its centre, but
    ``k w`` leaves it for ``k < 1``.  It meets the sphere only at ``u0``, so
    ``s^{-1} dist(u0 + s V0, B ∩ sphere) = |V0|`` for every ``s``.
    """
    S = _tridiag(n, 3.0, -1.0)
    M = np.eye(n)
    rng = np.random.default_rng(seed)
    u0 = np.abs(rng.standard_normal(n))
    u0 *= math.sqrt(mu) / np.linalg.norm(u0)
    V0 = rng.standard_normal(n)
    V0 -= (V0 @ u0) / mu * u0
    V0 *= 0.3 * math.sqrt(mu) / np.linalg.norm(V0)
    c, r = u0 + V0, float(np.linalg.norm(V0))
    normal = u0 / math.sqrt(mu)

    def to_plane(w):
        return w - float((w - u0) @ normal) * normal

    def member(w):
        off = abs(float((w - u0) @ normal))
        return off <= 1e-12 and np.linalg.norm(w - c) <= r * (1 + 1e-12)

    def project(w):
        x = to_plane(w)
        dv = x - c
        nd = float(np.linalg.norm(dv))
        return x if nd <= r else c + dv * (r / nd)

    def G(u):
        # tangent pull toward the centre
        v = c - u
        v -= float(v @ u) / mu * u
        return u + v

    sc = LabScenario(
        name="tangent_disc", S=S, M=M, mu=mu, member=member, project=project, G=G,
        scaling=False, section=lambda w: u0.copy(), params={"n": n, "seed": seed},
    )
    return sc


def rotating_cap_scenario(half_angle: float = math.pi / 4, omega: float = 1.0,
                          horizon: float = 2.0, step: float = 1e-2) -> LabScenario:
    """Circular cone around ``e3`` in ``R^3`` with an azimuthal rotation field.

    The exact flow keeps every latitude, hence the cap, invariant.  The
    explicit step-and-renormalize scheme drifts off by ``O(step)`` over a fixed
    horizon, which makes this a probe of integrator order rather than of the
    set-valued criterion.
    """
    ca, sa = math.cos(half_angle), math.sin(half_angle)
    M = np.eye(3)
    S = np.eye(3)

    def member(w):
        return float(w[2]) >= ca * float(np.linalg.norm(w)) - 1e-13

    def project(w):
        # Euclidean projection onto the second-order cone {w3 >= cot(a) |w_xy|}
        r = float(np.hypot(w[0], w[1]))
        z = float(w[2])
        if z >= r * ca / sa:
            return w.copy()
        if z <= -r * sa / ca:
            return np.zeros(3)
        t = r * sa + z * ca  # coordinate along the cone generator
        out = np.array([w[0] / r * t * sa, w[1] / r * t * sa, t * ca]) if r > 0 else np.zeros(3)
        return out

    def G(u):
        return u + omega * np.array([-u[1], u[0], 0.0])

    return LabScenario(name="rotating_cap", S=S, M=M, mu=1.0, member=member, project=project,
                       G=G, horizon=horizon, step=step, params={"half_angle": half_angle, "omega": omega})


def quarter_circle_scenario(horizon: float = 10.0, step: float = 1e-2) -> LabScenario:
    """``n = 2``: the positive quarter circle with a field rotating toward ``e2`` and vanishing at both ends."""
    M = np.eye(2)

    def G(u):
        th = math.atan2(u[1], u[0])
        w = math.sin(2 * th) if 0.0 <= th <= 0.5 * math.pi else 0.0
        return u + 0.5 * w * np.array([-u[1], u[0]])

    return LabScenario(name="quarter_circle", S=np.eye(2), M=M, mu=1.0,
                       member=lambda w: bool(np.all(w >= 0)), project=lambda w: np.maximum(w, 0.0),
                       G=G, horizon=horizon, step=step, params={})


def patched_scenario(base: LabScenario, push: float = 0.5, width: float = 0.15) -> LabScenario:
    """``base`` with ``G`` pushed out of the orthant across the face ``u_1 = 0`` on a patch."""
    def in_patch(u):
        return float(u[0]) < width * math.sqrt(base.mu)

    def G(u):
        g = base.G(u)
        if in_patch(u):
            e = np.zeros_like(u)
            e[0] = -push * math.sqrt(base.mu)
            e -= float(e @ base.M @ u) / base.mu * u
            g = g + e
        return g

    sc = LabScenario(**{**base.__dict__, "name": base.name + "_patched", "G": G})
    sc.patch = in_patch
    sc.params = {**base.params, "push": push, "width": width}
    return sc


# -- checks -------------------------------------------------------------------


@dataclass
class DecayTable:
    s: list
    values: list
    fitted_C: float
    slope: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def limit_check(scenario: LabScenario, u: np.ndarray, s_grid=None, final_tol: float = 1e-6) -> DecayTable:
    """Table of ``s^{-1} dist(u + s V(u), B ∩ sphere)`` for decreasing ``s``.

    The distance is the S-norm gap to the witness returned by
    :meth:`LabScenario.witness`, an upper bound for the true distance.
    Passes when the values decay like ``O(s)`` (log-log slope at least 0.8, or
    all at round-off) and the last entry is at most ``final_tol``.

    Raises
    ------
    OracleUnavailable
        The scenario has no projection oracle.
    """
    if scenario.project is None:
        raise OracleUnavailable(f"scenario {scenario.name} has no projection oracle")
    s_grid = np.logspace(-1, -8, 15) if s_grid is None else np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) >= 0):
        raise ValueError("s_grid must be strictly decreasing")
    V = scenario.V(u)
    vals = []
    for s in s_grid:
        w = u + s * V
        r = scenario.witness(w)
        vals.append(scenario.snorm(w - r) / s)
    vals = np.array(vals)
    noise = 1e-10
    pos = vals > noise
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(s_grid[pos]), np.log(vals[pos]), 1)[0])
    else:
        slope = math.inf
    C = float(np.max(vals / s_grid))
    passed = bool(vals[-1] <= final_tol and (slope >= 0.8 or not pos.any()))
    return DecayTable([float(x) for x in s_grid], [float(x) for x in vals], C, slope, passed)


def _integrate(scenario: LabScenario, u0, h, horizon):
    u = u0.copy()
    worst = scenario.dist(u)
    entered = bool(scenario.patch(u)) if scenario.patch else False
    for _ in range(int(round(horizon / h))):
        V = scenario.V(u)
        if np.any(V):
            u = scenario.normalize(u + h * V)
        worst = max(worst, scenario.dist(u))
        if scenario.patch and scenario.patch(u):
            entered = True
    return worst, entered


@dataclass
class InvarianceReport:
    scenario: str
    digest: str
    step: float
    max_violation: float
    per_start: list
    entered_patch: list
    passed: bool
    tolerance: float
    richardson_ratio: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def flow_invariance_check(scenario: LabScenario, starts, tol: float = 1e-8, cond: float = 1.0,
                          step: float | None = None, richardson: bool = False) -> InvarianceReport:
    """Integrate ``u' = V(u)`` by step-and-renormalize from each start and record the worst distance to ``B``.

    With ``richardson`` the run is repeated at half the step and the ratio of
    the two maximal violations is reported (about 2 for a first-order scheme).
    """
    h = scenario.step if step is None else step
    per, entered = [], []
    for u0 in starts:
        w, e = _integrate(scenario, np.asarray(u0, dtype=float), h, scenario.horizon)
        per.append(w)
        entered.append(e)
    worst = max(per)
    ratio = None
    if richardson:
        half = max(_integrate(scenario, np.asarray(u0, dtype=float), h / 2, scenario.horizon)[0]
                   for u0 in starts)
        ratio = worst / half if half > 0 else math.inf
    return InvarianceReport(scenario.name, scenario.digest(), h, worst, per, entered,
                            bool(worst <= tol * cond), tol * cond, ratio)


def set_oracle_checks(scenario: LabScenario, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Count violations of convexity and of the scaling condition on sampled members."""
    rng = np.random.default_rng(seed)
    pool = []
    while len(pool) < 64:
        w = scenario.project(rng.standard_normal(scenario.n) * math.sqrt(scenario.mu))
        if scenario.member(w):
            pool.append(w)
    conv = scale = 0
    for _ in range(n_samples):
        a, b = pool[rng.integers(len(pool))], pool[rng.integers(len(pool))]
        th, k = rng.uniform(), rng.uniform()
        conv += not scenario.member(th * a + (1 - th) * b)
        scale += not scenario.member(k * a)
    return {"convexity_violations": conv, "scaling_violations": scale, "samples": n_samples}


# -- PDE mirror ---------------------------------------------------------------


@dataclass
class MirrorScenario:
    """The discretized problem seen through the lab: ``B = (-P)_nu`` with the H1 surrogate."""

    d: Discretization
    p: float
    mu: float
    nu: float

    def G(self, u):
        return u - constrained_gradient(self.d, u, self.p).grad

    def lambda_u(self, u) -> float:
        return constrained_gradient(self.d, u, self.p).lambda_u

    def member(self, w, radius=None) -> bool:
        r = self.nu if radius is None else radius
        return self.d.h1_norm(np.maximum(w, 0.0)) <= r

    def check(self, states) -> dict:
        """``G(u)`` in ``(-P)_{nu/2}`` for each state, with the sign of ``lambda_u`` recorded."""
        passed, neg = [], 0
        for u in states:
            gr = constrained_gradient(self.d, u, self.p)
            neg += gr.lambda_u < 0
            passed.append(self.member(u - gr.grad, 0.5 * self.nu))
        return {"passed": int(sum(passed)), "total": len(passed),
                "negative_lambda_u": int(neg), "all_passed": all(passed)}


def mirror_pde_scenario(d: Discretization, p: float, mu: float, nu: float,
                        separation_cap: float | None = None) -> MirrorScenario:
    if d.n_dofs > 60:
        raise ValueError("mirror scenario is meant for small meshes (at most 60 DOFs)")
    if separation_cap is not None and nu > separation_cap:
        warnings.warn(f"nu = {nu:.3e} exceeds the separation cap {separation_cap:.3e}", stacklevel=2)
    return MirrorScenario(d, p, mu, nu)
