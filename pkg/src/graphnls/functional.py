"""Energy, Gagliardo-Nirenberg constant estimate and the closed-form mass thresholds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.sparse.csgraph import dijkstra

from .exceptions import DegenerateSample, InadmissibleIndex, RootBracketFailure
from .graph import Discretization
from .spectrum import SpectralData, eigenpairs, spectral_gap_indices

SAFETY_FACTOR = 1.5
THRESHOLD_CAVEAT = (
    "K is a sampled lower estimate inflated by a safety factor; thresholds are "
    "indicative, not certified"
)


@dataclass(frozen=True)
class ProblemParams:
    p: float
    mu: float

    def __post_init__(self):
        if not self.p > 6:
            raise ValueError(f"exponent p must exceed 6, got {self.p!r}")
        if not self.mu > 0:
            raise ValueError(f"mass mu must be positive, got {self.mu!r}")


def energy(d: Discretization, u: np.ndarray, p: float) -> float:
    """``E(u) = 1/2 int |u'|^2 - 1/p int |u|^p``."""
    return 0.5 * d.kinetic(u) - d.integrate_power(u, p) / p


def energy_gradient(d: Discretization, u: np.ndarray, p: float) -> np.ndarray:
    """Euclidean gradient of the discrete energy: ``A u - N(u)``."""
    return d.A @ u - d.nonlinear_load(u, p)


# -- closed forms -------------------------------------------------------------


def b_constant(p: float, K: float) -> float:
    return (2.0 / ((p - 2.0) * K)) ** (4.0 / (p - 6.0))


def g_function(rho: float, mu: float, p: float, K: float) -> float:
    return 0.5 * rho - K * mu ** ((p + 2) / 4) * rho ** ((p - 2) / 4)


def g_derivative(rho: float, mu: float, p: float, K: float) -> float:
    return 0.5 - (p - 2) / 4 * K * mu ** ((p + 2) / 4) * rho ** ((p - 6) / 4)


def rho_star(mu: float, p: float, K: float) -> float:
    b = b_constant(p, K)
    return min(b, b * mu ** (-(p + 2) / (p - 6)))


def constant_term(mu: float, p: float, ell: float) -> float:
    """``ell^{(2-p)/2} mu^{p/2}``, i.e. ``int kappa_mu^p``."""
    return ell ** ((2 - p) / 2) * mu ** (p / 2)


def M1_value(mu: float, p: float, K: float) -> float:
    return g_function(rho_star(mu, p, K), mu, p, K)


def boundary_energy_bound(params: ProblemParams, K: float, ell: float) -> float:
    """Barrier level ``M2 = g(rho*) - ell^{(2-p)/2} mu^{p/2}``.

    Every field with kinetic energy exactly ``rho*`` has energy at least M2,
    which is what keeps the descending flow inside ``B^{M2}``.
    """
    p, mu = params.p, params.mu
    return M1_value(mu, p, K) - constant_term(mu, p, ell)


def mu1_value(ell: float, lam2: float, p: float) -> float:
    return ell * (lam2 / (p - 2)) ** (2 / (p - 2))


def c_underbar_1(mu: float, p: float, ell: float) -> float:
    return -constant_term(mu, p, ell) / p


def c_lower_bar(lam_k: float, mu: float, p: float, K: float, ell: float) -> float:
    """Analytic lower bound ``g(lambda_k mu) - ell^{(2-p)/2} mu^{p/2}``."""
    return g_function(lam_k * mu, mu, p, K) - constant_term(mu, p, ell)


def gn_mass_bound_rhs(kinetic: float, mu: float, p: float, K: float, ell: float) -> float:
    """Right side of the mass-constrained Gagliardo-Nirenberg bound on ``int |u|^p``."""
    return p * K * mu ** ((p + 2) / 4) * kinetic ** ((p - 2) / 4) + p * constant_term(mu, p, ell)


# -- Gagliardo-Nirenberg constant -------------------------------------------


def gn_quotient(d: Discretization, u: np.ndarray, p: float) -> float:
    """``int|u-ubar|^p / [(int|u'|^2)^{(p-2)/4} (int|u-ubar|^2)^{(p+2)/4}]``."""
    w = u - d.mean_value(u)
    l2 = d.mass(w)
    kin = d.kinetic(u)
    if l2 <= 1e-28 * max(d.mass(u), 1e-300) or kin <= 0.0:
        raise DegenerateSample("field is constant (u - mean vanishes)")
    return d.integrate_power(w, p) / (kin ** ((p - 2) / 4) * l2 ** ((p + 2) / 4))


def _neg_log_quotient(v, d: Discretization, p: float, proj_row: np.ndarray):
    ell = d.graph.total_length
    w = v - (proj_row @ v) / ell
    P = d.integrate_power(w, p)
    T = d.kinetic(v)
    L = d.mass(w)
    if P <= 0 or T <= 0 or L <= 0:
        return np.inf, np.zeros_like(v)
    a, b = (p - 2) / 4, (p + 2) / 4
    gw = p * d.nonlinear_load(w, p) / P - b * 2 * (d.M @ w) / L
    # chain rule through w = v - (1^T M v / ell) 1
    gv = gw - proj_row * gw.sum() / ell
    gv = gv - a * 2 * (d.A @ v) / T
    return -(math.log(P) - a * math.log(T) - b * math.log(L)), -gv


@dataclass(frozen=True)
class KEstimate:
    """Provenance-carrying estimate of the Gagliardo-Nirenberg constant."""

    value: float
    best_quotient: float
    p: float
    n_samples: int
    seed: int
    skipped: int = 0
    n_optimized: int = 0
    absorbed: int = 0
    safety: float = SAFETY_FACTOR

    def absorb(self, quotient: float) -> "KEstimate":
        """Return the estimate enlarged to cover an externally found quotient."""
        if quotient * self.safety <= self.value:
            return self
        return replace(
            self,
            value=quotient * self.safety,
            best_quotient=max(self.best_quotient, quotient),
            absorbed=self.absorbed + 1,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_field(d: Discretization, rng: np.random.Generator, modes: np.ndarray, lam: np.ndarray,
                  dist_from: Callable[[int], np.ndarray], p: float) -> np.ndarray:
    kind = rng.integers(3)
    if kind == 0:
        # smooth: random eigen-combination with algebraic decay
        decay = rng.uniform(0.5, 2.0)
        coef = rng.standard_normal(modes.shape[1]) / (1.0 + lam) ** (decay / 2)
        coef[0] = rng.normal(0.0, 2.0)
        return modes @ coef
    # localized soliton-like bump, centred at a random node or vertex
    if kind == 1:
        src = int(rng.integers(len(d.graph.vertices)))
    else:
        src = int(rng.integers(d.n_dofs))
    width = d.graph.total_length * 10 ** rng.uniform(-2.0, -0.3)
    r = dist_from(src)
    bump = np.cosh(np.minimum(r / width, 300.0)) ** (-2.0 / (p - 2))
    return bump + rng.normal(0.0, 0.05) * modes @ rng.standard_normal(modes.shape[1])


def gn_estimate(
    d: Discretization,
    p: float,
    n_samples: int = 200,
    seed: int = 0,
    n_optimize: int = 4,
    n_modes: int = 12,
    safety: float = SAFETY_FACTOR,
) -> KEstimate:
    """Estimate the constant ``K`` of the mean-zero Gagliardo-Nirenberg bound.

    Samples are drawn from independent per-index streams ``(seed, i)`` so that
    a larger ``n_samples`` always sees a superset of the fields seen by a
    smaller one.  The first ``n_optimize`` samples are additionally improved by
    L-BFGS on the full nodal vector.  The result is ``safety`` times the
    largest quotient found.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n_modes = min(n_modes, d.n_dofs - 1)
    spec = eigenpairs(d, n_modes)
    modes, lam = spec.vectors, spec.values

    # mesh-graph distances for localized samples
    adj = abs(d.A).tocsr().copy()
    adj.data = np.zeros_like(adj.data)
    rows = d.elem_dofs[:, 0]
    cols = d.elem_dofs[:, 1]
    from scipy import sparse

    weights = sparse.coo_matrix((d.elem_h, (rows, cols)), shape=(d.n_dofs, d.n_dofs)).tocsr()

    def dist_from(src: int) -> np.ndarray:
        return dijkstra(weights, directed=False, indices=src)

    proj_row = d.M @ np.ones(d.n_dofs)
    best = 0.0
    skipped = 0
    n_opt = 0
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        u = _sample_field(d, rng, modes, lam, dist_from, p)
        try:
            q = gn_quotient(d, u, p)
        except DegenerateSample:
            skipped += 1
            continue
        best = max(best, q)
        if i < n_optimize:
            res = optimize.minimize(
                _neg_log_quotient, u, args=(d, p, proj_row), jac=True,
                method="L-BFGS-B", options={"maxiter": 200},
            )
            try:
                best = max(best, gn_quotient(d, res.x, p))
                n_opt += 1
            except DegenerateSample:
                pass
    if best <= 0.0:
        raise DegenerateSample("every sample was degenerate")
    return KEstimate(
        value=safety * best, best_quotient=best, p=p, n_samples=n_samples, seed=seed,
        skipped=skipped, n_optimized=n_opt, safety=safety,
    )


def estimate_K(d: Discretization, p: float, n_samples: int = 200, seed: int = 0) -> float:
    return gn_estimate(d, p, n_samples=n_samples, seed=seed).value


def check_gn_bound(d: Discretization, fields: Sequence[np.ndarray], p: float, mu: float,
                   estimate: KEstimate) -> tuple[int, KEstimate]:
    """Test the mass-constrained bound on each field (rescaled to mass ``mu``).

    Returns the number of violations against the *incoming* estimate and an
    estimate enlarged to cover every violating field's quotient.
    """
    ell = d.graph.total_length
    violations = 0
    est = estimate
    for u in fields:
        v = d.normalize(u, mu)
        lhs = d.integrate_power(v, p)
        rhs = gn_mass_bound_rhs(d.kinetic(v), mu, p, estimate.value, ell)
        if lhs > rhs:
            violations += 1
            try:
                est = est.absorb(gn_quotient(d, v, p))
            except DegenerateSample:
                pass
    return violations, est


# -- thresholds ---------------------------------------------------------------


@dataclass(frozen=True)
class RootRecord:
    name: str
    value: float
    residual: float
    lhs_terms: tuple
    rhs: float


def solve_increasing(name: str, terms: Sequence[tuple[float, float]], rhs: float) -> RootRecord:
    """Positive root of ``sum_i c_i mu^{a_i} = rhs`` with all ``c_i, a_i > 0``.

    The left side is checked to be strictly increasing on the bracket before
    the root is accepted.
    """
    terms = tuple((float(c), float(a)) for c, a in terms)
    if rhs <= 0 or not terms or any(c <= 0 or a <= 0 for c, a in terms):
        raise RootBracketFailure(f"{name}: defining equation has no unique positive root")

    def lhs(mu):
        return math.fsum(c * mu ** a for c, a in terms)

    def f(t):
        # log-space keeps the bracket well scaled over many decades
        return math.log(lhs(math.exp(t))) - math.log(rhs)

    lo, hi = -1.0, 1.0
    for _ in range(400):
        if f(lo) < 0:
            break
        lo -= 2.0
    for _ in range(400):
        if f(hi) > 0:
            break
        hi += 2.0
    if not (f(lo) < 0 < f(hi)):
        raise RootBracketFailure(f"{name}: could not bracket the root")
    grid = np.linspace(lo, hi, 129)
    vals = np.array([lhs(math.exp(t)) for t in grid])
    if not np.all(np.diff(vals) > 0):
        raise RootBracketFailure(f"{name}: defining function not strictly increasing on bracket")
    t = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    mu = math.exp(t)
    residual = abs(lhs(mu) - rhs) / rhs
    return RootRecord(name, mu, residual, terms, rhs)


@dataclass
class ThresholdReport:
    """Closed-form thresholds for one ``(graph, p, mu, K)``.

    Mass-independent thresholds (``mu1``, ``mu_tilde`` and the per-index
    entries) are valid for any mass; ``rho_star``, ``M1``, ``M2`` and the level
    bounds refer to ``mu``.
    """

    p: float
    mu: float
    ell: float
    K: float
    b: float
    rho_star: float
    M1: float
    M2: float
    mu1: float
    mu_tilde: float
    per_index: dict
    mu_j: float
    indices: tuple
    residuals: dict
    eigenvalues: dict
    K_provenance: dict = field(default_factory=dict)
    caveat: str = THRESHOLD_CAVEAT

    @property
    def mu2(self) -> float:
        return min(self.mu1, self.per_index[2]["mu_check"]) if 2 in self.per_index else math.nan

    def mu_check(self, k: int) -> float:
        return self.per_index[k]["mu_check"]

    def regime_violations(self, mu: float | None = None) -> list[str]:
        """Names of the defining inequalities that ``mu`` fails."""
        mu = self.mu if mu is None else mu
        out = []
        if not mu < self.mu1:
            out.append(f"mu < mu1 ({mu:.6g} >= {self.mu1:.6g})")
        if not mu <= self.mu_tilde:
            out.append(f"mu <= mu_tilde ({mu:.6g} > {self.mu_tilde:.6g})")
        for k in self.indices:
            for key in ("mu_hat", "mu_bar", "mu_star"):
                bound = self.per_index[k][key]
                if not mu < bound:
                    out.append(f"mu < {key}_{k} ({mu:.6g} >= {bound:.6g})")
        return out

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_index"] = {str(k): v for k, v in self.per_index.items()}
        out["eigenvalues"] = {str(k): v for k, v in self.eigenvalues.items()}
        out["indices"] = list(self.indices)
        out["mu2"] = self.mu2
        return out


def compute_thresholds(
    params: ProblemParams,
    K: float | KEstimate,
    spec: SpectralData,
    indices: Sequence[int] = (2,),
) -> ThresholdReport:
    """Evaluate every threshold for the admissible ``indices``.

    Raises
    ------
    InadmissibleIndex
        If an index is not a spectral gap index of ``spec``.
    RootBracketFailure
        If a defining equation cannot be solved.
    """
    provenance = {}
    if isinstance(K, KEstimate):
        provenance = K.to_dict()
        K = K.value
    if not K > 0:
        raise ValueError("K must be positive")
    p, mu = params.p, params.mu
    ell = spec.disc.graph.total_length
    gaps = spectral_gap_indices(spec)
    indices = tuple(sorted(set(int(k) for k in indices)))
    for k in indices:
        if k not in gaps:
            raise InadmissibleIndex(f"index {k} is not a spectral gap index (admissible: {gaps})")

    b = b_constant(p, K)
    rs = rho_star(mu, p, K)
    m1 = g_function(rs, mu, p, K)
    m2 = m1 - constant_term(mu, p, ell)
    lam2 = spec.eigenvalue(2)
    c_ell = ell ** ((2 - p) / 2)
    target = (p - 6) / (p - 2) * b

    residuals = {}
    tilde = solve_increasing(
        "mu_tilde",
        [(p * K * b ** ((p - 2) / 4), (p - 2) / 4), (p * c_ell, (p - 2) / 2)],
        1.0,
    )
    residuals["mu_tilde"] = tilde.residual

    per_index = {}
    eigen = {}
    for k in indices:
        lam_k, lam_prev = spec.eigenvalue(k), spec.eigenvalue(k - 1)
        eigen[k] = {"lambda_k": lam_k, "lambda_k_minus_1": lam_prev}
        hat = solve_increasing(f"mu_hat_{k}", [(lam_k, 1.0), (2 * c_ell, p / 2)], target)
        bar = solve_increasing(
            f"mu_bar_{k}",
            [(lam_k, 2 * (p - 2) / (p - 6)), (2 * c_ell, (p - 2) ** 2 / (2 * (p - 6)))],
            target,
        )
        star = solve_increasing(
            f"mu_star_{k}",
            [(2 * (c_ell + K * lam_k ** ((p - 2) / 4)), (p - 2) / 2)],
            lam_k - lam_prev,
        )
        entry = {"mu_hat": hat.value, "mu_bar": bar.value, "mu_star": star.value,
                 "mu_star_gap": star.value}
        for rec in (hat, bar, star):
            residuals[rec.name] = rec.residual
        if k == 2:
            alt = solve_increasing(
                "mu_star_alt",
                [(2 * ((p - 1) / p * c_ell + K * lam2 ** ((p - 2) / 4)), (p - 2) / 2)],
                lam2,
            )
            residuals[alt.name] = alt.residual
            entry["mu_star_alt"] = alt.value
            # two forms of this bound are in circulation; keep the smaller
            entry["mu_star"] = min(star.value, alt.value)
        entry["mu_check"] = min(entry["mu_hat"], entry["mu_bar"], entry["mu_star"], tilde.value)
        entry["c_lower_bar"] = c_lower_bar(lam_k, mu, p, K, ell)
        per_index[k] = entry

    mu1 = mu1_value(ell, lam2, p)
    mu_j = min([mu1] + [per_index[k]["mu_check"] for k in indices])
    return ThresholdReport(
        p=p, mu=mu, ell=ell, K=K, b=b, rho_star=rs, M1=m1, M2=m2, mu1=mu1,
        mu_tilde=tilde.value, per_index=per_index, mu_j=mu_j, indices=indices,
        residuals=residuals, eigenvalues=eigen, K_provenance=provenance,
    )


def defining_equations(report: ThresholdReport, spec: SpectralData) -> dict[str, tuple[float, float]]:
    """Re-evaluate each defining equation at its reported root: ``name -> (lhs, rhs)``.

    Written out term by term, independently of :func:`solve_increasing`.
    """
    p, K, ell = report.p, report.K, report.ell
    c_ell = ell ** ((2 - p) / 2)
    base = (p - 6) / (p - 2) * (2 / ((p - 2) * K)) ** (4 / (p - 6))
    out = {}
    m = report.mu_tilde
    out["mu_tilde"] = (
        p * K * (2 / ((p - 2) * K)) ** ((p - 2) / (p - 6)) * m ** ((p - 2) / 4)
        + p * c_ell * m ** ((p - 2) / 2),
        1.0,
    )
    lam2 = spec.eigenvalue(2)
    for k, e in report.per_index.items():
        lk, lp = spec.eigenvalue(k), spec.eigenvalue(k - 1)
        m = e["mu_hat"]
        out[f"mu_hat_{k}"] = (lk * m + 2 * c_ell * m ** (p / 2), base)
        m = e["mu_bar"]
        out[f"mu_bar_{k}"] = (
            lk * m ** (2 * (p - 2) / (p - 6)) + 2 * c_ell * m ** ((p - 2) ** 2 / (2 * (p - 6))),
            base,
        )
        m = e["mu_star_gap"]
        out[f"mu_star_{k}"] = (2 * (c_ell + K * lk ** ((p - 2) / 4)) * m ** ((p - 2) / 2), lk - lp)
        if "mu_star_alt" in e:
            m = e["mu_star_alt"]
            out["mu_star_alt"] = (
                2 * ((p - 1) / p * c_ell + K * lam2 ** ((p - 2) / 4)) * m ** ((p - 2) / 2),
                lam2,
            )
    return out
