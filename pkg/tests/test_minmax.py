import math

import numpy as np
import pytest

from graphnls.exceptions import InadmissibleIndex
from graphnls.functional import ProblemParams, compute_thresholds
from graphnls.minmax import (
    build_cap,
    find_sign_changing,
    level_estimates,
    link_sanity_check,
    solution_digest,
    solve_ladder,
    sphere_grid,
)
from graphnls.spectrum import eigenpairs

P = 7.0


@pytest.fixture(scope="module")
def nu_small(report_small):
    # well below half the cone distance of any sample in the k = 2 cap interior
    return 1e-3 * math.sqrt(report_small.mu)


@pytest.fixture(scope="module")
def sol2(spec_interval, report_small, nu_small):
    cap = build_cap(spec_interval, 2, report_small.mu)
    return find_sign_changing(cap, report_small, P, nu_small, seed=0)


@pytest.mark.parametrize("dim, density", [(1, 8), (2, 8), (3, 6)])
def test_sphere_grid_on_unit_sphere(dim, density):
    pts = sphere_grid(dim, density)
    assert pts.shape[1] == dim + 1
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
    assert len(np.unique(np.round(pts, 10), axis=0)) == len(pts)


def test_cap_geometry(spec_interval, mu_small):
    cap = build_cap(spec_interval, 3, mu_small)
    d = spec_interval.disc
    F = cap.fields()
    masses = np.einsum("ij,ij->j", F, d.M @ F)
    assert np.allclose(masses, mu_small, rtol=1e-12)
    assert (cap.params[:, -1] >= 0).all() and cap.boundary.any()
    with pytest.raises(ValueError):
        build_cap(spec_interval, 2, mu_small, grid_density=4)


def test_cap_rejects_degenerate_index(d_loop):
    s = eigenpairs(d_loop, 6)
    with pytest.raises(InadmissibleIndex):
        build_cap(s, 3, 0.1)


def test_level_gate(spec_interval, kest_interval, report_small):
    rep = level_estimates(build_cap(spec_interval, 2, report_small.mu), report_small, P)
    assert rep.in_regime and rep.separation_ok
    assert rep.c_lower_bar > rep.c_underbar
    big = compute_thresholds(ProblemParams(P, 2.0), kest_interval, spec_interval, (2,))
    rep = level_estimates(build_cap(spec_interval, 2, 2.0), big, P)
    assert not rep.in_regime and not rep.separation_ok
    with pytest.raises(ValueError):
        level_estimates(build_cap(spec_interval, 2, 1.0), report_small, P)


def test_link_sanity(spec_interval, mu_small):
    cap = build_cap(spec_interval, 2, mu_small)
    assert link_sanity_check(cap, 20) == 1.0
    with pytest.raises(ValueError):
        link_sanity_check(build_cap(spec_interval, 3, mu_small))


def test_sign_changing_solution(sol2, report_small):
    mu = report_small.mu
    assert sol2.residual <= 1e-7
    assert sol2.sign_changes == 1 and sol2.sign_certified and not sol2.is_constant
    lo, hi = sol2.level_bracket
    slack = 1e-12 * mu
    assert lo - slack <= sol2.energy <= hi + slack
    assert sol2.lambda_u >= 0
    assert -sol2.pde_lambda == pytest.approx(1.0, rel=1e-2)


def test_deterministic(spec_interval, report_small, nu_small, sol2):
    again = find_sign_changing(build_cap(spec_interval, 2, report_small.mu), report_small, P, nu_small, seed=0)
    assert np.array_equal(again.u, sol2.u)
    assert again.to_dict() == sol2.to_dict()
    assert solution_digest(again) == solution_digest(sol2)


def test_mirror(sol2):
    m = sol2.mirror()
    assert np.array_equal(m.u, -sol2.u) and m.energy == sol2.energy
    assert m.nodal_max == -sol2.nodal_min


def test_ladder_two_indices(spec_interval, kest_interval, report_unit):
    mu = 0.5 * min(report_unit.mu_check(2), report_unit.mu_check(3), report_unit.mu1)
    rep = compute_thresholds(ProblemParams(P, mu), kest_interval, spec_interval, (2, 3))
    nu = 1e-3 * math.sqrt(mu)
    ladder = solve_ladder(spec_interval, rep, (2, 3), P, nu)
    a, b = ladder.sign_changing
    assert a.energy < b.energy
    assert (a.sign_changes, b.sign_changes) == (1, 2)
    assert ladder.positive.is_constant and ladder.positive.kind == "positive"
    out = ladder.to_dict(coefficients=False)
    assert "coefficients" not in out["positive"]
