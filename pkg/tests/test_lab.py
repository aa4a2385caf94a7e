import math
import warnings

import numpy as np
import pytest

from graphnls.exceptions import OracleUnavailable
from graphnls.graph import assemble, interval
from graphnls.lab import (
    counterexample_scenario,
    cone_neighborhood_scenario,
    fixed_point_scenario,
    flow_invariance_check,
    halfspace_scenario,
    limit_check,
    mirror_pde_scenario,
    orthant_scenario,
    patched_scenario,
    quarter_circle_scenario,
    rotating_cap_scenario,
    set_oracle_checks,
)


@pytest.fixture(scope="module")
def orthant():
    return orthant_scenario()


def test_orthant_limit_check_on_boundary(orthant):
    u = orthant.normalize(np.array([0.0, 1.0, 2.0, 1.0]))
    table = limit_check(orthant, u)
    assert table.passed and table.values[-1] <= 1e-6


def test_orthant_invariance(orthant):
    starts = orthant.sample_starts(30, seed=1)
    rep = flow_invariance_check(orthant, starts)
    assert rep.passed and rep.max_violation <= 1e-8
    assert set_oracle_checks(orthant, 2000)["convexity_violations"] == 0


def test_counterexample_fails():
    sc = counterexample_scenario()
    table = limit_check(sc, sc.section(None))
    assert not table.passed
    assert min(table.values) > 0.1
    assert set_oracle_checks(sc, 500)["scaling_violations"] > 0


def test_fixed_point_gives_zero_table():
    sc = fixed_point_scenario()
    table = limit_check(sc, sc.normalize(np.ones(sc.n)))
    assert table.passed and max(table.values) == 0.0


def test_missing_projection_oracle(orthant):
    from dataclasses import replace

    sc = replace(orthant, project=None)
    with pytest.raises(OracleUnavailable):
        limit_check(sc, orthant.normalize(np.ones(orthant.n)))


@pytest.mark.parametrize("make", [
    cone_neighborhood_scenario,
    lambda: halfspace_scenario([[1, 0.2, 0, 0], [0, 1, -0.3, 0.1], [0.2, 0, 1, 0.5]]),
    quarter_circle_scenario,
])
def test_convex_scenarios_invariant(make):
    sc = make()
    starts = sc.sample_starts(10, seed=2)
    assert flow_invariance_check(sc, starts).max_violation <= 1e-8
    oracles = set_oracle_checks(sc, 500)
    assert oracles["convexity_violations"] == 0 and oracles["scaling_violations"] == 0


def test_rotating_cap_first_order_drift():
    sc = rotating_cap_scenario()
    starts = [sc.witness(np.array([1.0, 0.0, 1.0])), sc.normalize(np.array([0.3, 0.5, 1.0]))]
    rep = flow_invariance_check(sc, starts, richardson=True)
    assert rep.max_violation > 1e-8
    assert rep.richardson_ratio == pytest.approx(2.0, rel=0.1)


def test_patch_violations_are_localised(orthant):
    sc = patched_scenario(orthant)
    rep = flow_invariance_check(sc, orthant.sample_starts(40, seed=3))
    bad = [v > 1e-8 for v in rep.per_start]
    assert any(bad)
    assert all(e for b, e in zip(bad, rep.entered_patch) if b)


def test_digest_stable():
    assert orthant_scenario().digest() == orthant_scenario().digest()
    assert orthant_scenario().digest() != orthant_scenario(n=5).digest()


def test_mirror_scenario(spec_interval, report_small):
    d = assemble(interval(), 16)
    mu = report_small.mu
    sc = mirror_pde_scenario(d, 7.0, mu, 0.05 * math.sqrt(mu))
    kap = math.sqrt(mu / d.graph.total_length)
    u = -d.constant(kap) * (1 + 0.01 * np.cos(np.arange(d.n_dofs)))
    u = d.normalize(u, mu)
    assert sc.lambda_u(u) >= 0
    out = sc.check([u])
    assert out["all_passed"] and out["negative_lambda_u"] == 0
    big = mirror_pde_scenario(d, 7.0, 20.0, 0.1)
    v = d.constant(math.sqrt(20.0 / d.graph.total_length))
    assert big.check([v])["negative_lambda_u"] == 1
    with pytest.raises(ValueError):
        mirror_pde_scenario(assemble(interval(), 64), 7.0, mu, 0.01)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        mirror_pde_scenario(d, 7.0, mu, 1.0, separation_cap=0.1)
    assert w
