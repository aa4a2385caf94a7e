import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphnls.exceptions import DisconnectedGraph, EmptyGraph, InvalidExponent, NonPositiveLength
from graphnls.graph import assemble, build_graph, interval, load_graph, loop, star
from graphnls.spectrum import eigenpairs


def test_total_lengths():
    assert interval().total_length == pytest.approx(math.pi, rel=0, abs=1e-15)
    assert star(3).total_length == 3.0


@pytest.mark.parametrize(
    "desc, exc",
    [
        ({"edges": [{"from": "a", "to": "b", "length": 0.0}]}, NonPositiveLength),
        ({"edges": [{"from": "a", "to": "b", "length": -1.0}]}, NonPositiveLength),
        ({"edges": []}, EmptyGraph),
        ({"edges": [{"from": "a", "to": "b", "length": 1.0}, {"from": "c", "to": "d", "length": 1.0}]},
         DisconnectedGraph),
    ],
)
def test_invalid_graphs(desc, exc):
    with pytest.raises(exc):
        build_graph(desc)


def test_two_cell_hand_assembly():
    d = assemble(interval(1.0), 2, mass_scheme="consistent")
    h = 0.5
    A = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]) / h
    M = h / 6 * np.array([[2, 1, 0], [1, 4, 1], [0, 1, 2]])
    # vertex DOFs come first, then the interior node
    order = [0, 2, 1]
    assert np.allclose(d.A.toarray()[np.ix_(order, order)], A, atol=1e-14)
    assert np.allclose(d.M.toarray()[np.ix_(order, order)], M, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(length=st.floats(0.1, 10.0), cells=st.integers(1, 40),
       scheme=st.sampled_from(["blended", "consistent"]))
def test_mass_matrix_integrates_constants(length, cells, scheme):
    d = assemble(interval(length), cells, mass_scheme=scheme)
    one = np.ones(d.n_dofs)
    assert d.mass(one) == pytest.approx(length, rel=1e-13)
    assert np.abs(d.A @ one).max() < 1e-10 * cells / length
    assert abs(d.A - d.A.T).max() == 0 and abs(d.M - d.M.T).max() == 0


def test_integrate_power_constant_and_zero(d_interval):
    mu, p = 0.7, 7.0
    ell = d_interval.graph.total_length
    u = d_interval.constant(math.sqrt(mu / ell))
    assert d_interval.integrate_power(u, p) == pytest.approx(ell * (mu / ell) ** (p / 2), rel=1e-13)
    assert d_interval.integrate_power(np.zeros(d_interval.n_dofs), p) == 0.0
    with pytest.raises(InvalidExponent):
        d_interval.integrate_power(u, 0.5)


def _cos4(cells):
    d = assemble(interval(), cells)
    x = d.edge_coordinates(0)
    u = np.empty(d.n_dofs)
    u[d.edge_dofs[0]] = math.sqrt(2 / math.pi) * np.cos(x)
    return d.integrate_power(u, 4)


def test_cos4_integral_and_rate():
    exact = 3 / (2 * math.pi)
    errs = [abs(_cos4(n) - exact) for n in (32, 64, 128)]
    assert errs[-1] / exact < 1e-3
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


def test_mean_value(d_interval):
    assert d_interval.mean_value(d_interval.constant(2.5)) == pytest.approx(2.5, rel=1e-14)
    s = eigenpairs(d_interval, 3)
    assert abs(d_interval.mean_value(s.eigenfunction(2))) < 1e-12
    rng = np.random.default_rng(3)
    x = d_interval.edge_coordinates(0)
    half = rng.choice([-1.0, 1.0], size=len(x) // 2)
    vals = np.concatenate((half, [0.0], -half[::-1])) if len(x) % 2 else np.concatenate((half, -half[::-1]))
    u = np.empty(d_interval.n_dofs)
    u[d_interval.edge_dofs[0]] = vals
    assert abs(d_interval.mean_value(u)) < 1e-14


def test_nonlinear_load_is_gradient(three_graphs):
    rng = np.random.default_rng(0)
    p = 7.0
    for d in three_graphs.values():
        u = rng.standard_normal(d.n_dofs)
        v = rng.standard_normal(d.n_dofs)
        h = 1e-6
        fd = (d.integrate_power(u + h * v, p) - d.integrate_power(u - h * v, p)) / (2 * h * p)
        assert fd == pytest.approx(float(d.nonlinear_load(u, p) @ v), rel=1e-7)
        J = d.nonlinear_jacobian(u, p)
        fdj = (d.nonlinear_load(u + h * v, p) - d.nonlinear_load(u - h * v, p)) / (2 * h)
        assert np.allclose(J @ v, fdj, rtol=1e-6, atol=1e-8 * np.abs(fdj).max())


def test_solve_h1(three_graphs):
    rng = np.random.default_rng(1)
    for d in three_graphs.values():
        b = rng.standard_normal(d.n_dofs)
        x = d.solve_h1(b)
        assert np.linalg.norm(d.S @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_loop_minimum_cells_and_continuity():
    d = assemble(loop(), 1)
    assert d.cells == (3,)
    nodes = d.edge_dofs[0]
    assert nodes[0] == nodes[-1]


def test_load_graph_and_digest(tmp_path):
    desc = {"vertices": ["hub", "a", "b", "c"],
            "edges": [{"from": "hub", "to": v, "length": 1.0} for v in "abc"]}
    path = tmp_path / "star.json"
    path.write_text(json.dumps(desc))
    g = load_graph(path)
    assert g.digest() == build_graph(desc).digest()
    assert g.degree("hub") == 3
    assert g.digest() != interval().digest()


def test_normalize_and_sign_changes(d_interval):
    x = d_interval.edge_coordinates(0)
    u = np.empty(d_interval.n_dofs)
    u[d_interval.edge_dofs[0]] = np.cos(2 * x)
    v = d_interval.normalize(u, 0.3)
    assert d_interval.mass(v) == pytest.approx(0.3, rel=1e-15)
    assert d_interval.sign_changes_along_edges(v) == 2


def test_kirchhoff_flux_small_for_smooth_eigenfunction():
    d = assemble(star(3), 64)
    s = eigenpairs(d, 4)
    assert np.abs(d.vertex_flux(s.eigenfunction(2))).max() < 0.1
