import math

import numpy as np
import pytest

from graphnls.graph import assemble, interval, star
from graphnls.spectrum import SpectralData, eigenpairs, spectral_gap_indices


def test_interval_neumann_spectrum(spec_interval):
    s = spec_interval
    assert abs(s.eigenvalue(1)) < 1e-10
    for k in range(2, 8):
        assert s.eigenvalue(k) == pytest.approx((k - 1) ** 2, rel=5e-4)


def test_first_eigenfunction_is_flat(spec_interval):
    phi = spec_interval.eigenfunction(1)
    assert np.allclose(phi, 1 / math.sqrt(math.pi), rtol=1e-8)


def test_m_orthonormal(spec_interval):
    V = spec_interval.vectors
    G = V.T @ (spec_interval.disc.M @ V)
    assert np.allclose(G, np.eye(V.shape[1]), atol=1e-10)


def test_refinement_converges():
    errs = []
    for n in (16, 32, 64):
        s = eigenpairs(assemble(interval(), n), 4)
        errs.append(abs(s.eigenvalue(4) - 9.0))
    assert errs[0] > errs[1] > errs[2]


def test_loop_double_pairs(d_loop):
    s = eigenpairs(d_loop, 7)
    vals = s.values
    assert abs(vals[0]) < 1e-10
    for a, b, target in ((1, 2, 1.0), (3, 4, 4.0), (5, 6, 9.0)):
        assert abs(vals[a] - vals[b]) <= 1e-6 * vals[b]
        assert vals[a] == pytest.approx(target, rel=1e-3)
    assert spectral_gap_indices(s) == [2, 4, 6]


def test_star_spectrum_oracle():
    # Kirchhoff hub, Neumann leaves, unit edges: (pi/2)^2 twice, pi^2 once, (3pi/2)^2 twice
    s = eigenpairs(assemble(star(3), 128), 6)
    expect = [0.0, (math.pi / 2) ** 2, (math.pi / 2) ** 2, math.pi ** 2, (1.5 * math.pi) ** 2,
              (1.5 * math.pi) ** 2]
    assert np.allclose(s.values, expect, rtol=1e-4, atol=1e-10)
    assert spectral_gap_indices(s) == [2, 4, 5]


def test_interval_gaps_all_simple(spec_interval):
    assert spectral_gap_indices(spec_interval) == list(range(2, spec_interval.k + 1))


def test_block_interior_indices_excluded(spec_interval):
    fake = SpectralData(np.array([0.0, 2.0, 2.0, 2.0, 5.0]), spec_interval.vectors[:, :5],
                        spec_interval.disc, 0, "synthetic")
    assert spectral_gap_indices(fake) == [2, 5]


def test_deterministic(d_interval):
    a = eigenpairs(d_interval, 6, seed=4)
    b = eigenpairs(d_interval, 6, seed=4)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.vectors, b.vectors)


def test_metadata_and_basis(spec_interval):
    meta = spec_interval.metadata()
    assert len(meta["eigenvalues"]) == spec_interval.k
    assert spec_interval.basis(3).shape == (spec_interval.disc.n_dofs, 3)
