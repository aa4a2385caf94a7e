import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from graphnls.estimators import BifurcationBranch, BoundStateSolver
from graphnls.exceptions import InadmissibleIndex, InvalidExponent
from graphnls.graph import interval


@pytest.fixture(scope="module")
def fitted():
    return BoundStateSolver(k=2, cells=32, n_k_samples=40).fit(interval())


def test_params_roundtrip():
    est = BoundStateSolver(p=8.0, k=3)
    assert est.get_params()["p"] == 8.0
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    est.set_params(mu=1e-4)
    assert est.mu == 1e-4


def test_fit_attributes(fitted):
    assert fitted.solution_.sign_changes == 1
    assert fitted.energy_ == fitted.solution_.energy
    assert fitted.coef_.shape == (fitted.disc_.n_dofs,)
    assert fitted.thresholds_.regime_violations() == []


def test_predict_matches_nodes(fitted):
    d = fitted.disc_
    x = d.edge_coordinates(0)
    vals = fitted.predict(np.column_stack((np.zeros(len(x)), x)))
    assert np.allclose(vals, d.edge_values(fitted.coef_, 0))
    mid = fitted.predict([[0, 0.5 * (x[3] + x[4])]])
    assert mid[0] == pytest.approx(0.5 * (vals[3] + vals[4]))
    with pytest.raises(ValueError):
        fitted.predict([[1, 0.0]])
    with pytest.raises(ValueError):
        fitted.predict([[0, 100.0]])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        BoundStateSolver().predict([[0, 0.0]])
    with pytest.raises(NotFittedError):
        BifurcationBranch().transform()


def test_positive_mode():
    est = BoundStateSolver(k=1, cells=32, n_k_samples=40).fit(interval())
    assert est.solution_.kind == "positive" and est.solution_.is_constant


def test_validation_errors():
    with pytest.raises(InvalidExponent):
        BoundStateSolver(p=5).fit(interval())
    with pytest.raises(InadmissibleIndex):
        BoundStateSolver(k=3, cells=32, n_k_samples=10).fit("loop")


def test_branch_estimator():
    est = BifurcationBranch(k=2, cells=32, n_k_samples=40, mu_start=1e-2).fit("interval")
    rows = est.transform()
    assert rows.shape == (8, len(est.columns))
    assert est.verdict_.passed
    assert est.target_ == pytest.approx(1.0, rel=1e-3)
