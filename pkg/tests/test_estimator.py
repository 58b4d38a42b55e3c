from __future__ import annotations

import numpy as np
import pytest
from flint import fmpq
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lacuna.estimator import DiagonalAsymptotics
from lacuna.pipeline import bundled
from lacuna.poly import LaurentPoly, RatFun, as_laurent
from lacuna.validation import check_box, check_digits, check_direction, check_n_values, check_rational_function


@pytest.fixture(scope="module")
def fitted(grz_unit_expr):
    est = DiagonalAsymptotics(unit_expr=grz_unit_expr)
    return est.fit(bundled("grz.json"), bundled("grz_ode.json"))


def test_params_round_trip():
    est = DiagonalAsymptotics(digits=30, seed=4)
    params = est.get_params()
    assert params == {"direction": None, "digits": 30, "target": "a3", "unit_expr": None, "seed": 4}
    est.set_params(digits=40)
    assert clone(est).digits == 40


def test_fit_predict_score(fitted, grz_sequence):
    assert fitted.n_features_in_ == 4
    assert fitted.multiplicity_ == 3
    assert fitted.real_form_.power == fmpq(-3, 2)
    pred = fitted.predict([200, 400])
    assert pred.dtype == object and len(pred) == 2
    assert fitted.score([200, 400], [grz_sequence[200], grz_sequence[400]]) > 0.99


def test_fit_without_ode(grz):
    est = DiagonalAsymptotics().fit(grz)
    assert est.critical_report_.lacuna is True
    assert est.expansion_ is None
    with pytest.raises(ValueError):
        est.predict([10])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DiagonalAsymptotics().predict([10])


def test_validation_helpers(grz):
    with pytest.raises(ValueError):
        check_rational_function(RatFun(LaurentPoly.constant(1, 1), as_laurent([((1,), 1)])))
    with pytest.raises(TypeError):
        check_rational_function(3)
    assert check_rational_function(grz.to_json()).dim == 4
    with pytest.raises(ValueError):
        check_direction("1,1,1", 4)
    with pytest.raises(ValueError):
        check_direction([1, -1, 1, 1], 4)
    assert check_direction([2, 2, 2, 2], 4).ints() == [2, 2, 2, 2]
    assert list(check_n_values(5)) == [5]
    assert check_n_values([1.0, 2.0]).dtype.kind == "i"
    for bad in ([0], [1.5], np.zeros((2, 2))):
        with pytest.raises(ValueError):
            check_n_values(bad)
    with pytest.raises(ValueError):
        check_digits(9)
    with pytest.raises(ValueError):
        check_box(200, 4)
    assert check_box(12, 4) == 12


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        DiagonalAsymptotics(digits=5).fit(bundled("grz.json"))
    with pytest.raises(ValueError):
        DiagonalAsymptotics(direction="1,1").fit(bundled("grz.json"))
