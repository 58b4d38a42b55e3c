"""A thin scikit-learn style front end over the pipeline stages.

``fit`` takes the rational function (and optionally its diagonal ODE) and
runs critical-point analysis plus, when an ODE is given, the connection and
transfer stages.  ``predict`` evaluates the resulting asymptotic expansion.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted
from flint import arb

from .balls import digits_to_bits, working_precision
from .critical import symmetry_classes
from .pipeline import dominant_singularities, parse_target, stage_asymptotics, stage_connect, stage_critical, stage_resolve
from .transfer import predict_terms
from .validation import (
    check_digits,
    check_direction,
    check_n_values,
    check_ode,
    check_rational_function,
)

__all__ = ["DiagonalAsymptotics"]


class DiagonalAsymptotics(BaseEstimator):
    """Leading asymptotics of the diagonal coefficients of ``F = P/Q^k``.

    Parameters
    ----------
    direction : str or sequence of int
        Lattice direction ``r``; default is the main diagonal.
    digits : int
        Decimal digits requested from the connection problem.
    target : str
        Near-basis element at the origin representing the diagonal (``"a3"``).
    unit_expr : str, optional
        Closed-form unit constant; when given, ``multiplicity_`` is resolved.
    seed : int
        Seed for the multistart critical-point solver.

    Attributes
    ----------
    critical_report_ : CriticalReport
    c1_, c2_ : arb
        Two highest critical heights.
    connections_ : list of ConnectionResult
    expansion_ : AsymptoticExpansion
    real_form_ : RealAsymptoticForm or None
    multiplicity_ : int or None
    """

    def __init__(self, direction=None, digits=50, target="a3", unit_expr=None, seed=0):
        self.direction = direction
        self.digits = digits
        self.target = target
        self.unit_expr = unit_expr
        self.seed = seed

    def fit(self, X, y=None):
        """Fit on a rational function ``X`` and (optionally) its diagonal ODE ``y``."""
        F = check_rational_function(X)
        ode = check_ode(y)
        digits = check_digits(self.digits)
        r = check_direction(self.direction if self.direction is not None else [1] * F.dim, F.dim)
        self.n_features_in_ = F.dim
        prec = max(256, digits_to_bits(digits) + 64)
        sym = symmetry_classes(F.Q, r) is not None
        _, rep = stage_critical(F, r, 256, self.seed, symmetric=sym)
        self.critical_report_ = rep
        self.c1_, self.c2_ = rep.c1, rep.c2
        self.connections_ = None
        self.expansion_ = None
        self.real_form_ = None
        self.multiplicity_ = None
        if ode is not None:
            target = parse_target(self.target, ode.order)
            dom = dominant_singularities(ode, prec)
            _, conns = stage_connect(ode, target, dom, digits)
            self.prec_ = conns[0].metadata["prec_bits"]
            _, expansion, real = stage_asymptotics(ode, conns, self.prec_)
            self.connections_ = conns
            self.expansion_ = expansion
            self.real_form_ = real
            if self.unit_expr:
                self.multiplicity_ = stage_resolve(expansion.terms, self.unit_expr, self.prec_)["m"]
        return self

    def predict(self, n):
        """Leading-order predictions of ``a_n`` as real balls (object array).

        Values are returned as ``arb`` because they overflow double precision
        quickly (``|a_n|`` grows like ``9^n`` for the bundled example).
        """
        check_is_fitted(self, "expansion_")
        if self.expansion_ is None:
            raise ValueError("the estimator was fitted without an ODE; nothing to predict")
        ns = check_n_values(n)
        vals = predict_terms(self.expansion_, [int(k) for k in ns], self.prec_)
        out = np.empty(len(vals), dtype=object)
        out[:] = vals
        return out

    def score(self, n, y):
        """One minus the mean relative error of ``predict(n)`` against exact ``y``."""
        pred = self.predict(n)
        with working_precision(self.prec_):
            errs = [float(abs(p / arb(int(v)) - 1).mid()) for p, v in zip(pred, y)]
        return 1.0 - float(np.mean(errs))
