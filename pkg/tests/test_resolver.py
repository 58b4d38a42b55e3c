from __future__ import annotations

import math

import pytest
from flint import acb, arb, fmpq

from lacuna.balls import PrecisionError, working_precision
from lacuna.pipeline import stage_asymptotics, stage_resolve
from lacuna.resolver import (
    TemplateMismatchError,
    drop_report,
    evaluate_expression,
    resolve_multiplicity,
)


@pytest.fixture(scope="module")
def grz_expansion(grz_ode, grz_connections):
    prec = grz_connections[0].metadata["prec_bits"]
    return stage_asymptotics(grz_ode, grz_connections, prec)[1], prec


def test_expression_grammar():
    with working_precision(128):
        assert evaluate_expression("2^(1/2)", 128).overlaps(acb(arb(2).sqrt()))
        assert evaluate_expression("sqrt(-4)", 128).overlaps(acb(0, 2))
        assert evaluate_expression("(1 + I)**2", 128).overlaps(acb(0, 2))
        assert evaluate_expression("pi^(3/2) / pi", 128).overlaps(acb(arb.pi().sqrt()))
        assert evaluate_expression("-7/2 + 3", 128).overlaps(acb(fmpq(-1, 2)))
    for bad in ("exp(1)", "x + 1", "2^pi", "sqrt(1, 2)", "1.5"):
        with pytest.raises(ValueError):
            evaluate_expression(bad)


def test_resolve_examples():
    u = acb(arb(fmpq(1, 3)), arb(fmpq(2, 7)))
    assert resolve_multiplicity(u, u).m == 1
    assert resolve_multiplicity(5 * u, u).m == 5
    with pytest.raises(TemplateMismatchError):
        resolve_multiplicity(u * fmpq(12, 5), u)
    with pytest.raises(TemplateMismatchError):
        resolve_multiplicity(-2 * u, u)
    with pytest.raises(PrecisionError):
        resolve_multiplicity(acb(arb(1, 1e-3)), acb(1))
    with pytest.raises(ValueError):
        resolve_multiplicity(acb(1), acb(arb(0, 1)))


def test_grz_multiplicity(grz_expansion, grz_unit_expr):
    exp, prec = grz_expansion
    out = stage_resolve(exp.terms, grz_unit_expr, prec)
    assert out["m"] == 3
    labels = {r["paired_with"] for r in out["results"]}
    assert labels == {"unit", "conjugate"}
    assert all(r["residual_upper"] < 1e-9 for r in out["results"])


def test_grz_numeric_as_unit_and_mismatch(grz_expansion):
    exp, prec = grz_expansion
    c = exp.terms[0].constant
    assert resolve_multiplicity(c, c).m == 1
    with pytest.raises(TemplateMismatchError):
        resolve_multiplicity(c, c / fmpq(12, 5))


def test_grz_scale_consistency(grz_expansion, grz_unit_expr):
    exp, prec = grz_expansion
    unit = evaluate_expression(grz_unit_expr, prec)
    for t in exp.terms:
        for u in (unit, unit.conjugate()):
            try:
                m = resolve_multiplicity(t.constant, u).m
            except TemplateMismatchError:
                continue
            assert resolve_multiplicity(2 * t.constant, u).m == 2 * m
            assert resolve_multiplicity(t.constant, u / 3).m == 3 * m


def test_grz_precision_stability(grz_expansion, grz_unit_expr):
    exp, prec = grz_expansion
    a = stage_resolve(exp.terms, grz_unit_expr, prec)
    b = stage_resolve(exp.terms, grz_unit_expr, 2 * prec)
    assert a["m"] == b["m"] == 3


def test_drop_examples():
    seq = [2**n for n in range(60)]
    rep = drop_report(seq, math.log(4), math.log(2), 59)
    assert rep.diagnostics[0.1]["bounded"] and rep.diagnostics[0.01]["bounded"]
    assert abs(rep.gap_c2) < 1e-12 and abs(rep.gap_c1 - math.log(2)) < 1e-12
    seq = [3**n for n in range(60)]
    rep = drop_report(seq, math.log(4), math.log(2), 59)
    assert not rep.diagnostics[0.1]["bounded"]
    with pytest.raises(ValueError):
        drop_report([1, 2, 3], 1, 0)


def test_grz_drop(grz_sequence):
    c1, c2 = math.log(81), math.log(9)
    rep = drop_report(grz_sequence, c1, c2, 200)
    assert abs(math.exp(rep.rates[200]) - 8.629) < 1e-3
    assert rep.gap_c1 > 2
    off = {n: rep.rates[n] - c2 for n in range(100, 201)}
    outside = sorted(n for n, v in off.items() if abs(v) > 0.1)
    # n = 100 sits at -0.110, just outside the band
    assert outside == [100]
    assert abs(off[100] + 0.110) < 5e-3
