from __future__ import annotations

import math
from fractions import Fraction

import pytest
from flint import acb, arb, fmpq, fmpq_poly
from hypothesis import given, settings
from hypothesis import strategies as st

from lacuna.balls import (
    AlgebraicNumber,
    BranchCutError,
    PoleError,
    as_fmpq,
    ball_elementary,
    ball_from_json,
    ball_to_json,
    gamma,
    isolate_roots,
    to_ball,
    working_precision,
)

fractions = st.fractions(min_value=-50, max_value=50, max_denominator=200)


# ---------------------------------------------------------------------------
# isolate_roots


def test_isolate_quadratic_from_ode_leading_factor():
    roots = isolate_roots(fmpq_poly([1, 14, 81]), 256)
    assert len(roots) == 2
    s2 = arb(2).sqrt()
    expected = [acb(-7, -4 * s2) / 81, acb(-7, 4 * s2) / 81]
    for r, e in zip(roots, expected):
        assert r.ball(256).overlaps(e)
        with working_precision(256):
            assert (81 * r.ball(256) ** 2 + 14 * r.ball(256) + 1).contains(0)


def test_isolate_double_root_at_zero():
    roots = isolate_roots(fmpq_poly([0, 0, 1]))
    assert len(roots) == 1
    assert roots[0].multiplicity == 2
    assert roots[0].is_rational() and roots[0].exact() == 0


def test_isolate_elimination_polynomial():
    p = fmpq_poly([-1, 3]) ** 2 * fmpq_poly([1, 2, 3])
    roots = isolate_roots(p, 256)
    assert sum(r.multiplicity for r in roots) == p.degree()
    rational = [r for r in roots if r.is_rational()]
    assert len(rational) == 1 and rational[0].exact() == fmpq(1, 3) and rational[0].multiplicity == 2
    s2 = arb(2).sqrt()
    zeta = acb(-1, s2) / 3
    cplx = [r.ball(256) for r in roots if not r.is_rational()]
    assert any(c.overlaps(zeta) for c in cplx)
    assert any(c.overlaps(zeta.conjugate()) for c in cplx)


def test_isolate_zero_polynomial_rejected():
    with pytest.raises(ValueError):
        isolate_roots(fmpq_poly([]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=2, max_size=7))
def test_isolation_completeness(coeffs):
    p = fmpq_poly(coeffs)
    if p.degree() < 1:
        return
    roots = isolate_roots(p, 128)
    assert sum(r.multiplicity for r in roots) == p.degree()
    with working_precision(128):
        for r in roots:
            z = r.ball(128)
            val = acb(0)
            for c in reversed(p.coeffs()):
                val = val * z + acb(arb(c))
            assert val.contains(0)


def test_algebraic_conjugate():
    r = isolate_roots(fmpq_poly([1, 14, 81]))[1]
    c = r.conjugate()
    assert c.ball(128).overlaps(r.ball(128).conjugate())
    assert not c.ball(128).overlaps(r.ball(128))


# ---------------------------------------------------------------------------
# gamma


def test_gamma_examples():
    with working_precision(128):
        assert gamma(1).overlaps(acb(1))
        sqrt_pi = arb.pi().sqrt()
        assert gamma(fmpq(-1, 2)).overlaps(acb(-2 * sqrt_pi))
        assert gamma(fmpq(1, 2)).overlaps(acb(sqrt_pi))
        assert abs(float(gamma(fmpq(1, 2)).real.mid()) - 1.7724538509055159) < 1e-15


@pytest.mark.parametrize("alpha", [0, -1, -2, fmpq(-7)])
def test_gamma_poles_rejected(alpha):
    with pytest.raises(PoleError):
        gamma(alpha)


@settings(max_examples=50, deadline=None)
@given(fractions)
def test_gamma_recurrence(q):
    a = as_fmpq(q)
    if a.q == 1 and a <= 0:
        return
    with working_precision(128):
        assert gamma(a + 1).overlaps(acb(arb(a)) * gamma(a))


# ---------------------------------------------------------------------------
# elementary functions


def test_elementary_examples():
    with working_precision(128):
        assert ball_elementary("sqrt", 4).overlaps(acb(2))
        assert ball_elementary("log", 1).overlaps(acb(0))
        s2 = arb(2).sqrt()
        x = acb(-8, -2 * s2)
        r = ball_elementary("sqrt", x)
        assert (r * r).overlaps(x)
        assert r.real > 0  # principal root


def test_elementary_branch_cut():
    with working_precision(64):
        straddle = acb(arb(-1), arb(0, 1e-3))
        with pytest.raises(BranchCutError):
            ball_elementary("log", straddle)
        with pytest.raises(BranchCutError):
            ball_elementary("sqrt", acb(arb(0, 1e-3)))
        # exact negative reals take the value from above
        assert ball_elementary("sqrt", -4).overlaps(acb(0, 2))


def test_pow_rational():
    with working_precision(128):
        assert ball_elementary("pow_rational", 8, fmpq(2, 3)).overlaps(acb(4))
        assert ball_elementary("pow_rational", 0, fmpq(1, 2)).is_zero()
        with pytest.raises(PoleError):
            ball_elementary("pow_rational", 0, fmpq(-1, 2))


# ---------------------------------------------------------------------------
# soundness and precision monotonicity


def _expr(x, y):
    return (x * x - y) / (x + 3) + x * y * y


@settings(max_examples=40, deadline=None)
@given(fractions, fractions)
def test_enclosure_soundness(a, b):
    if a == -3:
        return
    exact = as_fmpq(_expr(Fraction(a), Fraction(b)))
    with working_precision(4000):
        tight = acb(arb(exact))  # radius ~2^-4000, far below any tested radius
    for prec in (30, 64, 200):
        with working_precision(prec):
            x, y = to_ball(as_fmpq(a)), to_ball(as_fmpq(b))
            assert _expr(x, y).contains(tight)


@settings(max_examples=30, deadline=None)
@given(fractions, fractions)
def test_precision_monotonicity(a, b):
    if a == -3:
        return
    rads = []
    for prec in (32, 64, 128, 256):
        with working_precision(prec):
            v = _expr(to_ball(as_fmpq(a)), to_ball(as_fmpq(b)))
            rads.append(max(float(v.real.rad()), float(v.imag.rad())))
    assert all(r2 <= r1 for r1, r2 in zip(rads, rads[1:]))


def test_json_round_trip_is_enclosing():
    with working_precision(200):
        z = acb(arb.pi(), arb(2).sqrt() / 3)
        d = ball_to_json(z, 200)
        back = ball_from_json(d)
        assert back.contains(z)
        assert set(d) == {"mid_re", "mid_im", "rad", "prec_bits"}
        assert ball_to_json(z, 200) == d


def test_working_precision_restores():
    from flint import ctx

    before = ctx.prec
    with working_precision(1000):
        assert ctx.prec == 1000
    assert ctx.prec == before


def test_algebraic_number_type():
    r = isolate_roots(fmpq_poly([-2, 0, 1]))
    assert all(isinstance(x, AlgebraicNumber) for x in r)
    assert r[1].ball(100).overlaps(acb(arb(2).sqrt()))
    assert math.isclose(float(r[1].ball(64).real.mid()), math.sqrt(2))
