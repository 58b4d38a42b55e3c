"""Exact rationals, complex balls and algebraic numbers.

All floating-point work in the package goes through :class:`flint.acb`
(midpoint-radius complex balls from Arb) and all exact scalars are
:class:`flint.fmpq`.  This module adds the few things the rest of the
package needs on top of python-flint: a precision context, principal-branch
elementary functions that refuse to straddle the branch cut, Gamma with pole
rejection, root isolation returning :class:`AlgebraicNumber` objects, and a
JSON form for balls.
"""

from __future__ import annotations

import contextlib
import math
from decimal import Decimal
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from flint import acb, arb, ctx, fmpq, fmpq_poly, fmpz_poly

__all__ = [
    "BigRational",
    "ComplexBall",
    "DEFAULT_PREC",
    "MAX_PREC",
    "AlgebraicNumber",
    "BranchCutError",
    "PoleError",
    "PrecisionError",
    "as_fmpq",
    "to_ball",
    "working_precision",
    "current_precision",
    "ball_elementary",
    "gamma",
    "isolate_roots",
    "ball_to_json",
    "ball_from_json",
    "ball_max_rad",
    "contains_zero",
    "digits_to_bits",
]

BigRational = fmpq
ComplexBall = acb

DEFAULT_PREC = 256
MAX_PREC = 8192


class PrecisionError(ArithmeticError):
    """Enclosures are too wide to decide the requested question."""


class BranchCutError(ValueError):
    """A ball straddles the principal branch cut or a singular point."""


class PoleError(ValueError):
    """Argument is a pole of the function being evaluated."""


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * math.log2(10)))


@contextlib.contextmanager
def working_precision(bits: int) -> Iterator[int]:
    """Temporarily set the Arb working precision (in bits)."""
    old = ctx.prec
    ctx.prec = int(bits)
    try:
        yield int(bits)
    finally:
        ctx.prec = old


def current_precision() -> int:
    return ctx.prec


def as_fmpq(x) -> fmpq:
    """Coerce int / Fraction / fmpq / ``"p/q"`` strings to :class:`fmpq`."""
    if isinstance(x, fmpq):
        return x
    if isinstance(x, int):
        return fmpq(x)
    if isinstance(x, Fraction):
        return fmpq(x.numerator, x.denominator)
    if isinstance(x, str):
        f = Fraction(x.strip())
        return fmpq(f.numerator, f.denominator)
    if hasattr(x, "p") and hasattr(x, "q"):
        return fmpq(int(x.p), int(x.q))
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def to_ball(x) -> acb:
    """Enclose ``x`` in an acb.

    Accepts exact rationals, ints, floats, arb, acb, algebraic numbers and
    ``(re, im)`` pairs of rationals (an exact complex rational point).
    Rationals are rounded at the current working precision.
    """
    if isinstance(x, acb):
        return x
    if isinstance(x, arb):
        return acb(x)
    if isinstance(x, (fmpq, Fraction, int)):
        q = as_fmpq(x)
        return acb(arb(q))
    if isinstance(x, complex):
        return acb(x.real, x.imag)
    if isinstance(x, float):
        return acb(x)
    if isinstance(x, AlgebraicNumber):
        return x.ball(ctx.prec)
    if isinstance(x, tuple) and len(x) == 2:
        return acb(arb(as_fmpq(x[0])), arb(as_fmpq(x[1])))
    raise TypeError(f"cannot enclose {x!r}")


def ball_max_rad(z: acb) -> arb:
    """Radius of ``z`` in the max metric (larger of real and imaginary radii)."""
    rr = z.real.rad()
    ri = z.imag.rad()
    return rr if rr >= ri else ri


def contains_zero(z) -> bool:
    return bool(to_ball(z).contains(0))


def _straddles_cut(x: acb) -> bool:
    # Exact points on the negative axis take the value from above (Arb's
    # convention); only genuine balls crossing the axis are rejected.
    if x.imag.is_exact() and x.imag == 0:
        return False
    return bool(x.imag.contains(0)) and not bool(x.real > 0)


def ball_elementary(op: str, x, exponent=None) -> acb:
    """Principal-branch elementary functions on complex balls.

    ``op`` is one of ``sqrt, log, exp, pow_rational, cos, atan2``.  For
    ``pow_rational`` the exponent must be an exact rational; ``atan2``
    returns the argument of ``x`` as a (real) ball.  The branch cut of
    ``sqrt``, ``log`` and ``pow_rational`` is the closed negative real axis;
    a ball crossing it raises :class:`BranchCutError`.
    """
    x = to_ball(x)
    if op == "exp":
        return x.exp()
    if op == "cos":
        return x.cos()
    if op in ("sqrt", "log", "pow_rational", "atan2"):
        if x.contains(0) and not (op in ("sqrt", "pow_rational") and x.is_zero()):
            raise BranchCutError(f"{op}: argument ball contains the branch point 0")
        if op != "atan2" and _straddles_cut(x):
            raise BranchCutError(f"{op}: argument ball straddles the negative real axis")
    if op == "sqrt":
        return x.sqrt()
    if op == "log":
        return x.log()
    if op == "atan2":
        if _straddles_cut(x):
            raise BranchCutError("atan2: argument ball straddles the negative real axis")
        return acb(x.arg())
    if op == "pow_rational":
        if exponent is None:
            raise ValueError("pow_rational needs an exponent")
        e = as_fmpq(exponent)
        if x.is_zero():
            if e > 0:
                return acb(0)
            raise PoleError("zero raised to a nonpositive power")
        if e.q == 1:
            return x ** int(e.p)
        return x.pow(acb(arb(e)))
    raise ValueError(f"unknown elementary operation {op!r}")


def gamma(alpha) -> acb:
    """Enclosure of Gamma(alpha); nonpositive integers are rejected."""
    if isinstance(alpha, (int, Fraction, fmpq)):
        q = as_fmpq(alpha)
        if q.q == 1 and q <= 0:
            raise PoleError(f"Gamma has a pole at {q}")
        return acb(arb(q)).gamma()
    z = to_ball(alpha)
    if z.imag.contains(0) and z.real.contains_integer():
        re = z.real
        if not bool(re > 0) and (re.unique_fmpz() is None or re.unique_fmpz() <= 0):
            raise PoleError("Gamma argument ball may contain a pole")
    return z.gamma()


# ---------------------------------------------------------------------------
# algebraic numbers


def _poly_eval_ball(p: fmpq_poly, z: acb) -> acb:
    acc = acb(0)
    for c in reversed(p.coeffs()):
        acc = acc * z + acb(arb(c))
    return acc


def _krawczyk_isolates(p: fmpq_poly, box: acb) -> bool:
    """Interval Newton/Krawczyk test for a unique root of ``p`` in ``box``."""
    dp = p.derivative()
    mid = acb(box.mid())
    dmid = _poly_eval_ball(dp, mid)
    if dmid.contains(0):
        return False
    y = 1 / acb(dmid.mid())
    kbox = mid - y * _poly_eval_ball(p, mid) + (1 - y * _poly_eval_ball(dp, box)) * (box - mid)
    return bool(box.contains_interior(kbox)) if hasattr(box, "contains_interior") else bool(box.contains(kbox))


@dataclass(frozen=True)
class AlgebraicNumber:
    """A root of an irreducible rational polynomial, isolated by a ball.

    Attributes
    ----------
    min_poly : fmpq_poly
        Monic irreducible polynomial over Q.
    enclosure : acb
        Ball containing exactly one root of ``min_poly``.
    multiplicity : int
        Multiplicity of the root in the polynomial it was isolated from.
    """

    min_poly: fmpq_poly
    enclosure: acb
    multiplicity: int = 1

    @property
    def degree(self) -> int:
        return self.min_poly.degree()

    def is_rational(self) -> bool:
        return self.degree == 1

    def exact(self) -> fmpq:
        """Exact value for degree-one minimal polynomials."""
        if not self.is_rational():
            raise ValueError("algebraic number is not rational")
        c = self.min_poly.coeffs()
        return -c[0] / c[1]

    def is_real(self) -> bool:
        # Real iff the conjugate ball also isolates this root; with real
        # coefficients a ball symmetric about the axis containing one root
        # must contain a real root.
        if self.is_rational():
            return True
        return bool(self.enclosure.imag.contains(0)) and self._conj_isolated()

    def _conj_isolated(self) -> bool:
        c = self.enclosure.conjugate()
        return bool(self.enclosure.overlaps(c))

    def ball(self, prec: int | None = None) -> acb:
        """Enclosure refined to (at least) ``prec`` bits of working precision."""
        if self.is_rational():
            return acb(arb(self.exact()))
        prec = prec or ctx.prec
        target = 2.0 ** (-prec + 4)
        z = self.enclosure
        with working_precision(prec + 20):
            for _ in range(200):
                if float(ball_max_rad(z).mid()) <= target * max(1.0, abs(complex(z.mid()))):
                    break
                z = self._newton_step(z)
        return z

    def _newton_step(self, box: acb) -> acb:
        p, dp = self.min_poly, self.min_poly.derivative()
        mid = acb(box.mid())
        dbox = _poly_eval_ball(dp, box)
        if dbox.contains(0):
            # Box still too wide for interval Newton: fall back on bisection
            # by recomputing isolation at higher precision.
            roots = fmpz_poly(_primitive_int_coeffs(p)).complex_roots()
            best = [r for r, _ in roots if r.overlaps(box)]
            if len(best) != 1:
                raise PrecisionError("lost isolation while refining root")
            return best[0]
        nb = mid - _poly_eval_ball(p, mid) / dbox
        if not nb.overlaps(box):
            raise PrecisionError("interval Newton left the isolating box")
        return _intersect(nb, box)

    def conjugate(self) -> "AlgebraicNumber":
        return AlgebraicNumber(self.min_poly, self.enclosure.conjugate(), self.multiplicity)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlgebraicNumber):
            return NotImplemented
        if self.min_poly.gcd(other.min_poly).degree() < 1:
            return False
        return bool(self.enclosure.overlaps(other.enclosure))

    def __hash__(self) -> int:
        return hash(str(self.min_poly))

    def __repr__(self) -> str:
        return f"AlgebraicNumber({self.min_poly}, {self.enclosure})"


def _intersect(a: acb, b: acb) -> acb:
    def one(x: arb, y: arb) -> arb:
        lo = max(x.lower(), y.lower())
        hi = min(x.upper(), y.upper())
        if lo > hi:
            return x
        return arb((lo + hi) / 2, (hi - lo) / 2)

    return acb(one(a.real, b.real), one(a.imag, b.imag))


def _primitive_int_coeffs(p: fmpq_poly) -> list[int]:
    den = p.denom()
    return [int(c * den) for c in p.coeffs()]


def isolate_roots(p, prec: int = DEFAULT_PREC, max_prec: int = MAX_PREC) -> list[AlgebraicNumber]:
    """All complex roots of a rational polynomial, with multiplicities.

    The polynomial is factored over Q; each irreducible factor's roots are
    isolated by Arb and then re-certified with a Krawczyk test.  Roots are
    returned sorted by (real part, imaginary part) of their midpoints.
    """
    if not isinstance(p, fmpq_poly):
        p = fmpq_poly([as_fmpq(c) for c in p])
    if p.is_zero():
        raise ValueError("cannot isolate the roots of the zero polynomial")
    out: list[AlgebraicNumber] = []
    _, factors = p.factor()
    bits = prec
    while True:
        out.clear()
        ok = True
        with working_precision(bits):
            for fac, mult in factors:
                monic = fac / fac.coeffs()[-1]
                if monic.degree() == 1:
                    r = -monic.coeffs()[0]
                    out.append(AlgebraicNumber(monic, acb(arb(r)), mult))
                    continue
                roots = fmpz_poly(_primitive_int_coeffs(monic)).complex_roots()
                for r, _m in roots:
                    if not _krawczyk_isolates(monic, r):
                        # Arb's own isolation is rigorous; the Krawczyk test
                        # is a second check that can fail on tiny balls.
                        if not _poly_eval_ball(monic, r).contains(0):
                            ok = False
                    out.append(AlgebraicNumber(monic, r, mult))
        balls = [a.enclosure for a in out]
        disjoint = all(
            not balls[i].overlaps(balls[j])
            for i in range(len(balls))
            for j in range(i + 1, len(balls))
        )
        if ok and disjoint:
            break
        bits *= 2
        if bits > max_prec:
            raise PrecisionError("root enclosures still overlap at maximum precision")
    out.sort(key=lambda a: (float(a.enclosure.real.mid()), float(a.enclosure.imag.mid())))
    return out


# ---------------------------------------------------------------------------
# serialization


def _arb_decimal(x: arb, digits: int) -> tuple[str, arb]:
    """Decimal midpoint string and the extra radius lost to rounding it."""
    s = x.mid().str(digits, radius=False)
    back = arb(s)
    err = abs(back.mid() - x.mid()) + back.rad()
    return s, err


def _decimal_upper(r: arb) -> str:
    if r.is_zero():
        return "0"
    s = r.upper().str(10, radius=False).strip("[]").split("+/-")[0].strip()
    return str((Decimal(s) * Decimal("1.000001")).normalize())


def ball_to_json(z, prec: int | None = None) -> dict:
    """Serialize a ball as decimal strings (enclosure preserving)."""
    z = to_ball(z)
    prec = prec or ctx.prec
    digits = max(5, int(prec * math.log10(2)) + 3)
    with working_precision(prec + 64):
        re, ere = _arb_decimal(z.real, digits)
        im, eim = _arb_decimal(z.imag, digits)
        rad = ball_max_rad(z) + (ere if ere >= eim else eim)
    return {"mid_re": re, "mid_im": im, "rad": _decimal_upper(rad), "prec_bits": int(prec)}


def ball_from_json(d: dict) -> acb:
    prec = int(d.get("prec_bits", ctx.prec))
    with working_precision(prec + 64):
        rad = arb(d["rad"])
        re = arb(d["mid_re"])
        im = arb(d["mid_im"])
        rr = rad + re.rad()
        ri = rad + im.rad()
        return acb(arb(re.mid(), rr.upper()), arb(im.mid(), ri.upper()))
