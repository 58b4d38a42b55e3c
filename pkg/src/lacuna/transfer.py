"""Singularity analysis: from local singular terms to coefficient asymptotics.

A term ``C (1 - z/omega)^alpha log(1 - z/omega)^r`` contributes

    omega^-n n^(-alpha-1) (-1)^r log(n)^r C / Gamma(-alpha)

to the n-th Taylor coefficient at leading order.  Terms with ``alpha`` a
nonnegative integer and ``r = 0`` are entire and contribute nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from flint import acb, arb, fmpq

from .balls import (
    AlgebraicNumber,
    as_fmpq,
    ball_elementary,
    ball_to_json,
    gamma,
    to_ball,
    working_precision,
)
from .continuation import ConnectionResult
from .dfinite import LocalSolution

__all__ = [
    "SingularTerm",
    "AsymptoticTerm",
    "AsymptoticExpansion",
    "RealAsymptoticForm",
    "singular_terms",
    "to_one_minus_form",
    "term_asymptotics",
    "combine",
    "realify",
    "predict_terms",
]


def _point_ball(w, prec: int) -> acb:
    return w.ball(prec) if isinstance(w, AlgebraicNumber) else to_ball(w)


@dataclass(frozen=True)
class SingularTerm:
    """``constant * X^alpha * log(X)^log_power`` at ``point``.

    ``form`` is ``"x"`` for ``X = z - point`` and ``"one_minus"`` for
    ``X = 1 - z/point``.
    """

    point: object
    alpha: fmpq
    log_power: int
    constant: acb
    form: str = "x"


@dataclass(frozen=True)
class AsymptoticTerm:
    """``constant * growth^n * n^power * log(n)^log_power``."""

    growth: acb
    power: fmpq
    log_power: int
    constant: acb

    def to_json(self) -> dict:
        return {
            "growth": ball_to_json(self.growth),
            "power": str(self.power),
            "log_power": self.log_power,
            "constant": ball_to_json(self.constant),
        }

    def evaluate(self, n: int) -> acb:
        v = self.growth ** n * to_ball(self.constant)
        v *= acb(n).pow(acb(arb(self.power)))
        if self.log_power:
            v *= acb(n).log() ** self.log_power
        return v


@dataclass
class AsymptoticExpansion:
    """Sum of dominant terms with error ``O(modulus^n n^error_power)``."""

    terms: list
    modulus: arb
    error_power: fmpq | None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "terms": [t.to_json() for t in self.terms],
            "modulus": self.modulus.str(20),
            "error_power": None if self.error_power is None else str(self.error_power),
        }

    def evaluate(self, n: int) -> acb:
        total = acb(0)
        for t in self.terms:
            total += t.evaluate(n)
        return total


@dataclass(frozen=True)
class RealAsymptoticForm:
    """``amplitude * rho^n * n^power * cos(n theta + phase)``."""

    rho: arb
    theta: arb
    power: fmpq
    amplitude: arb
    phase: arb
    error_power: fmpq

    def evaluate(self, n: int) -> arb:
        return (
            self.amplitude
            * self.rho ** n
            * arb(n) ** arb(self.power)
            * (self.theta * n + self.phase).cos()
        )

    def to_terms(self) -> tuple[AsymptoticTerm, AsymptoticTerm]:
        """The two conjugate complex terms this form is the sum of."""
        g = acb(self.rho * self.theta.cos(), self.rho * self.theta.sin())
        c = acb(self.amplitude * self.phase.cos(), self.amplitude * self.phase.sin()) / 2
        return (
            AsymptoticTerm(g, self.power, 0, c),
            AsymptoticTerm(g.conjugate(), self.power, 0, c.conjugate()),
        )

    def to_json(self) -> dict:
        def s(x):
            return x.str(20, radius=False)

        return {
            "rho": s(self.rho),
            "theta": s(self.theta),
            "power": str(self.power),
            "amplitude": s(self.amplitude),
            "phase": s(self.phase),
            "error_power": str(self.error_power),
        }


def _is_nonneg_int(a: fmpq) -> bool:
    return a.q == 1 and a >= 0


def singular_terms(
    connection: ConnectionResult,
    far_basis: Sequence[LocalSolution],
    order: int = 1,
    prec: int = 256,
) -> list[SingularTerm]:
    """Singular terms of the connected solution at its far point.

    Only basis elements that are not analytic (non-integer exponent or a
    logarithm) contribute; for each, the first ``order`` nonzero terms of
    its expansion are returned, scaled by the connection constant.
    """
    with working_precision(prec):
        return _singular_terms(connection, far_basis, order)


def _singular_terms(connection, far_basis, order):
    out = []
    for C, b in zip(connection.constants, far_basis):
        if _is_nonneg_int(b.exponent) and b.max_log == 0:
            continue
        if to_ball(C).is_zero():
            continue
        taken = 0
        for j, row in enumerate(b.coeffs):
            if taken >= order:
                break
            alpha = b.exponent + j
            nonzero = False
            for l, c in enumerate(row):
                cb = to_ball(c)
                if cb.is_zero():
                    continue
                if _is_nonneg_int(alpha) and l == 0:
                    continue
                out.append(SingularTerm(b.base, alpha, l, to_ball(C) * cb))
                nonzero = True
            taken += nonzero
    return out


def to_one_minus_form(term: SingularTerm, prec: int = 256) -> list[SingularTerm]:
    """Rewrite ``(z - omega)^alpha log(z - omega)^r`` in powers of ``1 - z/omega``.

    Uses ``z - omega = (-omega)(1 - z/omega)`` with principal branches, which
    is exact on the slit disk around ``omega`` cut along the ray away from the
    origin.  A logarithm splits binomially.
    """
    if term.form == "one_minus":
        return [term]
    with working_precision(prec):
        w = _point_ball(term.point, prec)
        mw = -w
        factor = ball_elementary("pow_rational", mw, term.alpha)
        if term.log_power == 0:
            return [SingularTerm(term.point, term.alpha, 0, term.constant * factor, "one_minus")]
        L = ball_elementary("log", mw)
        r = term.log_power
        return [
            SingularTerm(
                term.point,
                term.alpha,
                i,
                term.constant * factor * math.comb(r, i) * L ** (r - i),
                "one_minus",
            )
            for i in range(r + 1)
        ]


def term_asymptotics(term: SingularTerm, prec: int = 256) -> list[AsymptoticTerm]:
    """Leading coefficient asymptotics of one singular term.

    Returns an empty list for entire terms.  Integer exponents combined with
    logarithms (where ``1/Gamma(-alpha)`` vanishes) are not supported.
    """
    terms = to_one_minus_form(term, prec)
    out = []
    with working_precision(prec):
        w = _point_ball(term.point, prec)
        for t in terms:
            a = as_fmpq(t.alpha)
            if _is_nonneg_int(a):
                if t.log_power == 0:
                    continue
                raise NotImplementedError("logarithmic terms with integer exponent")
            const = t.constant / gamma(-a)
            if t.log_power % 2:
                const = -const
            out.append(AsymptoticTerm(1 / w, -a - 1, t.log_power, const))
    return out


def combine(terms: Sequence[AsymptoticTerm], prec: int = 256) -> AsymptoticExpansion:
    """Sum contributions from singularities on one circle.

    The error term is one power of ``n`` below the leading power.  Terms of
    different growth moduli must be separated by the caller.
    """
    if not terms:
        return AsymptoticExpansion([], arb(0), None)
    with working_precision(prec):
        mods = [abs(to_ball(t.growth)) for t in terms]
        for m in mods[1:]:
            if not m.overlaps(mods[0]):
                raise ValueError("terms have different growth moduli")
        best = max(t.power for t in terms)
        ordered = sorted(terms, key=lambda t: (-t.power, float(to_ball(t.growth).imag.mid()) < 0))
        return AsymptoticExpansion(ordered, mods[0], best - 1)


def realify(pair, prec: int = 256) -> RealAsymptoticForm:
    """Merge a conjugate pair of terms into ``C rho^n n^beta cos(n theta + phi)``.

    ``pair`` is either two :class:`AsymptoticTerm` objects or an expansion
    whose leading power is carried by exactly two terms.
    """
    if isinstance(pair, AsymptoticExpansion):
        top = max(x.power for x in pair.terms)
        lead = [t for t in pair.terms if t.power == top]
        err = pair.error_power
    else:
        lead = list(pair)
        err = None
    with working_precision(prec):
        if len(lead) != 2:
            raise ValueError(f"expected a conjugate pair of leading terms, found {len(lead)}")
        t1, t2 = lead
        g1, g2 = to_ball(t1.growth), to_ball(t2.growth)
        if g1.overlaps(g1.conjugate()):
            raise ValueError("growth is (possibly) real: not a pair of distinct conjugate points")
        if not (
            g1.overlaps(g2.conjugate())
            and to_ball(t1.constant).overlaps(to_ball(t2.constant).conjugate())
            and t1.power == t2.power
            and t1.log_power == t2.log_power == 0
        ):
            raise ValueError("terms are not complex conjugates")
        if float(g1.imag.mid()) < 0:
            t1, g1 = t2, g2
        c = to_ball(t1.constant)
        return RealAsymptoticForm(
            rho=abs(g1),
            theta=g1.arg(),
            power=as_fmpq(t1.power),
            amplitude=2 * abs(c),
            phase=c.arg(),
            error_power=err if err is not None else as_fmpq(t1.power) - 1,
        )


def predict_terms(expansion: AsymptoticExpansion, ns: Sequence[int], prec: int = 256) -> list[arb]:
    """Real parts of the leading-order prediction at each ``n``."""
    with working_precision(prec):
        return [expansion.evaluate(int(n)).real for n in ns]
