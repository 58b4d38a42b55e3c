"""Linear ODEs with polynomial coefficients: local bases and recurrences.

An operator ``L = sum_i p_i(z) D^i`` is rewritten around a point ``w`` in
the local variable ``x = z - w`` as ``L = sum_s x^s Q_s(theta)`` with
``theta = x d/dx``.  The lowest nonvanishing ``Q_s`` is the indicial
polynomial; the others drive the Frobenius recurrence.  Exact arithmetic
(in Q, or in Q(w) modulo the minimal polynomial of ``w``) is used for every
structural decision; series coefficients at irrational points are then
computed in ball arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from flint import acb, arb, fmpq, fmpq_poly

from .balls import AlgebraicNumber, as_fmpq, isolate_roots, to_ball, working_precision
from .poly import LaurentPoly

__all__ = [
    "ODE",
    "Recurrence",
    "LocalSolution",
    "IndicialData",
    "IrregularSingularityError",
    "indicial_polynomial",
    "frobenius_basis",
    "ode_to_recurrence",
    "recurrence_extend",
    "verify_annihilation",
    "local_operator",
    "residual",
]


class IrregularSingularityError(ValueError):
    """The point is an irregular singular point of the operator."""


def _poly(p) -> fmpq_poly:
    if isinstance(p, fmpq_poly):
        return p
    if isinstance(p, LaurentPoly):
        return p.to_univariate()
    return fmpq_poly([as_fmpq(c) for c in p])


@dataclass(frozen=True)
class ODE:
    """``p_r f^(r) + ... + p_1 f' + p_0 f = 0`` with rational polynomial ``p_i``."""

    coeffs: tuple

    def __post_init__(self):
        cs = tuple(_poly(p) for p in self.coeffs)
        if not cs or cs[-1].is_zero():
            raise ValueError("the leading coefficient p_r must not vanish identically")
        object.__setattr__(self, "coeffs", cs)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> fmpq_poly:
        return self.coeffs[-1]

    @property
    def max_degree(self) -> int:
        return max(p.degree() for p in self.coeffs)

    def singular_points(self, prec: int = 256) -> list[AlgebraicNumber]:
        return isolate_roots(self.leading, prec)

    def apply_to_series(self, c: Sequence) -> list:
        """Coefficients of ``L f`` for the truncated power series ``f = sum c_n z^n``."""
        return [r for r in _apply_series(self, list(c))]

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "coeffs": [LaurentPoly.from_univariate(p).to_json() for p in self.coeffs],
        }

    @classmethod
    def from_json(cls, d) -> "ODE":
        cs = tuple(LaurentPoly.from_json(p).to_univariate() for p in d["coeffs"])
        if "order" in d and int(d["order"]) != len(cs) - 1:
            raise ValueError("'order' does not match the number of coefficients")
        return cls(cs)

    @classmethod
    def load(cls, path) -> "ODE":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _falling(poly_shift: int, i: int) -> fmpq_poly:
    """(n + shift)(n + shift - 1)...(n + shift - i + 1) as a polynomial in n."""
    out = fmpq_poly([1])
    for k in range(i):
        out = out * fmpq_poly([poly_shift - k, 1])
    return out


def _apply_series(ode: ODE, c: list) -> list:
    n = len(c)
    out = [fmpq(0)] * n
    for i, p in enumerate(ode.coeffs):
        # i-th derivative of the series, then multiply by p
        der = [c[m + i] * math.perm(m + i, i) for m in range(n - i)] if i < n else []
        for a, pa in enumerate(p.coeffs()):
            if pa == 0:
                continue
            for m, v in enumerate(der):
                if a + m < n:
                    out[a + m] += pa * v
    return out


# ---------------------------------------------------------------------------
# recurrences


@dataclass(frozen=True)
class Recurrence:
    """``sum_{j=0}^{s} q_j(n) c_{n+j} = 0`` for every integer ``n`` (``c_k = 0`` for ``k < 0``)."""

    coeffs: tuple

    def __post_init__(self):
        cs = tuple(_poly(q) for q in self.coeffs)
        if not cs or cs[-1].is_zero():
            raise ValueError("leading recurrence coefficient must not vanish identically")
        object.__setattr__(self, "coeffs", cs)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def residual(self, seq: Sequence, n: int):
        """Left-hand side at ``n`` (terms with negative index count as 0)."""
        acc = fmpq(0)
        for j, q in enumerate(self.coeffs):
            k = n + j
            if 0 <= k < len(seq):
                acc += q(fmpq(n)) * seq[k]
            elif k >= len(seq):
                raise IndexError("sequence too short for this residual")
        return acc

    def to_json(self) -> dict:
        return {"order": self.order, "coeffs": [[f"{c}" for c in q.coeffs()] for q in self.coeffs]}


def ode_to_recurrence(ode: ODE) -> Recurrence:
    """Recurrence satisfied by the Taylor coefficients at 0 of analytic solutions.

    ``z^a D^i`` sends ``sum c_n z^n`` to ``sum c_n n^(i falling) z^(n - i + a)``,
    so the coefficient of ``z^m`` in ``L f`` gathers ``c_{m+s}`` with
    ``s = i - a``.
    """
    contrib: dict[int, fmpq_poly] = {}
    pairs = []
    for i, p in enumerate(ode.coeffs):
        for a, pa in enumerate(p.coeffs()):
            if pa != 0:
                pairs.append((i, a, pa))
    smin = min(i - a for i, a, _ in pairs)
    for i, a, pa in pairs:
        j = i - a - smin
        contrib[j] = contrib.get(j, fmpq_poly([])) + pa * _falling(j, i)
    order = max(contrib)
    coeffs = [contrib.get(j, fmpq_poly([])) for j in range(order + 1)]
    return Recurrence(tuple(coeffs))


def recurrence_extend(rec: Recurrence, initial: Sequence, N: int) -> list[fmpq]:
    """Extend ``initial`` to indices ``0..N`` using the recurrence (exactly)."""
    seq = [as_fmpq(x) for x in initial]
    s = rec.order
    lead = rec.coeffs[-1]
    low = rec.coeffs[:-1]
    for idx in range(len(seq), N + 1):
        n = idx - s
        qs = lead(fmpq(n))
        if qs == 0:
            raise ValueError(
                f"leading coefficient vanishes at index {idx}; supply initial terms through {idx}"
            )
        acc = fmpq(0)
        for j, q in enumerate(low):
            k = n + j
            if k >= 0:
                acc += q(fmpq(n)) * seq[k]
        seq.append(-acc / qs)
    return seq[: N + 1]


def verify_annihilation(ode: ODE, series: Sequence) -> bool:
    """Exact check that ``series`` satisfies the ODE's recurrence on its window."""
    rec = ode_to_recurrence(ode)
    seq = [as_fmpq(x) for x in series]
    if len(seq) <= ode.order + ode.max_degree:
        raise ValueError("series window too short to be conclusive")
    s = rec.order
    for n in range(-s, len(seq) - s):
        if rec.residual(seq, n) != 0:
            return False
    return True


# ---------------------------------------------------------------------------
# local operators


class _Point:
    """Base point of a local expansion with exact structural arithmetic.

    ``kind`` is ``"rational"`` (exact fmpq elements), ``"algebraic"``
    (elements are fmpq_poly reduced modulo the minimal polynomial), or
    ``"ball"`` (ordinary points given only as enclosures).
    """

    def __init__(self, point):
        if isinstance(point, AlgebraicNumber) and point.is_rational():
            point = point.exact()
        if isinstance(point, (int, fmpq)) or type(point).__name__ == "Fraction":
            self.kind = "rational"
            self.value = as_fmpq(point)
            self.alg = None
        elif isinstance(point, AlgebraicNumber):
            self.kind = "algebraic"
            self.alg = point
            self.value = None
        else:
            self.kind = "ball"
            self.value = to_ball(point)
            self.alg = None

    def shifted(self, p: fmpq_poly, k: int):
        """Coefficient of x^k in p(w + x)."""
        dk = p
        for _ in range(k):
            dk = dk.derivative()
        dk = dk / math.factorial(k) if k else dk
        if self.kind == "rational":
            return dk(self.value)
        if self.kind == "algebraic":
            return dk % self.alg.min_poly
        acc = acb(0)
        for c in reversed(dk.coeffs()):
            acc = acc * self.value + acb(arb(c))
        return acc

    def is_zero(self, e) -> bool:
        if self.kind == "rational":
            return e == 0
        if self.kind == "algebraic":
            return e.is_zero()
        if e.contains(0):
            if e.is_zero():
                return True
            raise ArithmeticError("cannot decide whether a ball coefficient vanishes")
        return False

    def zero(self):
        return fmpq(0) if self.kind == "rational" else (fmpq_poly([]) if self.kind == "algebraic" else acb(0))

    def numeric(self, e, prec: int):
        """Numeric value: exact fmpq when possible, otherwise an acb."""
        if self.kind == "rational":
            return e
        if self.kind == "algebraic":
            if e.degree() < 1:
                return e.coeffs()[0] if e.degree() == 0 else fmpq(0)
            w = self.alg.ball(prec)
            acc = acb(0)
            for c in reversed(e.coeffs()):
                acc = acc * w + acb(arb(c))
            return acc
        return e

    def ball(self, prec: int) -> acb:
        if self.kind == "rational":
            return acb(arb(self.value))
        if self.kind == "algebraic":
            return self.alg.ball(prec)
        return self.value

    def is_ordinary(self, ode: ODE) -> bool:
        return not self.is_zero(self.shifted(ode.leading, 0))

    def __repr__(self):
        return f"_Point({self.kind}, {self.value if self.alg is None else self.alg})"


@dataclass
class LocalOperator:
    """``L = sum_{t >= 0} x^(s0 + t) Q_{s0+t}(theta)`` around ``point``."""

    point: _Point
    s0: int
    Q: list  # Q[t] = list of coefficients (in theta) of Q_{s0+t}, structural elements
    order: int

    @property
    def indicial(self) -> list:
        return self.Q[0]


def _theta_falling(i: int) -> fmpq_poly:
    return _falling(0, i)


def local_operator(ode: ODE, point) -> LocalOperator:
    pt = point if isinstance(point, _Point) else _Point(point)
    r = ode.order
    if pt.kind == "ball" and not pt.is_ordinary(ode):
        raise ValueError("ball base points must be certified ordinary points")
    # e[i][k] = coefficient of x^k in p_i(w + x)
    e = [[pt.shifted(p, k) for k in range(p.degree() + 1)] for p in ode.coeffs]
    val = {}
    for i, row in enumerate(e):
        nz = [k for k, c in enumerate(row) if not pt.is_zero(c)]
        if nz:
            val[i] = nz[0]
    s0 = min(v - i for i, v in val.items())
    if val[r] - r != s0:
        raise IrregularSingularityError(
            f"Fuchs criterion fails at {pt}: indicial polynomial has degree < {r}"
        )
    smax = max(len(row) - 1 - i for i, row in enumerate(e))
    Q = []
    for s in range(s0, smax + 1):
        coeffs = [pt.zero() for _ in range(r + 1)]
        for i in range(r + 1):
            k = s + i
            if 0 <= k < len(e[i]):
                c = e[i][k]
                ff = _theta_falling(i).coeffs()
                for deg, fc in enumerate(ff):
                    coeffs[deg] = coeffs[deg] + c * fc
        if pt.kind == "algebraic":
            coeffs = [c % pt.alg.min_poly for c in coeffs]
        Q.append(coeffs)
    return LocalOperator(pt, s0, Q, r)


# ---------------------------------------------------------------------------
# indicial polynomial


@dataclass
class IndicialData:
    """Indicial polynomial at a point and its roots.

    ``exact`` is the monic indicial polynomial when its coefficients are
    rational (always the case at rational points, and at algebraic points
    of Fuchsian equations with rational exponents).  ``roots`` lists exact
    rational roots with multiplicities; ``irrational_roots`` holds
    enclosures of any remaining roots.
    """

    coefficients: list  # ball coefficients, low degree first
    exact: fmpq_poly | None
    roots: list  # [(fmpq, multiplicity)]
    irrational_roots: list = field(default_factory=list)

    def root_multiplicity(self, x: fmpq) -> int:
        for rho, m in self.roots:
            if rho == x:
                return m
        return 0


def _field_inverse(e: fmpq_poly, m: fmpq_poly) -> fmpq_poly:
    g, s, _t = e.xgcd(m)
    if g.degree() != 0:
        raise ZeroDivisionError("element is not invertible modulo the minimal polynomial")
    return (s / g.coeffs()[0]) % m


def _indicial_from_operator(op: LocalOperator, prec: int) -> IndicialData:
    pt = op.point
    coeffs = op.indicial
    balls = [to_ball(pt.numeric(c, prec)) for c in coeffs]
    exact = None
    if pt.kind == "rational":
        exact = fmpq_poly(list(coeffs))
        exact = exact / exact.coeffs()[-1]
    elif pt.kind == "algebraic":
        m = pt.alg.min_poly
        inv = _field_inverse(coeffs[-1], m)
        normed = [(c * inv) % m for c in coeffs]
        if all(c.degree() < 1 for c in normed):
            exact = fmpq_poly([c.coeffs()[0] if c.degree() == 0 else fmpq(0) for c in normed])
    else:
        # ordinary ball point: p_r(w) theta^(r falling)
        exact = _theta_falling(op.order)
    roots, others = [], []
    if exact is not None:
        for a in isolate_roots(exact, prec):
            if a.is_rational():
                roots.append((a.exact(), a.multiplicity))
            else:
                others.append(a.enclosure)
    else:
        from flint import acb_poly

        others = list(acb_poly(balls).roots())
    roots.sort(key=lambda t: t[0])
    return IndicialData(balls, exact, roots, others)


def indicial_polynomial(ode: ODE, point, prec: int = 256) -> IndicialData:
    """Indicial polynomial of ``ode`` at ``point`` with its (rational) roots."""
    with working_precision(prec):
        return _indicial_from_operator(local_operator(ode, point), prec)


# ---------------------------------------------------------------------------
# Frobenius bases


@dataclass
class LocalSolution:
    """Truncated generalized series ``sum_j sum_l c[j][l] x^(alpha + j) log(x)^l``.

    ``x = z - base`` with principal branches of ``x^alpha`` and ``log x``.
    ``coeffs[j][l]`` is the coefficient of ``x^(alpha+j) log(x)^l`` (plain
    powers of the logarithm, not divided by ``l!``).
    """

    base: object  # fmpq, AlgebraicNumber or acb
    exponent: fmpq
    log_power: int  # power of log in the leading term
    coeffs: list  # list over j of lists over l
    ordinary: bool = False

    @property
    def truncation(self) -> int:
        return len(self.coeffs) - 1

    @property
    def terms(self) -> dict:
        out = {}
        for j, row in enumerate(self.coeffs):
            for l, c in enumerate(row):
                if not (isinstance(c, fmpq) and c == 0) and not (isinstance(c, acb) and c.is_zero()):
                    out[(j, l)] = c
        return out

    def coefficient(self, j: int, l: int = 0):
        if j >= len(self.coeffs):
            raise IndexError("coefficient beyond the truncation order")
        row = self.coeffs[j]
        return row[l] if l < len(row) else fmpq(0)

    @property
    def max_log(self) -> int:
        return max((l for (_, l) in self.terms), default=0)

    def base_ball(self, prec: int | None = None) -> acb:
        b = self.base
        if isinstance(b, AlgebraicNumber):
            return b.ball(prec or 256)
        return to_ball(b)


def _taylor_at(coeffs: list, mu, K: int, zero) -> list:
    """Q^(j)(mu)/j! for j < K, via repeated synthetic division."""
    b = list(coeffs)
    out = []
    for _ in range(K):
        if not b:
            out.append(zero)
            continue
        r = b[-1]
        q = [zero] * (len(b) - 1)
        for i in range(len(b) - 2, -1, -1):
            q[i] = r
            r = b[i] + mu * r
        out.append(r)
        b = q
    return out


def _apply_shifted(a: list, c: list, zero) -> list:
    """(sum_j a_j S^j) c where (S c)_k = c_{k+1}."""
    K = len(c)
    out = []
    for k in range(K):
        acc = zero
        for j in range(len(a)):
            if k + j < K:
                x = c[k + j]
                if not (isinstance(x, fmpq) and x == 0):
                    acc = acc + a[j] * x
        out.append(acc)
    return out


def frobenius_basis(ode: ODE, point, N: int, prec: int = 256, exact: bool | None = None) -> list[LocalSolution]:
    """Echelonized local basis of solutions at ``point`` through order ``N``.

    Each solution is determined by one "initial position" ``(n_i, k_i)``:
    an indicial root ``lam + n_i`` of multiplicity ``m`` and ``k_i < m``.
    Its leading term is ``x^(lam+n_i) log(x)^k_i / k_i!`` and its
    coefficients at the initial positions of the other basis elements are 0.
    At ordinary points the basis is rescaled so that ``f_i^(j)(w) = delta_ij``.
    Solutions are ordered by increasing exponent, then decreasing log power.
    """
    with working_precision(prec):
        op = local_operator(ode, point)
        ind = _indicial_from_operator(op, prec)
        if ind.irrational_roots:
            raise ValueError("non-rational local exponents are not supported")
        pt = op.point
        use_exact = pt.kind == "rational" if exact is None else (exact and pt.kind == "rational")
        zero = fmpq(0) if use_exact else acb(0)

        def num(e):
            v = pt.numeric(e, prec)
            return v if use_exact else to_ball(v)

        Qn = [[num(c) for c in qs] for qs in op.Q]
        ordinary = pt.is_ordinary(ode)
        # group roots by class modulo 1
        groups: dict = {}
        for rho, m in ind.roots:
            key = rho - (rho.p // rho.q)
            groups.setdefault(key, []).append((rho, m))
        sols = []
        for members in groups.values():
            members.sort()
            lam = members[0][0]
            K = sum(m for _, m in members)
            mult = {int(rho - lam): m for rho, m in members}
            positions = [(n, k) for n, m in sorted(mult.items()) for k in range(m)]
            nmax = max(mult)
            if N < 0:
                raise ValueError("truncation order must be nonnegative")
            total = N + nmax
            sols.extend(
                _group_solutions(Qn, lam, K, mult, positions, total, N, zero, use_exact, ordinary, op.point)
            )
        sols.sort(key=lambda s: (s.exponent, -s.log_power))
        return sols


def _group_solutions(Qn, lam, K, mult, positions, total, N, zero, use_exact, ordinary, pt):
    T = len(Qn) - 1
    nsol = len(positions)
    series = [[None] * (total + 1) for _ in range(nsol)]
    mu_cast = (lambda q: q) if use_exact else (lambda q: acb(arb(q)))
    for n in range(total + 1):
        # operator blocks acting on earlier coefficients
        blocks = []
        for t in range(1, min(T, n) + 1):
            blocks.append((t, _taylor_at(Qn[t], mu_cast(lam + n - t), K, zero)))
        m = mult.get(n, 0)
        a0 = _taylor_at(Qn[0], mu_cast(lam + n), K, zero)
        for j in range(m):
            a0[j] = zero
        for s_idx, (n_i, k_i) in enumerate(positions):
            ser = series[s_idx]
            rhs = [zero] * K
            for t, a in blocks:
                prev = ser[n - t]
                contrib = _apply_shifted(a, prev, zero)
                rhs = [x - y for x, y in zip(rhs, contrib)]
            c = [zero] * K
            if m:
                for k in range(m):
                    c[k] = fmpq(1) if (n, k) == (n_i, k_i) else fmpq(0)
                    if not use_exact:
                        c[k] = acb(c[k])
            u = [zero] * (K - m)
            for k in range(K - 1 - m, -1, -1):
                acc = rhs[k]
                for j in range(m + 1, K):
                    idx = k + j - m
                    if idx <= K - 1 - m:
                        acc = acc - a0[j] * u[idx]
                u[k] = acc / a0[m]
            for k in range(K - m):
                c[k + m] = u[k]
            ser[n] = c
    out = []
    for s_idx, (n_i, k_i) in enumerate(positions):
        ser = series[s_idx]
        rows = []
        for j in range(N + 1):
            vec = ser[n_i + j] if n_i + j <= total else None
            if vec is None:
                rows.append([zero])
                continue
            row = [vec[l] / math.factorial(l) for l in range(K)]
            while len(row) > 1 and _is_exact_zero(row[-1]):
                row.pop()
            rows.append(row)
        scale = 1
        if ordinary:
            # solutions are analytic here, so log parts vanish identically;
            # with ball centers they would otherwise survive as noise
            scale = math.factorial(n_i)
            rows = [[row[0] / scale] for row in rows]
        base = pt.value if pt.kind != "algebraic" else pt.alg
        out.append(LocalSolution(base, lam + n_i, k_i, rows, ordinary))
    return out


def _is_exact_zero(x) -> bool:
    if x is None:
        return True
    if isinstance(x, fmpq):
        return x == 0
    return x.is_zero()


def residual(ode: ODE, sol: LocalSolution, prec: int = 256) -> list:
    """Coefficients of ``L(sol)`` computed directly from the ``p_i(z)`` form.

    Returns ``(rows, lo)``: ``rows[k][l]`` is the coefficient of
    ``x^(alpha + lo + k) log(x)^l`` in ``L(sol)``, where ``lo`` is the lowest
    power offset any term reaches.  Rows with ``lo + k <= truncation - order``
    must contain zero; higher rows see the truncation.
    """
    with working_precision(prec):
        pt = _Point(sol.base)
        r = ode.order
        alpha = sol.exponent
        L = max(len(row) for row in sol.coeffs) + r
        # derivatives: term x^(e) log^l  ->  e x^(e-1) log^l + l x^(e-1) log^(l-1)
        cur = {}
        for j, row in enumerate(sol.coeffs):
            for l, c in enumerate(row):
                cur[(j, l)] = to_ball(c)
        derivs = [cur]
        for i in range(1, r + 1):
            nxt: dict = {}
            for (j, l), c in derivs[-1].items():
                e = alpha + j - (i - 1)
                key = (j, l)
                nxt[key] = nxt.get(key, acb(0)) + c * acb(arb(e))
                if l > 0:
                    key2 = (j, l - 1)
                    nxt[key2] = nxt.get(key2, acb(0)) + c * l
            derivs.append(nxt)
        # L f, indexing monomials by power offset p = j - i + k relative to alpha
        out: dict = {}
        for i, p in enumerate(ode.coeffs):
            for k in range(p.degree() + 1):
                ck = to_ball(pt.numeric(pt.shifted(p, k), prec))
                if ck.is_zero():
                    continue
                for (j, l), c in derivs[i].items():
                    key = (j - i + k, l)
                    out[key] = out.get(key, acb(0)) + ck * c
        lo = min(k for k, _ in out) if out else 0
        hi = max(k for k, _ in out) if out else 0
        res = []
        for q in range(lo, hi + 1):
            res.append([out.get((q, l), acb(0)) for l in range(L)])
        return res, lo
