"""Sparse Laurent polynomials over Q and rational functions P/Q^k."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from flint import acb, arb, fmpq, fmpq_poly

from .balls import as_fmpq, to_ball

__all__ = [
    "LaurentPoly",
    "RatFun",
    "Direction",
    "gradient",
    "newton_polytope",
    "restrict_symmetric",
    "in_convex_hull",
]

Exponent = tuple[int, ...]


class LaurentPoly:
    """Sparse multivariate Laurent polynomial with exact rational coefficients.

    Parameters
    ----------
    dim : int
        Number of variables.
    terms : mapping
        Exponent tuple -> coefficient.  Zero coefficients are dropped.
    """

    __slots__ = ("dim", "terms", "_hash")

    def __init__(self, dim: int, terms: Mapping[Sequence[int], object] | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        clean: dict[Exponent, fmpq] = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != dim:
                raise ValueError(f"exponent {exp} does not have length {dim}")
            q = as_fmpq(c)
            if q != 0:
                clean[exp] = clean.get(exp, fmpq(0)) + q
                if clean[exp] == 0:
                    del clean[exp]
        self.dim = dim
        self.terms = clean
        self._hash = None

    # -- construction ---------------------------------------------------

    @classmethod
    def constant(cls, dim: int, c) -> "LaurentPoly":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def monomial(cls, exp: Sequence[int], c=1) -> "LaurentPoly":
        return cls(len(exp), {tuple(exp): c})

    @classmethod
    def variable(cls, dim: int, j: int) -> "LaurentPoly":
        e = [0] * dim
        e[j] = 1
        return cls(dim, {tuple(e): 1})

    @classmethod
    def from_univariate(cls, p: fmpq_poly) -> "LaurentPoly":
        return cls(1, {(i,): c for i, c in enumerate(p.coeffs())})

    def to_univariate(self) -> fmpq_poly:
        if self.dim != 1:
            raise ValueError("not a univariate polynomial")
        if not self.terms:
            return fmpq_poly([])
        lo = min(e[0] for e in self.terms)
        if lo < 0:
            raise ValueError("negative exponents cannot be converted to a polynomial")
        hi = max(e[0] for e in self.terms)
        coeffs = [fmpq(0)] * (hi + 1)
        for (e,), c in self.terms.items():
            coeffs[e] = c
        return fmpq_poly(coeffs)

    # -- arithmetic -----------------------------------------------------

    def _check(self, other: "LaurentPoly") -> None:
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")

    def _coerce(self, other) -> "LaurentPoly":
        if isinstance(other, LaurentPoly):
            self._check(other)
            return other
        return LaurentPoly.constant(self.dim, other)

    def __add__(self, other) -> "LaurentPoly":
        other = self._coerce(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, fmpq(0)) + c
        return LaurentPoly(self.dim, t)

    __radd__ = __add__

    def __neg__(self) -> "LaurentPoly":
        return LaurentPoly(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "LaurentPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LaurentPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "LaurentPoly":
        other = self._coerce(other)
        t: dict[Exponent, fmpq] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, fmpq(0)) + c1 * c2
        return LaurentPoly(self.dim, t)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "LaurentPoly":
        if n < 0:
            raise ValueError("negative powers of polynomials are not polynomials")
        out = LaurentPoly.constant(self.dim, 1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, LaurentPoly):
            return self.dim == other.dim and self.terms == other.terms
        if isinstance(other, (int, fmpq)):
            return self == LaurentPoly.constant(self.dim, other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.dim, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e in sorted(self.terms):
            mono = "*".join(
                f"z{j + 1}" if k == 1 else f"z{j + 1}^{k}" for j, k in enumerate(e) if k
            )
            c = self.terms[e]
            parts.append(f"{c}" if not mono else (mono if c == 1 else f"{c}*{mono}"))
        return " + ".join(parts)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def support(self) -> list[Exponent]:
        return sorted(self.terms)

    def constant_term(self) -> fmpq:
        return self.terms.get((0,) * self.dim, fmpq(0))

    def degree_bounds(self) -> tuple[Exponent, Exponent]:
        sup = self.support
        lo = tuple(min(e[j] for e in sup) for j in range(self.dim))
        hi = tuple(max(e[j] for e in sup) for j in range(self.dim))
        return lo, hi

    # -- evaluation -----------------------------------------------------

    def __call__(self, z: Sequence) -> object:
        return self.eval(z)

    def eval(self, z: Sequence):
        """Evaluate at a point.

        Exact (``fmpq``) when every coordinate is an exact rational, a ball
        otherwise.  A coordinate whose ball contains 0 raises
        ``ZeroDivisionError`` if it carries a negative exponent.
        """
        if len(z) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(z)}")
        exact = all(isinstance(x, (int, fmpq)) or _is_fraction(x) for x in z)
        if exact:
            pts = [as_fmpq(x) for x in z]
            acc = fmpq(0)
        else:
            pts = [to_ball(x) for x in z]
            acc = acb(0)
        for j, x in enumerate(pts):
            if any(e[j] < 0 for e in self.terms):
                if (exact and x == 0) or (not exact and x.contains(0)):
                    raise ZeroDivisionError(
                        f"coordinate {j} may vanish but carries a negative exponent"
                    )
        for e, c in self.terms.items():
            term = c if exact else acb(arb(c))
            for x, k in zip(pts, e):
                if k:
                    term = term * (x**k if k > 0 else 1 / x ** (-k))
            acc = acc + term
        return acc

    def partial(self, j: int) -> "LaurentPoly":
        t = {}
        for e, c in self.terms.items():
            if e[j] != 0:
                ne = list(e)
                ne[j] -= 1
                t[tuple(ne)] = c * e[j]
        return LaurentPoly(self.dim, t)

    def substitute(self, values: Mapping[int, "LaurentPoly"]) -> "LaurentPoly":
        """Replace variable ``j`` by ``values[j]`` (nonnegative exponents only)."""
        target_dim = next(iter(values.values())).dim if values else self.dim
        out = LaurentPoly(target_dim)
        for e, c in self.terms.items():
            term = LaurentPoly.constant(target_dim, c)
            for j, k in enumerate(e):
                if k < 0:
                    raise ValueError("substitution into negative exponents is not supported")
                if k:
                    term = term * values[j] ** k
            out = out + term
        return out

    # -- JSON -----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [
                {"exp": list(e), "num": str(int(c.p)), "den": str(int(c.q))}
                for e, c in sorted(self.terms.items())
            ],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "LaurentPoly":
        dim = int(d["dim"])
        terms = {}
        for t in d["terms"]:
            exp = tuple(int(x) for x in t["exp"])
            c = fmpq(int(t["num"]), int(t.get("den", 1)))
            terms[exp] = terms.get(exp, fmpq(0)) + c
        return cls(dim, terms)


def _is_fraction(x) -> bool:
    from fractions import Fraction

    return isinstance(x, Fraction)


def gradient(p: LaurentPoly) -> list[LaurentPoly]:
    """Formal partial derivatives of ``p``."""
    return [p.partial(j) for j in range(p.dim)]


def hessian(p: LaurentPoly) -> list[list[LaurentPoly]]:
    g = gradient(p)
    return [[g[i].partial(j) for j in range(p.dim)] for i in range(p.dim)]


# ---------------------------------------------------------------------------
# Newton polytope


def _phase_one_feasible(A: list[list[fmpq]], b: list[fmpq]) -> bool:
    """Exact simplex (phase I, Bland's rule): is {x >= 0 : A x = b} nonempty?"""
    m, n = len(A), len(A[0]) if A else 0
    rows = []
    for i in range(m):
        row = [fmpq(v) for v in A[i]]
        rhs = fmpq(b[i])
        if rhs < 0:
            row = [-v for v in row]
            rhs = -rhs
        rows.append(row + [fmpq(1) if k == i else fmpq(0) for k in range(m)] + [rhs])
    basis = [n + i for i in range(m)]
    ncols = n + m
    # objective: minimise sum of artificials -> reduced costs
    while True:
        cost = [fmpq(0)] * (ncols + 1)
        for i in range(m):
            if basis[i] >= n:
                for k in range(ncols + 1):
                    cost[k] += rows[i][k]
        for k in range(n, ncols):
            cost[k] -= 1
        enter = None
        for k in range(ncols):
            if k not in basis and cost[k] > 0:
                enter = k
                break
        if enter is None:
            return cost[ncols] == 0
        leave, best = None, None
        for i in range(m):
            a = rows[i][enter]
            if a > 0:
                ratio = rows[i][ncols] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:  # unbounded direction cannot occur in phase I
            return cost[ncols] == 0
        piv = rows[leave][enter]
        rows[leave] = [v / piv for v in rows[leave]]
        for i in range(m):
            if i != leave and rows[i][enter] != 0:
                f = rows[i][enter]
                rows[i] = [v - f * w for v, w in zip(rows[i], rows[leave])]
        basis[leave] = enter


def in_convex_hull(point: Sequence[int], others: Sequence[Sequence[int]]) -> bool:
    """Exact test whether ``point`` lies in the convex hull of ``others``."""
    if not others:
        return False
    d = len(point)
    A = [[fmpq(o[j]) for o in others] for j in range(d)] + [[fmpq(1)] * len(others)]
    b = [fmpq(x) for x in point] + [fmpq(1)]
    return _phase_one_feasible(A, b)


def newton_polytope(p: LaurentPoly) -> list[Exponent]:
    """Vertices of conv(support(p)), lexicographically sorted."""
    if p.is_zero():
        raise ValueError("the zero polynomial has no Newton polytope")
    sup = p.support
    return [m for m in sup if not in_convex_hull(m, [o for o in sup if o != m])]


# ---------------------------------------------------------------------------
# symmetric restriction


def restrict_symmetric(p: LaurentPoly, orbit_map: Sequence[int]) -> LaurentPoly:
    """Substitute ``z_j := t_{orbit_map[j]}`` and collect terms.

    ``orbit_map`` gives the class index (0-based, contiguous) of each
    variable; the result has one variable per class.
    """
    if len(orbit_map) != p.dim:
        raise ValueError("orbit_map must assign a class to every variable")
    classes = sorted(set(orbit_map))
    if classes != list(range(len(classes))):
        raise ValueError("class indices must be 0..k-1")
    k = len(classes)
    t: dict[Exponent, fmpq] = {}
    for e, c in p.terms.items():
        ne = [0] * k
        for j, x in enumerate(e):
            ne[orbit_map[j]] += x
        ne = tuple(ne)
        t[ne] = t.get(ne, fmpq(0)) + c
    return LaurentPoly(k, t)


def class_sizes(orbit_map: Sequence[int]) -> list[int]:
    k = max(orbit_map) + 1
    return [sum(1 for c in orbit_map if c == i) for i in range(k)]


def is_symmetric_under(p: LaurentPoly, orbit_map: Sequence[int]) -> bool:
    """True when ``p`` is invariant under transpositions inside each class."""
    for i, j in combinations(range(p.dim), 2):
        if orbit_map[i] != orbit_map[j]:
            continue
        swapped = {}
        for e, c in p.terms.items():
            ne = list(e)
            ne[i], ne[j] = ne[j], ne[i]
            swapped[tuple(ne)] = c
        if swapped != p.terms:
            return False
    return True


# ---------------------------------------------------------------------------
# rational functions and directions


@dataclass(frozen=True)
class RatFun:
    """F = P / Q^k."""

    P: LaurentPoly
    Q: LaurentPoly
    k: int = 1

    def __post_init__(self):
        if self.P.dim != self.Q.dim:
            raise ValueError("P and Q must have the same number of variables")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.Q.is_zero():
            raise ValueError("Q must not be identically zero")

    @property
    def dim(self) -> int:
        return self.Q.dim

    @property
    def q0_positive(self) -> bool:
        return self.Q.constant_term() > 0

    def to_json(self) -> dict:
        return {"P": self.P.to_json(), "Q": self.Q.to_json(), "k": int(self.k)}

    @classmethod
    def from_json(cls, d: Mapping) -> "RatFun":
        return cls(LaurentPoly.from_json(d["P"]), LaurentPoly.from_json(d["Q"]), int(d.get("k", 1)))

    @classmethod
    def load(cls, path) -> "RatFun":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class Direction:
    """Lattice direction ``r`` with its l1-normalised ball vector ``rhat``."""

    r: tuple = field()

    def __post_init__(self):
        r = tuple(as_fmpq(x) for x in self.r)
        if all(x == 0 for x in r):
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "r", r)

    @classmethod
    def parse(cls, text: str) -> "Direction":
        return cls(tuple(as_fmpq(x) for x in text.split(",")))

    @property
    def dim(self) -> int:
        return len(self.r)

    @property
    def l1(self) -> fmpq:
        return sum((abs(x) for x in self.r), fmpq(0))

    @property
    def linf(self) -> fmpq:
        return max(abs(x) for x in self.r)

    @property
    def rhat(self) -> list[arb]:
        n = self.l1
        return [arb(x / n) for x in self.r]

    def is_integral(self) -> bool:
        return all(x.q == 1 for x in self.r)

    def ints(self) -> list[int]:
        if not self.is_integral():
            raise ValueError("direction is not integral")
        return [int(x.p) for x in self.r]

    def __str__(self) -> str:
        return ",".join(str(x) for x in self.r)


def as_laurent(obj: Iterable) -> LaurentPoly:
    """Helper for tests: build a polynomial from ``[(exp, coeff), ...]``."""
    items = list(obj)
    dim = len(items[0][0])
    return LaurentPoly(dim, {tuple(e): c for e, c in items})
