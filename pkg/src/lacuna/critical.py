"""Critical points of the height function on ``V = {Q = 0}``.

For a direction ``r`` a point ``z`` of ``V`` in the complex torus is
critical when ``z_j dQ/dz_j = lambda r_j`` for every ``j``.  Smooth points
are simple solutions of that system; points where ``grad Q`` vanishes are
classified by the inertia of the Hessian and, when they look like a real
Lorentzian quadric, tested for the supporting-direction condition.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from flint import acb, acb_mat, arb, fmpq, fmpq_poly

from .balls import (
    AlgebraicNumber,
    PrecisionError,
    as_fmpq,
    isolate_roots,
    to_ball,
    working_precision,
)
from .poly import Direction, LaurentPoly, gradient, hessian, is_symmetric_under, restrict_symmetric

__all__ = [
    "CriticalPoint",
    "CriticalReport",
    "CriticalSystem",
    "critical_system",
    "solve_symmetric",
    "solve_newton_multistart",
    "classify",
    "height",
    "supporting_test",
    "lacuna_predicate",
    "critical_report",
    "symmetry_classes",
    "elimination_polynomial",
]

log = logging.getLogger(__name__)

SMOOTH = "smooth"
QUADRIC = "quadric_singular"
DEGENERATE = "degenerate_singular"

HYPOTHESES = {
    "no_critical_points_at_infinity": "assumed, not verified",
    "unique_torus_intersection": "unverified",
}


# ---------------------------------------------------------------------------
# coordinates


def _coord_ball(x, prec: int) -> acb:
    if isinstance(x, AlgebraicNumber):
        return x.ball(prec)
    return to_ball(x)


def _exact_coords(point) -> list[fmpq] | None:
    out = []
    for x in point:
        if isinstance(x, AlgebraicNumber):
            if not x.is_rational():
                return None
            out.append(x.exact())
        elif isinstance(x, (int, fmpq)):
            out.append(as_fmpq(x))
        else:
            return None
    return out


def _eval(p: LaurentPoly, point, prec: int):
    ex = _exact_coords(point)
    if ex is not None:
        return p.eval(ex)
    with working_precision(prec):
        return p.eval([_coord_ball(x, prec) for x in point])


def _is_zero(v) -> bool:
    """Certified zero for exact values, 'contains zero' for balls."""
    if isinstance(v, fmpq):
        return v == 0
    return bool(v.contains(0))


# ---------------------------------------------------------------------------
# types


@dataclass
class CriticalPoint:
    coords: list
    kind: str
    height: arb
    signature: tuple | None = None
    multiplicity_in_elimination: int = 1
    certified: bool = True

    def coord_balls(self, prec: int = 128) -> list[acb]:
        return [_coord_ball(x, prec) for x in self.coords]

    def to_json(self) -> dict:
        coords = []
        for x in self.coords:
            if isinstance(x, AlgebraicNumber):
                coords.append(
                    {
                        "min_poly": [str(c) for c in x.min_poly.coeffs()],
                        "enclosure": _ball_str(x.enclosure),
                    }
                )
            else:
                coords.append({"enclosure": _ball_str(to_ball(x))})
        return {
            "coords": coords,
            "kind": self.kind,
            "height": self.height.str(20),
            "signature": list(self.signature) if self.signature else None,
            "multiplicity_in_elimination": self.multiplicity_in_elimination,
        }


def _ball_str(z: acb) -> str:
    return z.str(20)


@dataclass
class CriticalReport:
    """Critical points sorted by decreasing height plus the derived summary."""

    points: list
    c1: arb | None
    c2: arb | None
    lacuna: bool
    supporting: bool | None
    hypotheses: dict = field(default_factory=lambda: dict(HYPOTHESES))
    uncertified: int = 0

    def to_json(self) -> dict:
        return {
            "points": [p.to_json() for p in self.points],
            "c1": self.c1.str(20) if self.c1 is not None else None,
            "c2": self.c2.str(20) if self.c2 is not None else None,
            "lacuna": self.lacuna,
            "supporting": self.supporting,
            "hypotheses": self.hypotheses,
            "uncertified_candidates": self.uncertified,
        }


# ---------------------------------------------------------------------------
# the system


@dataclass
class CriticalSystem:
    """``Q = 0`` and ``z_j dQ/dz_j = lambda r_j`` in the variables ``(z, lambda)``.

    ``square`` eliminates ``lambda`` through the pairwise ratios
    ``r_p z_j dQ/dz_j = r_j z_p dQ/dz_p`` for a pivot ``p`` with ``r_p != 0``.
    """

    Q: LaurentPoly
    direction: Direction
    equations: list
    square: list

    def residual(self, z: Sequence, lam=None, prec: int = 128) -> list:
        """Values of the ``square`` equations (or the full system if ``lam`` is given)."""
        if lam is None:
            return [_eval(e, z, prec) for e in self.square]
        return [_eval(e, list(z) + [lam], prec) for e in self.equations]


def _embed(p: LaurentPoly, dim: int) -> LaurentPoly:
    return LaurentPoly(dim, {e + (0,) * (dim - p.dim): c for e, c in p.terms.items()})


def critical_system(Q: LaurentPoly, r: Direction) -> CriticalSystem:
    d = Q.dim
    if r.dim != d:
        raise ValueError("direction and polynomial dimensions differ")
    logs = [LaurentPoly.variable(d, j) * Q.partial(j) for j in range(d)]
    lam = LaurentPoly.variable(d + 1, d)
    eqs = [_embed(Q, d + 1)]
    for j in range(d):
        eqs.append(_embed(logs[j], d + 1) - lam * r.r[j])
    p = next(j for j in range(d) if r.r[j] != 0)
    square = [Q]
    for j in range(d):
        if j != p:
            square.append(logs[j] * r.r[p] - logs[p] * r.r[j])
    return CriticalSystem(Q, r, eqs, square)


# ---------------------------------------------------------------------------
# heights, inertia, classification


def height(point, r: Direction, norm: str = "linf", prec: int = 128) -> arb:
    """Enclosure of ``-sum_j (r_j/|r|) log|z_j|``.

    ``norm`` selects ``|r|``: ``"linf"`` (default, the scale of the diagonal
    index ``n`` when ``r`` is integral) or ``"l1"``.
    """
    if norm == "linf":
        scale = r.linf
    elif norm == "l1":
        scale = r.l1
    else:
        raise ValueError(f"unknown norm {norm!r}")
    with working_precision(prec):
        total = arb(0)
        for x, rj in zip(point, r.r):
            b = _coord_ball(x, prec)
            if b.contains(0):
                raise ValueError("a coordinate enclosure contains 0: the point is not in the torus")
            if rj != 0:
                total -= arb(rj / scale) * abs(b).log()
        return total


def _congruence(A: list, zero, is_zero, sign):
    """Symmetric elimination ``T A T^t = diag(D)``.

    Works over any field given ``zero``/``is_zero``; a zero pivot with a
    nonzero off-diagonal entry is repaired by adding (or subtracting) the
    corresponding row and column.  ``is_zero`` decides pivots only and may
    raise :class:`PrecisionError`; ``sign`` decides the sign of a pivot.
    Returns ``(D, T)``.
    """
    n = len(A)
    A = [list(row) for row in A]
    one = zero + 1
    T = [[one if i == j else zero for j in range(n)] for i in range(n)]

    def surely_nonzero(x):
        return x != 0 if isinstance(x, fmpq) else not x.contains(0)

    def add_rowcol(k, j, s):
        # row/col k += s * row/col j
        for c in range(n):
            A[k][c] = A[k][c] + s * A[j][c]
        for c in range(n):
            A[c][k] = A[c][k] + s * A[c][j]
        for c in range(n):
            T[k][c] = T[k][c] + s * T[j][c]

    for k in range(n):
        if is_zero(A[k][k]):
            j = next((j for j in range(k + 1, n) if surely_nonzero(A[k][j])), None)
            if j is None:
                if any(not is_zero(A[k][c]) for c in range(k + 1, n)):
                    raise PrecisionError("cannot decide a pivot")
                continue
            add_rowcol(k, j, 1)
            if is_zero(A[k][k]):
                add_rowcol(k, j, -2)
            if is_zero(A[k][k]):
                raise PrecisionError("cannot decide a pivot")
        p = A[k][k]
        for i in range(k + 1, n):
            f = A[i][k] / p
            for c in range(n):
                A[i][c] = A[i][c] - f * A[k][c]
            for c in range(n):
                A[c][i] = A[c][i] - f * A[c][k]
            for c in range(n):
                T[i][c] = T[i][c] - f * T[k][c]
    D = [A[k][k] for k in range(n)]
    for x in D:
        if not is_zero(x):
            sign(x)
    return D, T


def _exact_is_zero(x) -> bool:
    return x == 0


def _ball_is_zero(x) -> bool:
    if x.is_zero():
        return True
    if x.contains(0):
        raise PrecisionError("cannot decide the sign of a ball")
    return False


def _sign(x) -> int:
    if isinstance(x, fmpq):
        return (x > 0) - (x < 0)
    if x > 0:
        return 1
    if x < 0:
        return -1
    raise PrecisionError("cannot decide the sign of a ball")


def _inertia(D) -> tuple[int, int, int]:
    pos = sum(1 for x in D if not (x == 0 if isinstance(x, fmpq) else x.is_zero()) and _sign(x) > 0)
    neg = sum(1 for x in D if not (x == 0 if isinstance(x, fmpq) else x.is_zero()) and _sign(x) < 0)
    return pos, neg, len(D) - pos - neg


def _real_hessian(Q: LaurentPoly, point, prec: int):
    """Hessian entries at ``point``: exact when rational, real balls when real."""
    H = hessian(Q)
    ex = _exact_coords(point)
    if ex is not None:
        return [[h.eval(ex) for h in row] for row in H], True
    with working_precision(prec):
        balls = [_coord_ball(x, prec) for x in point]
        M = [[h.eval(balls) for h in row] for row in H]
        if not all(v.imag.contains(0) for row in M for v in row):
            return None, False
        return [[v.real for v in row] for row in M], False


def classify(Q: LaurentPoly, point, prec: int = 128, max_prec: int = 2048) -> tuple[str, tuple | None]:
    """``(kind, signature)`` of a point of ``V``.

    The signature of a singular point is the ``(positive, negative)`` inertia
    of its Hessian; the point is a quadric singularity when that is
    ``(1, d - 1)`` or ``(d - 1, 1)`` with no zero eigenvalues.
    """
    d = Q.dim
    grads = [_eval(g, point, prec) for g in gradient(Q)]
    if any(not _is_zero(g) for g in grads):
        return SMOOTH, None
    bits = prec
    while True:
        M, exact = _real_hessian(Q, point, bits)
        if M is None:
            return DEGENERATE, None
        try:
            if exact:
                D, _ = _congruence(M, fmpq(0), _exact_is_zero, _sign)
            else:
                with working_precision(bits):
                    D, _ = _congruence(M, arb(0), _ball_is_zero, _sign)
            pos, neg, nul = _inertia(D)
            break
        except PrecisionError:
            bits *= 2
            if bits > max_prec:
                log.warning("Hessian inertia undecided at %d bits", max_prec)
                return DEGENERATE, None
    sig = (pos, neg)
    if nul == 0 and d >= 2 and sig in ((1, d - 1), (d - 1, 1)):
        return QUADRIC, sig
    return DEGENERATE, sig


def supporting_test(
    Q: LaurentPoly, point, r: Direction, prec: int = 128, max_prec: int = 2048
) -> bool | None:
    """Whether ``dh_r`` lies strictly inside the Lorentz cone of the quadric.

    The log-space quadratic part ``A = diag(z) H diag(z)`` is brought to
    ``diag(D)`` by a real congruence ``T``, its sign fixed so that exactly
    one pivot is positive, and with ``b = T r`` the test is
    ``sum_{k != +} b_k^2/|D_k| < b_+^2/D_+``.  Returns ``None`` when ``r`` is
    on the boundary of the cone (exact tie, or undecidable at ``max_prec``).
    """
    kind, sig = classify(Q, point, prec, max_prec)
    if kind != QUADRIC:
        raise ValueError("supporting test needs a quadric singular point of signature (1, d-1)")
    bits = prec
    while True:
        M, exact = _real_hessian(Q, point, bits)
        if exact:
            z = _exact_coords(point)
            zero = fmpq(0)
            is_zero = _exact_is_zero
        else:
            with working_precision(bits):
                z = [_coord_ball(x, bits).real for x in point]
            zero = arb(0)
            is_zero = _ball_is_zero
        try:
            with working_precision(bits):
                n = len(M)
                A = [[z[i] * M[i][j] * z[j] for j in range(n)] for i in range(n)]
                if sig[0] != 1:
                    A = [[-v for v in row] for row in A]
                D, T = _congruence(A, zero, is_zero, _sign)
                rr = [x if exact else arb(x) for x in r.r]
                b = [sum((T[k][j] * rr[j] for j in range(n)), zero) for k in range(n)]
                plus = next(k for k in range(n) if _sign(D[k]) > 0)
                lhs = sum((b[k] * b[k] / -D[k] for k in range(n) if k != plus), zero)
                rhs = b[plus] * b[plus] / D[plus]
                diff = rhs - lhs
                if exact:
                    return None if diff == 0 else bool(diff > 0)
                return _sign(diff) > 0
        except PrecisionError:
            bits *= 2
            if bits > max_prec:
                return None


def lacuna_predicate(d: int, k: int) -> bool:
    """True iff ``d`` is even and ``2k < d``."""
    if d < 1 or k < 1:
        raise ValueError("d and k must be positive")
    return d % 2 == 0 and 2 * k < d


# ---------------------------------------------------------------------------
# solvers


def symmetry_classes(Q: LaurentPoly, r: Direction) -> list[int] | None:
    """Orbit map grouping variables with equal ``r_j``, if ``Q`` respects it."""
    labels: dict = {}
    orbit = [labels.setdefault(x, len(labels)) for x in r.r]
    return orbit if is_symmetric_under(Q, orbit) else None


def _finish(Q, r, coords, prec, norm, mult=1) -> CriticalPoint:
    kind, sig = classify(Q, coords, prec)
    return CriticalPoint(coords, kind, height(coords, r, norm, prec), sig, mult)


def solve_symmetric(
    Q: LaurentPoly,
    r: Direction,
    partition: Sequence[int] | None = None,
    prec: int = 128,
    norm: str = "linf",
    seed: int = 0,
) -> list[CriticalPoint]:
    """Critical points invariant under the symmetry given by ``partition``.

    ``partition`` maps each variable to its class (default: all variables in
    one class).  With a single class the criticality equations hold
    identically on the symmetric locus, so the points are the roots of the
    univariate restriction of ``Q``; several classes fall back on
    :func:`solve_newton_multistart`.
    """
    d = Q.dim
    orbit = list(partition) if partition is not None else [0] * d
    if not is_symmetric_under(Q, orbit):
        raise ValueError("Q is not invariant under the given partition")
    for i in range(d):
        for j in range(d):
            if orbit[i] == orbit[j] and r.r[i] != r.r[j]:
                raise ValueError("direction is not constant on the classes of the partition")
    if max(orbit) > 0:
        return solve_newton_multistart(critical_system(Q, r), prec=prec, norm=norm, seed=seed)
    q = restrict_symmetric(Q, orbit).to_univariate()
    out = []
    for root in isolate_roots(q, prec):
        b = root.ball(prec)
        if b.contains(0):
            continue
        coords = [root] * d
        out.append(_finish(Q, r, coords, prec, norm, root.multiplicity))
    return out


def elimination_polynomial(Q: LaurentPoly) -> fmpq_poly:
    """``Q(t, ..., t)`` as a univariate polynomial."""
    return restrict_symmetric(Q, [0] * Q.dim).to_univariate()


class _Compiled:
    """Fast complex evaluation of a list of polynomials and their Jacobian."""

    def __init__(self, polys: Sequence[LaurentPoly]):
        self.polys = list(polys)
        self.d = polys[0].dim
        self.f = [self._pack(p) for p in polys]
        self.j = [[self._pack(p.partial(k)) for k in range(self.d)] for p in polys]

    @staticmethod
    def _pack(p):
        if not p.terms:
            return np.zeros((0, p.dim), dtype=int), np.zeros(0, dtype=complex)
        exps = np.array(list(p.terms.keys()), dtype=int)
        cs = np.array([float(c) for c in p.terms.values()], dtype=complex)
        return exps, cs

    @staticmethod
    def _ev(packed, z):
        exps, cs = packed
        if len(cs) == 0:
            return 0j
        return complex(np.sum(cs * np.prod(z[None, :] ** exps, axis=1)))

    def F(self, z):
        return np.array([self._ev(p, z) for p in self.f])

    def J(self, z):
        return np.array([[self._ev(p, z) for p in row] for row in self.j])


def _newton(sys: _Compiled, z0, iters: int = 80):
    z = np.array(z0, dtype=complex)
    for _ in range(iters):
        J = sys.J(z)
        F = sys.F(z)
        try:
            step = np.linalg.lstsq(J, F, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        z = z - step
        if not np.all(np.isfinite(z)):
            return None
        if np.linalg.norm(step) <= 1e-15 * max(1.0, np.linalg.norm(z)):
            break
    return z


def _krawczyk(polys: Sequence[LaurentPoly], z: np.ndarray, prec: int) -> list[acb] | None:
    """Certify a unique simple root of the square system near ``z``."""
    d = len(z)
    with working_precision(prec):
        m = [acb(complex(x).real, complex(x).imag) for x in z]
        jac = [[p.partial(k) for k in range(d)] for p in polys]
        Jm = acb_mat([[acb(e.eval(m).mid()) for e in row] for row in jac])
        try:
            Y = Jm.inv()
        except ZeroDivisionError:
            return None
        Fm = acb_mat([[p.eval(m)] for p in polys])
        # refine the midpoint with one ball Newton step
        m = [m[i] - (Y * Fm)[i, 0] for i in range(d)]
        m = [acb(x.mid()) for x in m]
        Fm = acb_mat([[p.eval(m)] for p in polys])
        scale = max(1.0, max(abs(complex(x.mid())) for x in m))
        for eps in (1e-30, 1e-20, 1e-12, 1e-8):
            rad = arb(0, eps * scale)
            X = [x + acb(rad, rad) for x in m]
            JX = acb_mat([[e.eval(X) for e in row] for row in jac])
            I = acb_mat([[1 if i == j else 0 for j in range(d)] for i in range(d)])
            dX = acb_mat([[X[i] - m[i]] for i in range(d)])
            K = acb_mat([[m[i]] for i in range(d)]) - Y * Fm + (I - Y * JX) * dX
            if all(X[i].contains(K[i, 0]) for i in range(d)):
                return [K[i, 0] for i in range(d)]
    return None


def solve_newton_multistart(
    system: CriticalSystem,
    trials: int = 64,
    prec: int = 128,
    seed: int = 0,
    norm: str = "linf",
    return_uncertified: bool = False,
):
    """Critical points from Newton iterations started at random torus points.

    Candidates are certified by a Krawczyk test on the square system; where
    that system is singular (the candidate is a singular point of ``V``)
    the square system ``grad Q = 0`` is used instead and ``Q`` is checked to
    vanish on the resulting enclosure.  Deduplication is by ball overlap.
    """
    Q = system.Q
    d = Q.dim
    rng = np.random.default_rng(seed)
    crit = _Compiled(system.square)
    grad_polys = gradient(Q)
    grad = _Compiled(grad_polys)
    found: list[list[acb]] = []
    uncertified = 0
    for _ in range(trials):
        mod = np.exp(rng.uniform(-3.0, 1.0, d))
        arg = rng.uniform(-math.pi, math.pi, d)
        z = _newton(crit, mod * np.exp(1j * arg))
        if z is None:
            continue
        if np.linalg.norm(crit.F(z)) > 1e-8 * max(1.0, np.linalg.norm(z)) or np.min(np.abs(z)) < 1e-10:
            continue
        if any(all(abs(complex(b.mid()) - x) < 1e-6 * max(1.0, abs(x)) for b, x in zip(f, z)) for f in found):
            continue
        cert = _krawczyk(system.square, z, prec)
        if cert is None:
            zg = _newton(grad, z)
            if zg is not None and np.linalg.norm(grad.F(zg)) < 1e-8:
                cand = _krawczyk(grad_polys, zg, prec)
                if cand is not None:
                    with working_precision(prec):
                        if Q.eval(cand).contains(0):
                            cert = cand
        if cert is None:
            uncertified += 1
            continue
        if any(all(a.overlaps(b) for a, b in zip(f, cert)) for f in found):
            continue
        if any(c.contains(0) for c in cert):
            continue
        found.append(cert)
    out = [_finish(Q, system.direction, coords, prec, norm) for coords in found]
    out.sort(key=lambda p: [(float(c.real.mid()), float(c.imag.mid())) for c in p.coord_balls()])
    if return_uncertified:
        return out, uncertified
    return out


def critical_report(
    Q: LaurentPoly,
    r: Direction,
    symmetric: bool = True,
    k: int = 1,
    prec: int = 128,
    norm: str = "linf",
    seed: int = 0,
    trials: int = 64,
) -> CriticalReport:
    """Solve, classify, and summarise the critical points for ``(Q, r)``."""
    uncertified = 0
    orbit = symmetry_classes(Q, r) if symmetric else None
    if orbit is not None and max(orbit) == 0:
        points = solve_symmetric(Q, r, orbit, prec, norm)
    else:
        points, uncertified = solve_newton_multistart(
            critical_system(Q, r), trials, prec, seed, norm, return_uncertified=True
        )
    points.sort(key=lambda p: -float(p.height.mid()))
    distinct: list[arb] = []
    for p in points:
        if not any(p.height.overlaps(h) for h in distinct):
            distinct.append(p.height)
    c1 = distinct[0] if distinct else None
    c2 = distinct[1] if len(distinct) > 1 else None
    supporting = None
    top = [p for p in points if c1 is not None and p.height.overlaps(c1)]
    quad = [p for p in top if p.kind == QUADRIC]
    if quad:
        supporting = supporting_test(Q, quad[0].coords, r, prec)
    lac = bool(quad) and supporting is True and lacuna_predicate(Q.dim, k)
    return CriticalReport(points, c1, c2, lac, supporting, uncertified=uncertified)
