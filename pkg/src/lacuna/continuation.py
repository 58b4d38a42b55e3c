"""Numerical analytic continuation of ODE solutions and the connection problem.

Transition matrices are built from Taylor expansions at successive ordinary
points.  Truncation errors are bounded by a geometric tail estimate fitted
to the last computed coefficients (``|c_n| <= A rho^-n n^r``) and inflated by
a safety factor of ``2^10``; this is a heuristic, not a majorant-series
certificate, and every result says so in its metadata.  ``connect`` adds a
second, independent safeguard: the computation is repeated at doubled
precision and only digits that agree are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from flint import acb, acb_mat, arb, fmpq

from .balls import (
    AlgebraicNumber,
    BranchCutError,
    PrecisionError,
    ball_max_rad,
    digits_to_bits,
    to_ball,
    working_precision,
)
from .dfinite import ODE, LocalSolution, frobenius_basis

__all__ = [
    "Path",
    "TransitionMatrix",
    "ConnectionResult",
    "TAIL_SAFETY",
    "evaluate_local",
    "local_frame",
    "plan_path",
    "transition",
    "connect",
]

TAIL_SAFETY = 2**10
TAIL_METHOD = "heuristic geometric tail bound (ratio fit on computed terms, safety factor 2^10)"


def _dyadic(x: float, bits: int = 48) -> arb:
    return arb(fmpq(round(x * 2**bits), 2**bits))


def _dyadic_point(z: complex, bits: int = 48) -> acb:
    return acb(_dyadic(z.real, bits), _dyadic(z.imag, bits))


def _singular_balls(ode: ODE, prec: int) -> list[acb]:
    return [s.ball(prec) for s in ode.singular_points(prec)]


def _dist_lower(c: acb, sings: Sequence[acb], exclude: acb | None = None) -> float:
    ds = []
    for s in sings:
        if exclude is not None and s.overlaps(exclude):
            continue
        ds.append(float((c - s).abs_lower()))
    return min(ds) if ds else math.inf


@dataclass(frozen=True)
class Path:
    """Waypoints of a piecewise-linear continuation path.

    Consecutive points satisfy ``|z_{k+1} - z_k| <= eta * dist(z_k, sing)``.
    """

    waypoints: tuple
    eta: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(to_ball(z) for z in self.waypoints))

    def __len__(self) -> int:
        return len(self.waypoints)

    def reversed(self) -> "Path":
        return Path(tuple(reversed(self.waypoints)), self.eta)

    def conjugate(self) -> "Path":
        return Path(tuple(z.conjugate() for z in self.waypoints), self.eta)

    def __add__(self, other: "Path") -> "Path":
        if not self.waypoints[-1].overlaps(other.waypoints[0]):
            raise ValueError("paths do not share an endpoint")
        return Path(self.waypoints + other.waypoints[1:], min(self.eta, other.eta))

    def to_json(self) -> list:
        return [[str(complex(z.mid()).real), str(complex(z.mid()).imag)] for z in self.waypoints]

    def check(self, ode: ODE, prec: int = 128) -> None:
        sings = _singular_balls(ode, prec)
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            d = _dist_lower(a, sings)
            step = float((b - a).abs_upper())
            if step > self.eta * d * (1 + 1e-12):
                raise ValueError(
                    f"segment {complex(a.mid()):.6g} -> {complex(b.mid()):.6g} violates the step ratio"
                )


def plan_path(ode: ODE, points: Sequence, eta: float = 0.5, prec: int = 128) -> Path:
    """Subdivide the polyline through ``points`` into admissible steps.

    New waypoints are dyadic rationals, so every expansion center is exact.
    """
    sings = _singular_balls(ode, prec)
    balls = [to_ball(p) for p in points]
    pts = [complex(b.mid()) for b in balls]
    out = [balls[0]]
    cur = pts[0]
    for target, target_ball in zip(pts[1:], balls[1:]):
        while True:
            d = _dist_lower(acb(cur.real, cur.imag), sings)
            if d == 0:
                raise BranchCutError("path runs into a singular point")
            remaining = abs(target - cur)
            step = 0.98 * eta * d
            if remaining <= step:
                cur = target
                out.append(target_ball)
                break
            cur = cur + (target - cur) / remaining * step
            out.append(_dyadic_point(cur))
            cur = complex(out[-1].mid())
    path = Path(tuple(out), eta)
    path.check(ode, prec)
    return path


@dataclass
class TransitionMatrix:
    """Maps the derivative frame ``(f, f', ..., f^(r-1))`` at ``path`` start to its end."""

    matrix: acb_mat
    from_frame: str
    to_frame: str
    path: Path
    metadata: dict = field(default_factory=dict)

    def __matmul__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        return TransitionMatrix(
            self.matrix * other.matrix, other.from_frame, self.to_frame, other.path + self.path,
            {"tail_bound": TAIL_METHOD},
        )

    def entry(self, i: int, j: int) -> acb:
        return self.matrix[i, j]


# ---------------------------------------------------------------------------
# local evaluation


def _tail_bound(log_abs: list[float], rho: float, h: float, deriv: int, extra_pow: int) -> float:
    """Heuristic bound on ``sum_{n > N} n^deriv |c_n| h^(n - deriv)``.

    ``log_abs[n]`` is ``log |c_n|`` (``-inf`` for zero terms).  Fits
    ``|c_n| <= A rho^-n n^p`` on the last few computed coefficients and sums
    the resulting majorant geometrically.
    """
    N = len(log_abs) - 1
    if N < 1 or h == 0:
        return 0.0
    q = h / rho
    if q >= 1:
        return math.inf
    p = extra_pow

    def fit(n):
        return log_abs[n] + n * math.log(rho) - p * math.log(n)

    window = range(max(1, N - 4), N + 1)
    logA = max(fit(n) if log_abs[n] > -math.inf else -math.inf for n in window)
    if logA == -math.inf:
        # trailing zeros: fall back on the largest coefficient seen
        nz = [n for n in range(1, N + 1) if log_abs[n] > -math.inf]
        if not nz:
            return 0.0
        logA = max(fit(n) for n in nz)
    if not math.isfinite(logA):
        return math.inf
    e = p + deriv
    growth = q * ((N + 2) / (N + 1)) ** e
    if growth >= 1:
        return math.inf
    log_first = logA + e * math.log(N + 1) + (N + 1) * math.log(q) - deriv * math.log(h)
    if log_first > 700:
        return math.inf
    return TAIL_SAFETY * math.exp(log_first) / (1 - growth)


def _log_abs(x) -> float:
    if isinstance(x, fmpq):
        return math.log(abs(float(x))) if x != 0 else -math.inf
    b = to_ball(x)
    if b.is_zero():
        return -math.inf
    u = b.abs_upper()
    if not u.is_finite():
        return math.inf
    return float(u.log().mid())


def evaluate_local(
    sol: LocalSolution,
    z,
    nderiv: int = 0,
    radius: float | None = None,
    prec: int | None = None,
) -> list[acb]:
    """Values of ``sol`` and its first ``nderiv`` derivatives at ``z``.

    ``radius`` is the convergence radius of the expansion (distance from the
    base point to the nearest other singularity); when given, the truncation
    tail is bounded and added to the result radii.
    """
    prec = prec or 256
    with working_precision(prec):
        if isinstance(z, AlgebraicNumber) and isinstance(sol.base, AlgebraicNumber) and z == sol.base:
            return _evaluate_at_base(sol, nderiv)
        x = to_ball(z) - sol.base_ball(prec)
        if x.is_zero():
            return _evaluate_at_base(sol, nderiv)
        if radius is not None and float(x.abs_upper()) >= radius:
            raise ValueError("evaluation point lies outside the disk of convergence")
        alpha = sol.exponent
        has_log = sol.max_log > 0
        if has_log or alpha.q != 1 or alpha < 0:
            if x.imag.contains(0) and not bool(x.real > 0) and not (x.imag.is_zero()):
                raise BranchCutError("evaluation point straddles the branch cut of the local expansion")
        logx = x.log() if has_log else acb(0)
        K = max(len(row) for row in sol.coeffs)
        results = []
        xp = acb(1)
        powers = []
        for j in range(len(sol.coeffs)):
            powers.append(xp)
            xp = xp * x
        analytic = not has_log and alpha.q == 1 and alpha >= 0
        hx = float(x.abs_upper())
        for d in range(nderiv + 1):
            total = acb(0)
            if analytic:
                # plain power series: differentiate termwise, no negative powers
                a0 = int(alpha)
                for j, row in enumerate(sol.coeffs):
                    n = a0 + j
                    if n >= d and row:
                        total += to_ball(row[0]) * math.perm(n, d) * (powers[n - d] if n - d < len(powers) else x ** (n - d))
                base_pow = None
            elif alpha.q == 1 and alpha - d >= 0:
                base_pow = x ** int(alpha - d)
            elif alpha.q == 1 and alpha - d < 0:
                base_pow = 1 / x ** int(d - alpha)
            else:
                base_pow = x.pow(acb(arb(alpha - d)))
            for j, row in enumerate(sol.coeffs if base_pow is not None else ()):
                v = [to_ball(c) for c in row] + [acb(0)] * (K - len(row))
                e = alpha + j
                for _ in range(d):
                    nv = [acb(0)] * K
                    for l in range(K):
                        nv[l] = v[l] * acb(arb(e)) + ((l + 1) * v[l + 1] if l + 1 < K else acb(0))
                    v = nv
                    e = e - 1
                poly = acb(0)
                for l in range(K - 1, -1, -1):
                    poly = poly * logx + v[l]
                total += powers[j] * poly
            if base_pow is not None:
                total = total * base_pow
            if radius is not None:
                absc = [max((_log_abs(c) for c in row), default=-math.inf) for row in sol.coeffs]
                tail = _tail_bound(absc, radius, hx, d, K + 1 + max(0, int(alpha)))
                # the fitted sum already carries h^-d; scale by |x|^alpha
                if analytic:
                    scale = hx ** int(alpha)
                else:
                    scale = float(base_pow.abs_upper()) * hx**d
                tail *= (1 + float(logx.abs_upper())) ** (K - 1) * scale
                if not math.isfinite(tail):
                    raise PrecisionError("tail bound is not finite; reduce the step")
                total = total + acb(arb(0, tail), arb(0, tail))
            results.append(total)
        return results


def _evaluate_at_base(sol: LocalSolution, nderiv: int) -> list[acb]:
    alpha = sol.exponent
    out = []
    for d in range(nderiv + 1):
        if sol.max_log > 0 and alpha <= d:
            raise BranchCutError("logarithmic solution is singular at its base point")
        if alpha.q == 1 and 0 <= alpha <= d and alpha + len(sol.coeffs) > d:
            j = d - int(alpha)
            out.append(to_ball(sol.coefficient(j, 0)) * math.factorial(d))
        elif alpha > d:
            out.append(acb(0))
        else:
            raise BranchCutError("solution is singular at its base point")
    return out


def local_frame(
    basis: Sequence[LocalSolution], z, order: int, radius: float | None, prec: int
) -> acb_mat:
    """Matrix ``M[j, i] = b_i^(j)(z)`` of derivative values of a basis."""
    cols = [evaluate_local(b, z, order - 1, radius, prec) for b in basis]
    with working_precision(prec):
        M = acb_mat(order, len(basis))
        for i, col in enumerate(cols):
            for j in range(order):
                M[j, i] = col[j]
        return M


# ---------------------------------------------------------------------------
# transitions


def _terms_for(q: float, prec: int) -> int:
    return int(math.ceil((prec + 30) / -math.log2(q))) + 10


def _step_matrix(ode: ODE, c: acb, h: acb, sings, prec: int, N: int | None = None) -> acb_mat:
    r = ode.order
    step = float(h.abs_upper())
    rho = _dist_lower(c, sings)
    if not math.isfinite(rho):
        # no singularities: any radius beyond the step works for the tail fit
        rho = 4 * max(step, 1e-3)
    q = step / rho
    if N is None:
        N = _terms_for(max(q, 1e-3), prec)
    # Ball recurrences lose roughly a bit per term to wrapping; start with
    # that many guard bits and add more until the frame is accurate.
    # The expansion center must be exact (a ball center makes the Taylor
    # recurrence lose all accuracy); for an inexact start point expand at its
    # midpoint m and map frames through m: T = E(c + h) E(c)^-1.
    exact = c.is_exact()
    m = c if exact else acb(c.mid())
    guard = N
    for _ in range(4):
        wp = prec + guard
        with working_precision(wp):
            basis = frobenius_basis(ode, m, N, wp)
            M = local_frame(basis, c + h, r, rho, wp)
            if not exact:
                M = M * local_frame(basis, c, r, rho, wp).inv()
            worst = max(_rel_rad(M[i, j]) for i in range(r) for j in range(r))
        if worst <= 2.0 ** (-prec + 16):
            break
        guard *= 2
    return M


def _rel_rad(x: acb) -> float:
    rad = float(ball_max_rad(x).upper())
    if rad == 0:
        return 0.0
    mag = float(abs(x).upper())
    return rad / max(mag, 1e-300) if mag > rad else math.inf


def transition(ode: ODE, path: Path, prec: int = 256, N: int | None = None) -> TransitionMatrix:
    """Transition matrix between derivative frames along ``path``.

    Every waypoint must be an ordinary point; the per-segment step ratio is
    checked against ``path.eta``.  ``N`` fixes the Taylor truncation order
    per step (default: chosen from the step ratio and ``prec``).
    """
    path.check(ode, min(prec, 128))
    r = ode.order
    with working_precision(prec):
        sings = _singular_balls(ode, prec)
        M = acb_mat(r, r)
        for i in range(r):
            M[i, i] = 1
        for a, b in zip(path.waypoints, path.waypoints[1:]):
            M = _step_matrix(ode, a, b - a, sings, prec, N) * M
    return TransitionMatrix(
        M, f"derivatives at {complex(path.waypoints[0].mid())}",
        f"derivatives at {complex(path.waypoints[-1].mid())}", path,
        {"tail_bound": TAIL_METHOD, "prec_bits": prec},
    )


# ---------------------------------------------------------------------------
# connection problem


@dataclass
class ConnectionResult:
    """Coordinates of a target solution in the local basis at ``far_point``."""

    constants: list
    achieved_digits: float
    path: Path
    far_point: object
    near_point: object
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, i: int) -> acb:
        return self.constants[i]


def _as_point_ball(p, prec):
    if isinstance(p, AlgebraicNumber):
        return p.ball(prec)
    return to_ball(p)


def _matching_point(far: acb, near: acb, rho_far: float) -> acb:
    """Ordinary point on the segment towards ``far`` at distance rho_far / 4."""
    fw, nw = complex(far.mid()), complex(near.mid())
    u = (fw - nw) / abs(fw - nw)
    if fw.imag == 0 and fw.real > 0 and u.real > 0 and abs(u.imag) < 1e-300:
        # positive real singularity: match on the upper side of the cut
        u = complex(math.cos(math.pi / 4), -math.sin(math.pi / 4))
    return _dyadic_point(fw - u * rho_far / 4)


def _segment_distance(a: complex, b: complex, s: complex) -> float:
    ab = b - a
    t = 0.0 if ab == 0 else max(0.0, min(1.0, ((s - a) * ab.conjugate()).real / abs(ab) ** 2))
    return abs(a + t * ab - s)


def _default_via(near: acb, far: acb, zm: acb, sings, rho_far: float) -> list:
    """Empty for a clear straight segment, else one perpendicular detour point."""
    a, b = complex(near.mid()), complex(zm.mid())
    others = [complex(s.mid()) for s in sings if not s.overlaps(near) and not s.overlaps(far)]
    if all(_segment_distance(a, b, s) >= rho_far / 2 for s in others):
        return []
    mid = (a + b) / 2
    normal = (b - a) * 1j / abs(b - a)
    for sign in (1, -1):
        for scale in (0.5, 1.0, 2.0):
            c = mid + sign * scale * abs(b - a) * normal / 2
            if all(
                _segment_distance(a, c, s) >= rho_far / 2 and _segment_distance(c, b, s) >= rho_far / 2
                for s in others
            ):
                return [_dyadic_point(c)]
    raise ValueError("no clear default path found; supply waypoints explicitly")


def _solve_once(ode, target, near_point, far_point, via, prec, eta):
    r = ode.order
    with working_precision(prec):
        sings = ode.singular_points(prec)
        sing_balls = [s.ball(prec) for s in sings]
        near_b = _as_point_ball(near_point, prec)
        far_b = _as_point_ball(far_point, prec)
        span = abs(complex(far_b.mid()) - complex(near_b.mid()))
        rho_near = min(_dist_lower(near_b, sing_balls, exclude=near_b), span)
        rho_far = min(_dist_lower(far_b, sing_balls, exclude=far_b), span)
        zm = _matching_point(far_b, near_b, rho_far)
        if not via:
            via = _default_via(near_b, far_b, zm, sing_balls, rho_far)
        first_target = to_ball(via[0]) if via else zm
        dvec = complex(first_target.mid()) - complex(near_b.mid())
        z0 = _dyadic_point(complex(near_b.mid()) + dvec / abs(dvec) * min(rho_near / 4, abs(dvec)))
        path = plan_path(ode, [z0, *via, zm], eta, prec=min(prec, 128))

        near_basis = frobenius_basis(ode, near_point, _terms_for(0.25, prec), prec, exact=False)
        far_basis = frobenius_basis(ode, far_point, _terms_for(0.25, prec), prec)
        A = local_frame(near_basis, z0, r, rho_near, prec)
        T = transition(ode, path, prec)
        B = local_frame(far_basis, zm, r, rho_far, prec)
        v = acb_mat(r, 1)
        for i, c in enumerate(target):
            v[i, 0] = to_ball(c)
        y = T.matrix * (A * v)
        try:
            C = B.solve(y)
        except ZeroDivisionError as exc:
            raise PrecisionError("connection system is too ill-conditioned at this precision") from exc
        res = B * C - y
        certified = all(res[i, 0].contains(0) for i in range(r))
        consts = [C[i, 0] for i in range(r)]
    return consts, path, certified, near_basis, far_basis, zm


def connect(
    ode: ODE,
    target: Sequence,
    far_point,
    near_point=0,
    via: Sequence = (),
    prec: int | None = None,
    digits: int = 50,
    eta: float = 0.5,
    max_prec: int = 16384,
) -> ConnectionResult:
    """Express the solution ``sum target_i * near_basis_i`` in the far basis.

    The near and far bases are the echelonized Frobenius bases at
    ``near_point`` and ``far_point``.  Values are matched at an ordinary
    point on the radial segment towards ``far_point``.  The computation runs
    at ``prec`` and ``2 prec`` bits (doubling further until ``digits`` stable
    digits are reached) and returns the higher-precision enclosure, widened
    to cover the disagreement between the two runs.
    """
    prec = prec or max(256, digits_to_bits(digits) + 64)
    via = list(via)  # converted per run, at that run's precision
    prev = None
    while True:
        consts, path, certified, *_ = _solve_once(ode, target, near_point, far_point, via, prec, eta)
        if prev is not None:
            with working_precision(prec):
                merged, worst = [], 0.0
                for a, b in zip(prev, consts):
                    diff = a - b
                    spread = float((diff.abs_upper() + ball_max_rad(b)).mid())
                    worst = max(worst, spread / max(1e-300, float(b.abs_upper())))
                    widen = diff.abs_upper()
                    merged.append(b + acb(arb(0, widen), arb(0, widen)))
                achieved = -math.log10(worst) if worst > 0 else float(prec * math.log10(2))
                if achieved >= digits or prec * 2 > max_prec:
                    if achieved < digits:
                        raise PrecisionError(
                            f"only {achieved:.1f} stable digits at {prec} bits (wanted {digits})"
                        )
                    return ConnectionResult(
                        merged,
                        achieved,
                        path,
                        far_point,
                        near_point,
                        {
                            "prec_bits": prec,
                            "tail_bound": TAIL_METHOD,
                            "stability_gate": "agreement between runs at prec/2 and prec bits",
                            "linear_solve_certified": certified,
                        },
                    )
        prev = consts
        prec *= 2
