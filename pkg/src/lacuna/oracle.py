"""Brute-force Taylor coefficients of P/Q^k on a box, diagonals, growth rates.

This is the independent oracle every exact coefficient value in the package
is checked against, so it deliberately uses nothing but exact integer
arithmetic: ``Q = Q(0) (1 - u)`` and ``(1 - u)^{-k}`` is summed as a
truncated negative-binomial series of repeated sparse multiplications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
from flint import acb, arb, fmpq

from .balls import as_fmpq, to_ball
from .poly import Direction, LaurentPoly, RatFun

__all__ = ["CoeffBox", "expand", "diagonal", "growth_estimate", "GrowthEstimate", "BOX_CAP"]

BOX_CAP = 10**8


@dataclass(frozen=True)
class CoeffBox:
    """Dense box of exact coefficients ``a_r`` for ``0 <= r_j <= bound``."""

    dim: int
    bound: int
    coeffs: np.ndarray  # object array of fmpq, shape (bound + 1,) * dim

    def __getitem__(self, r: Sequence[int]) -> fmpq:
        r = tuple(int(x) for x in r)
        if len(r) != self.dim or any(x < 0 or x > self.bound for x in r):
            raise IndexError(f"index {r} outside the box [0, {self.bound}]^{self.dim}")
        return self.coeffs[r]

    def to_json(self) -> dict:
        flat = [f"{int(c.p)}/{int(c.q)}" for c in self.coeffs.ravel()]
        return {"dim": self.dim, "bound": self.bound, "order": "C", "coeffs": flat}

    @classmethod
    def from_json(cls, d) -> "CoeffBox":
        dim, bound = int(d["dim"]), int(d["bound"])
        arr = np.empty((bound + 1) ** dim, dtype=object)
        for i, s in enumerate(d["coeffs"]):
            arr[i] = as_fmpq(s)
        return cls(dim, bound, arr.reshape((bound + 1,) * dim))


def _shift_add(out: np.ndarray, src: np.ndarray, exp: Sequence[int], c: int) -> None:
    """out[r + exp] += c * src[r], truncated to the box."""
    n = out.shape[0]
    dst = tuple(slice(e, n) for e in exp)
    org = tuple(slice(0, n - e) for e in exp)
    out[dst] += c * src[org]


def _integer_scaled(p: LaurentPoly) -> tuple[list[tuple[tuple, int]], int]:
    den = 1
    for c in p.terms.values():
        den = den * int(c.q) // math.gcd(den, int(c.q))
    return [(e, int(c * den)) for e, c in p.terms.items()], den


def expand(F: RatFun, N: int, allow_large: bool = False) -> CoeffBox:
    """Exact Taylor coefficients of ``F`` at the origin, truncated to a box.

    Parameters
    ----------
    F : RatFun
        Rational function with ``Q(0) != 0`` and no negative exponents.
    N : int
        Box bound; coefficients ``a_r`` with every ``r_j <= N`` are returned.
    allow_large : bool
        Lift the ``(N+1)^d <= 10^8`` safety cap.
    """
    d = F.dim
    if N < 0:
        raise ValueError("box bound must be nonnegative")
    if (N + 1) ** d > BOX_CAP and not allow_large:
        raise ValueError(f"box of {(N + 1) ** d} entries exceeds the cap of {BOX_CAP}")
    q0 = F.Q.constant_term()
    if q0 == 0:
        raise ValueError("Q(0) = 0: F has no power series expansion at the origin")
    for poly in (F.P, F.Q):
        if any(x < 0 for e in poly.terms for x in e):
            raise ValueError("negative exponents are not supported by the box oracle")

    # u = 1 - Q/q0 = v / D with v integral
    u = LaurentPoly.constant(d, 1) - F.Q * (1 / q0)
    v_terms, D = _integer_scaled(u)
    v_terms = [(e, c) for e, c in v_terms if all(x <= N for x in e)]
    shape = (N + 1,) * d

    power = np.zeros(shape, dtype=object)
    power[(0,) * d] = 1
    acc = np.zeros(shape, dtype=object)
    acc[(0,) * d] = comb(F.k - 1, 0)
    m = 0
    while True:
        nxt = np.zeros(shape, dtype=object)
        for e, c in v_terms:
            _shift_add(nxt, power, e, c)
        if not nxt.any():
            break
        m += 1
        power = nxt
        acc = acc * D + comb(m + F.k - 1, m) * power
    # F = P * acc / (D^m q0^k)
    scale = fmpq(1, D**m) / q0**F.k
    p_terms, pden = _integer_scaled(F.P)
    res = np.zeros(shape, dtype=object)
    for e, c in p_terms:
        if all(x <= N for x in e):
            _shift_add(res, acc, e, c)
    scale = scale / pden
    out = np.empty(shape, dtype=object)
    flat_in, flat_out = res.ravel(), out.ravel()
    for i, x in enumerate(flat_in):
        flat_out[i] = fmpq(int(x)) * scale
    return CoeffBox(d, N, out)


def diagonal(box: CoeffBox, r: Direction | Sequence[int], n_max: int | None = None) -> list[fmpq]:
    """The sequence ``a_{n r}`` for ``n = 0 .. floor(N / max r_j)``."""
    rr = r.ints() if isinstance(r, Direction) else [int(x) for x in r]
    if len(rr) != box.dim:
        raise ValueError("direction has the wrong dimension")
    if any(x < 0 for x in rr):
        raise ValueError("negative direction entries are not supported")
    top = box.bound // max(rr)
    if n_max is None:
        n_max = top
    elif n_max > top:
        raise IndexError(f"n = {n_max} needs a box of size {n_max * max(rr)}")
    return [box[[n * x for x in rr]] for n in range(n_max + 1)]


@dataclass(frozen=True)
class GrowthEstimate:
    """Diagnostic growth rates of a sequence (no rigour claimed).

    ``root`` is ``|a_n|^(1/n)`` at the last index, widened to cover the
    values seen over the window; ``ratio`` is ``(|a_n| / |a_{n-w}|)^(1/w)``.
    """

    root: arb
    ratio: arb
    index: int

    def __contains__(self, x) -> bool:
        return bool(self.root.contains(x))


def _abs_log(x) -> arb:
    if isinstance(x, (int, fmpq)):
        q = as_fmpq(x)
        return arb(abs(q)).log()
    return to_ball(x).abs_upper().log() if isinstance(x, acb) else arb(abs(x)).log()


def growth_estimate(seq: Sequence, window: int) -> GrowthEstimate:
    if window < 1:
        raise ValueError("window must be positive")
    n = len(seq) - 1
    idx = [k for k in range(max(1, n - window + 1), n + 1) if seq[k] != 0]
    if not idx:
        raise ValueError("the window contains only zero terms")
    roots = [(_abs_log(seq[k]) / k).exp() for k in idx]
    lo = min(float(r.mid()) for r in roots)
    hi = max(float(r.mid()) for r in roots)
    last = roots[-1]
    spread = max(hi - float(last.mid()), float(last.mid()) - lo)
    root = arb(last.mid(), arb(spread) + last.rad())
    first = idx[0]
    if first != idx[-1]:
        ratio = ((_abs_log(seq[idx[-1]]) - _abs_log(seq[first])) / (idx[-1] - first)).exp()
    else:
        ratio = last
    return GrowthEstimate(root=root, ratio=ratio, index=idx[-1])
