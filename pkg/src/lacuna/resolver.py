"""Integer multiplicities from numeric constants, and exponential-drop diagnostics."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Sequence

from flint import acb, arb, fmpq

from .balls import PrecisionError, as_fmpq, to_ball, working_precision

__all__ = [
    "MultiplicityResult",
    "TemplateMismatchError",
    "resolve_multiplicity",
    "evaluate_expression",
    "DropReport",
    "drop_report",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-9


class TemplateMismatchError(ValueError):
    """The numeric constant is not an integer multiple of the unit constant."""


@dataclass(frozen=True)
class MultiplicityResult:
    m: int
    residual: arb
    unit_constant: acb
    numeric_constant: acb
    ratio: acb

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "residual_upper": float(self.residual.upper()),
            "ratio": self.ratio.str(20),
            "unit_constant": self.unit_constant.str(20),
            "numeric_constant": self.numeric_constant.str(20),
        }


def resolve_multiplicity(numeric, unit, tol: float = RESIDUAL_TOL) -> MultiplicityResult:
    """Nearest integer ``m`` with ``numeric ~ m * unit``.

    Raises :class:`PrecisionError` when the ratio ball is too wide to decide
    the rounding at tolerance ``tol``, and :class:`TemplateMismatchError`
    when the ratio is certifiably farther than ``tol`` from every integer.
    """
    numeric, unit = to_ball(numeric), to_ball(unit)
    if unit.contains(0):
        raise ValueError("unit constant ball contains 0")
    ratio = numeric / unit
    width = max(float(ratio.real.rad()), float(ratio.imag.rad()))
    if width >= tol:
        raise PrecisionError(f"ratio {ratio} is too wide to round (radius {width:.3g})")
    m = round(float(ratio.real.mid()))
    residual = abs(ratio - m)
    if not residual < tol:
        raise TemplateMismatchError(
            f"numeric/unit = {ratio.str(10)} is not within {tol:g} of an integer"
        )
    if m < 0:
        raise TemplateMismatchError(f"negative multiplicity {m}")
    return MultiplicityResult(m, residual, unit, numeric, ratio)


# ---------------------------------------------------------------------------
# closed-form expressions


_NAMES = {"I", "pi", "sqrt"}


def _eval_node(node, prec):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, prec)
    if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
        return fmpq(node.value)
    if isinstance(node, ast.Name):
        if node.id == "I":
            return acb(0, 1)
        if node.id == "pi":
            return acb(arb.pi())
        raise ValueError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand, prec)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a = _eval_node(node.left, prec)
        b = _eval_node(node.right, prec)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div):
            if isinstance(a, fmpq) and isinstance(b, fmpq):
                return a / b
            return to_ball(a) / to_ball(b)
        if isinstance(node.op, ast.Pow):
            if not isinstance(b, fmpq):
                raise ValueError("exponents must be rational")
            if isinstance(a, fmpq) and b.q == 1:
                return a ** int(b.p)
            base = to_ball(a)
            return base ** int(b.p) if b.q == 1 else base.pow(acb(arb(b)))
        raise ValueError(f"unsupported operator {type(node.op).__name__}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "sqrt":
        if len(node.args) != 1 or node.keywords:
            raise ValueError("sqrt takes exactly one argument")
        return to_ball(_eval_node(node.args[0], prec)).sqrt()
    raise ValueError(f"unsupported syntax: {ast.dump(node)[:60]}")


def evaluate_expression(text: str, prec: int = 256) -> acb:
    """Evaluate a closed-form constant in ball arithmetic.

    The grammar has integers, ``I``, ``pi``, ``sqrt(.)``, ``+ - * /`` and
    ``^`` (or ``**``) with rational exponents; ``sqrt`` and fractional powers
    use the principal branch.
    """
    tree = ast.parse(text.replace("^", "**"), mode="eval")
    with working_precision(prec):
        return to_ball(_eval_node(tree, prec))


# ---------------------------------------------------------------------------
# exponential drop


@dataclass
class DropReport:
    """Growth diagnostics of a sequence against two candidate rates."""

    n_max: int
    rates: dict  # n -> log|a_n| / n
    gap_c1: float
    gap_c2: float
    diagnostics: dict  # eps -> {"max": float, "bounded": bool}

    def to_json(self) -> dict:
        return {
            "n_max": self.n_max,
            "rate_at_n_max": self.rates.get(self.n_max),
            "gap_to_c1": self.gap_c1,
            "gap_to_c2": self.gap_c2,
            "diagnostics": {str(k): v for k, v in self.diagnostics.items()},
        }


def _log_abs(x) -> float:
    q = as_fmpq(x)
    if q == 0:
        return -math.inf
    return math.log(abs(int(q.p))) - math.log(int(q.q))


def drop_report(
    seq: Sequence, c1, c2, n_max: int | None = None, eps: Sequence[float] = (0.1, 0.01)
) -> DropReport:
    """Compare ``log|a_n|/n`` with ``c1`` and ``c2``.

    For each ``eps`` the diagnostic ``|a_n| exp(-n (c2 + eps))`` is
    "bounded" when its maximum over the second half of ``1..n_max`` does not
    exceed its maximum over the first half.
    """
    n_max = len(seq) - 1 if n_max is None else n_max
    if n_max < 4 or len(seq) <= n_max:
        raise ValueError("sequence too short for a drop report")
    c1f = float(to_ball(c1).real.mid())
    c2f = float(to_ball(c2).real.mid())
    logs = [_log_abs(seq[n]) for n in range(n_max + 1)]
    rates = {n: logs[n] / n for n in range(1, n_max + 1) if logs[n] > -math.inf}
    last = max(rates)
    diagnostics = {}
    half = n_max // 2
    for e in eps:
        vals = [logs[n] - n * (c2f + e) for n in range(1, n_max + 1)]
        first = max(vals[:half])
        second = max(vals[half:])
        diagnostics[e] = {"max": math.exp(max(first, second)) if max(first, second) < 700 else math.inf,
                          "bounded": second <= first}
    return DropReport(
        n_max=n_max,
        rates=rates,
        gap_c1=c1f - rates[last],
        gap_c2=rates[last] - c2f,
        diagnostics=diagnostics,
    )
