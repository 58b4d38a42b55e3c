"""Stage functions shared by the command line and the estimator.

Each stage returns a JSON-ready dict.  Ball values are written with
:func:`ball_to_json` at the stage's working precision, so reports are
byte-identical across runs with the same inputs and precision.
"""

from __future__ import annotations

import ast
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Sequence

from flint import acb, arb, fmpq, fmpq_poly

from . import __version__
from .balls import (
    AlgebraicNumber,
    PrecisionError,
    ball_to_json,
    digits_to_bits,
    isolate_roots,
    to_ball,
    working_precision,
)
from .continuation import ConnectionResult, connect
from .critical import critical_report
from .dfinite import ODE, LocalSolution, frobenius_basis, ode_to_recurrence, recurrence_extend, verify_annihilation
from .oracle import diagonal, expand
from .poly import Direction, RatFun
from .resolver import TemplateMismatchError, drop_report, evaluate_expression, resolve_multiplicity
from .transfer import AsymptoticExpansion, combine, predict_terms, realify, singular_terms, term_asymptotics

__all__ = [
    "EXIT_OK",
    "EXIT_PARSE",
    "EXIT_NUMERIC",
    "EXIT_HYPOTHESIS",
    "StageError",
    "PipelineConfig",
    "bundled",
    "parse_point",
    "parse_target",
    "dominant_singularities",
    "stage_oracle",
    "stage_critical",
    "stage_basis",
    "stage_connect",
    "stage_asymptotics",
    "stage_resolve",
    "stage_drop",
    "run_pipeline",
    "dumps",
]

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_HYPOTHESIS = 4


class StageError(RuntimeError):
    """A pipeline stage failed; ``code`` is the CLI exit code."""

    def __init__(self, stage: str, code: int, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code
        self.message = message

    def to_json(self) -> dict:
        return {"stage": self.stage, "code": self.code, "error": self.message}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def bundled(name: str) -> str:
    """Path of a bundled fixture (``grz.json``, ``grz_ode.json``, ``grz_unit.txt``)."""
    return str(resources.files("lacuna") / "data" / name)


def _hash_inputs(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(json.dumps(p, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _provenance(inputs, prec: int, **truncation) -> dict:
    return {
        "inputs_sha256": _hash_inputs(*inputs),
        "prec_bits": prec,
        "truncation": truncation,
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# parsing helpers


def _poly_node(node, z):
    if isinstance(node, ast.Expression):
        return _poly_node(node.body, z)
    if isinstance(node, ast.Constant) and isinstance(node.value, int):
        return fmpq_poly([node.value])
    if isinstance(node, ast.Name) and node.id in ("z", "x", "t"):
        return z
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _poly_node(node.operand, z)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        a, b = _poly_node(node.left, z), _poly_node(node.right, z)
        if isinstance(node.op, ast.Add):
            return a + b
        if isinstance(node.op, ast.Sub):
            return a - b
        if isinstance(node.op, ast.Mult):
            return a * b
        if isinstance(node.op, ast.Div) and b.degree() == 0:
            return a / b.coeffs()[0]
        if isinstance(node.op, ast.Pow) and b.degree() <= 0:
            e = b.coeffs()[0] if b.degree() == 0 else fmpq(0)
            if e.q == 1 and e >= 0:
                return a ** int(e.p)
    raise ValueError("not a univariate polynomial expression")


def parse_polynomial(text: str) -> fmpq_poly:
    """``"81z^2+14z+1"`` -> fmpq_poly (implicit products like ``14z`` allowed)."""
    import re

    src = re.sub(r"(\d)\s*([a-z(])", r"\1*\2", text.strip()).replace("^", "**")
    return _poly_node(ast.parse(src, mode="eval"), fmpq_poly([0, 1]))


def parse_point(text: str, prec: int = 256):
    """``0``, ``p/q`` or ``root-of:<poly>:<index>`` (roots sorted by real, then imaginary part)."""
    text = text.strip()
    if text.startswith("root-of:"):
        _, poly, idx = text.split(":")
        roots = isolate_roots(parse_polynomial(poly), prec)
        return roots[int(idx)]
    try:
        return fmpq(*[int(x) for x in text.split("/")])
    except ValueError:
        c = complex(text.replace("i", "j").replace("I", "j"))
        return acb(c.real, c.imag)


def parse_target(text: str, order: int) -> list:
    """``a3`` -> unit vector on the third near-basis element (1-based)."""
    text = text.strip()
    if text.startswith("a") and text[1:].isdigit():
        k = int(text[1:])
        if not 1 <= k <= order:
            raise ValueError(f"target {text} outside the basis of size {order}")
        return [fmpq(1) if i == k - 1 else fmpq(0) for i in range(order)]
    vals = [fmpq(*[int(x) for x in part.split("/")]) for part in text.split(",")]
    if len(vals) != order:
        raise ValueError("target vector has the wrong length")
    return vals


def _point_json(p, prec: int):
    if isinstance(p, AlgebraicNumber):
        return {
            "min_poly": [str(c) for c in p.min_poly.coeffs()],
            "enclosure": ball_to_json(p.ball(prec), prec),
        }
    if isinstance(p, fmpq):
        return str(p)
    return ball_to_json(p, prec)


def _coef_json(c, prec: int):
    if isinstance(c, fmpq):
        return str(c)
    return ball_to_json(c, prec)


def solution_json(sol: LocalSolution, prec: int, terms: int | None = None) -> dict:
    rows = sol.coeffs if terms is None else sol.coeffs[: terms + 1]
    return {
        "exponent": str(sol.exponent),
        "log_power": sol.log_power,
        "coeffs": [[_coef_json(c, prec) for c in row] for row in rows],
    }


def dominant_singularities(ode: ODE, prec: int = 256) -> list[AlgebraicNumber]:
    """Nonzero singular points of minimal modulus."""
    with working_precision(prec):
        pts = [s for s in ode.singular_points(prec) if not s.ball(prec).contains(0)]
        if not pts:
            return []
        mods = [abs(s.ball(prec)) for s in pts]
        lo = min(mods, key=lambda m: float(m.mid()))
        return [s for s, m in zip(pts, mods) if m.overlaps(lo)]


# ---------------------------------------------------------------------------
# stages


def stage_oracle(F: RatFun, ode: ODE | None, r: Direction, box: int) -> tuple[dict, list]:
    cbox = expand(F, box)
    seq = diagonal(cbox, r)
    out = {
        "box": box,
        "diagonal": [str(x) for x in seq],
        "provenance": _provenance([F.to_json(), str(r)], 0, box=box),
    }
    if ode is not None:
        ok = verify_annihilation(ode, seq)
        out["annihilated"] = ok
        if not ok:
            raise StageError("oracle", EXIT_HYPOTHESIS, "the ODE does not annihilate the diagonal")
    return out, seq


def stage_critical(F: RatFun, r: Direction, prec: int, seed: int, symmetric: bool = True, k: int | None = None):
    rep = critical_report(F.Q, r, symmetric=symmetric, k=k or F.k, prec=prec, seed=seed)
    out = rep.to_json()
    out["provenance"] = _provenance([F.to_json(), str(r)], prec, seed=seed)
    return out, rep


def stage_basis(ode: ODE, point, order: int, prec: int) -> tuple[dict, list]:
    with working_precision(prec):
        basis = frobenius_basis(ode, point, order, prec)
        out = {
            "point": _point_json(point, prec),
            "basis": [solution_json(b, prec) for b in basis],
            "provenance": _provenance([ode.to_json(), str(point)], prec, order=order),
        }
    return out, basis


def _connection_json(res: ConnectionResult, prec: int) -> dict:
    # serialize only the stable digits (plus a few guard digits)
    jp = min(prec, digits_to_bits(int(res.achieved_digits) + 5))
    return {
        "far_point": _point_json(res.far_point, jp),
        "constants": [ball_to_json(c, jp) for c in res.constants],
        "achieved_digits": round(res.achieved_digits, 3),
        "path": res.path.to_json(),
        "metadata": res.metadata,
    }


def stage_connect(ode: ODE, target: Sequence, points: Sequence, digits: int, via=()) -> tuple[dict, list]:
    results = []
    for w in points:
        try:
            results.append(connect(ode, target, w, 0, via=via, digits=digits))
        except PrecisionError as exc:
            raise StageError("connect", EXIT_NUMERIC, str(exc)) from exc
    prec = results[0].metadata["prec_bits"] if results else digits_to_bits(digits)
    out = {
        "target": [str(x) for x in target],
        "connections": [_connection_json(r, prec) for r in results],
        "provenance": _provenance([ode.to_json(), [str(x) for x in target]], prec, digits=digits),
    }
    return out, results


def stage_asymptotics(ode: ODE, connections: Sequence[ConnectionResult], prec: int, order: int = 1):
    terms = []
    for res in connections:
        far = frobenius_basis(ode, res.far_point, max(order, 1) + 2, prec)
        for st in singular_terms(res, far, order, prec):
            terms.extend(term_asymptotics(st, prec))
    try:
        expansion = combine(terms, prec)
    except ValueError as exc:
        raise StageError("asympt", EXIT_NUMERIC, str(exc)) from exc
    out = {"terms": [_term_json(t, prec) for t in expansion.terms]}
    out["error_power"] = None if expansion.error_power is None else str(expansion.error_power)
    out["provenance"] = _provenance(
        [ode.to_json(), [[c.str(30) for c in res.constants] for res in connections]], prec, order=order
    )
    real = None
    try:
        real = realify(expansion, prec)
        out["real_form"] = real.to_json()
    except ValueError:
        out["real_form"] = None
    return out, expansion, real


def _term_json(t, prec):
    return {
        "growth": ball_to_json(t.growth, prec),
        "power": str(t.power),
        "log_power": t.log_power,
        "constant": ball_to_json(t.constant, prec),
    }


def prediction_json(expansion: AsymptoticExpansion, seq: Sequence, ns: Sequence[int], prec: int) -> list:
    out = []
    with working_precision(prec):
        for n, p in zip(ns, predict_terms(expansion, ns, prec)):
            exact = arb(seq[n])
            rel = p / exact - 1
            out.append({"n": n, "relative_error": float(abs(rel).upper())})
    return out


def stage_resolve(terms: Sequence, unit_expr: str, prec: int) -> dict:
    """Resolve each asymptotic constant against the unit or its conjugate."""
    unit = evaluate_expression(unit_expr, prec)
    rows = []
    with working_precision(prec):
        for t in terms:
            if isinstance(t, dict):
                c, g = _ball(t["constant"]), _ball(t["growth"])
            else:
                c, g = to_ball(t.constant), to_ball(t.growth)
            found = None
            for label, u in (("unit", unit), ("conjugate", unit.conjugate())):
                try:
                    found = (label, resolve_multiplicity(c, u))
                    break
                except TemplateMismatchError:
                    continue
                except PrecisionError as exc:
                    raise StageError("resolve", EXIT_NUMERIC, str(exc)) from exc
            if found is None:
                raise StageError(
                    "resolve", EXIT_NUMERIC, "template mismatch against the unit constant and its conjugate"
                )
            label, res = found
            rows.append(
                {
                    "growth": ball_to_json(g, prec),
                    "paired_with": label,
                    "m": res.m,
                    "residual_upper": float(res.residual.upper()),
                }
            )
    ms = {r["m"] for r in rows}
    return {
        "unit_expr": unit_expr,
        "results": rows,
        "m": ms.pop() if len(ms) == 1 else None,
        "provenance": _provenance([unit_expr, [r["growth"] for r in rows]], prec),
    }


def _ball(d):
    from .balls import ball_from_json

    return ball_from_json(d)


def stage_drop(seq: Sequence, c1, c2, n_max: int) -> dict:
    rep = drop_report(seq, c1, c2, n_max)
    out = rep.to_json()
    out["abs_root_at_n_max"] = float(arb(abs(seq[n_max])).root(n_max).mid())
    out["provenance"] = _provenance([[str(x) for x in seq[: n_max + 1]]], 0, n_max=n_max)
    return out


# ---------------------------------------------------------------------------
# the whole pipeline


@dataclass
class PipelineConfig:
    fun: str
    direction: str = "1,1,1,1"
    ode: str | None = None
    target: str = "a3"
    digits: int = 50
    box: int = 12
    n_max: int = 200
    path: list = field(default_factory=list)
    out: str | None = None
    unit_expr: str | None = None
    seed: int = 0
    prec_bits: int | None = None

    def __post_init__(self):
        if self.digits < 10:
            raise ValueError("digits must be at least 10")

    @classmethod
    def grz(cls, **kw) -> "PipelineConfig":
        with open(bundled("grz_unit.txt")) as fh:
            unit = fh.read().strip()
        return cls(fun=bundled("grz.json"), ode=bundled("grz_ode.json"), unit_expr=unit, **kw)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except (PrecisionError, ArithmeticError) as exc:
        raise StageError(name, EXIT_NUMERIC, str(exc)) from exc
    except (ValueError, IndexError, NotImplementedError) as exc:
        raise StageError(name, EXIT_NUMERIC, str(exc)) from exc


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage; write one JSON per stage plus ``summary.json`` when ``out`` is set."""
    try:
        F = RatFun.load(config.fun)
        ode = ODE.load(config.ode) if config.ode else None
        r = Direction.parse(config.direction)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise StageError("parse", EXIT_PARSE, str(exc)) from exc
    prec = config.prec_bits or max(256, digits_to_bits(config.digits) + 64)
    reports: dict = {}

    reports["oracle"], oracle_seq = _stage("oracle", stage_oracle, F, ode, r, config.box)
    reports["crit"], crit = _stage("crit", stage_critical, F, r, min(prec, 256), config.seed)
    summary = {
        "c1": reports["crit"]["c1"],
        "c2": reports["crit"]["c2"],
        "lacuna": crit.lacuna,
        "supporting": crit.supporting,
        "hypotheses": crit.hypotheses,
    }
    if ode is not None:
        target = _stage("connect", parse_target, config.target, ode.order)
        dom = _stage("dfinite", dominant_singularities, ode, prec)
        bases = {"origin": _stage("dfinite", stage_basis, ode, fmpq(0), 10, prec)[0]}
        for i, w in enumerate(dom):
            bases[f"singularity_{i}"] = _stage("dfinite", stage_basis, ode, w, 5, prec)[0]
        bases["provenance"] = _provenance([ode.to_json()], prec, origin_order=10, singular_order=5)
        reports["dfinite"] = bases
        via = [parse_point(p) for p in config.path]
        reports["connect"], conns = _stage("connect", stage_connect, ode, target, dom, config.digits, via)
        cprec = conns[0].metadata["prec_bits"] if conns else prec
        asym, expansion, real = _stage("asympt", stage_asymptotics, ode, conns, cprec)
        seq = recurrence_extend(ode_to_recurrence(ode), oracle_seq[: ode_to_recurrence(ode).order], 2 * config.n_max)
        ns = [config.n_max // 2, config.n_max, 2 * config.n_max]
        asym["prediction"] = prediction_json(expansion, seq, ns, cprec)
        reports["asympt"] = asym
        summary["C"] = [c["constants"] for c in reports["connect"]["connections"]]
        if real is not None:
            summary["rho"] = real.rho.str(15)
            summary["power"] = str(real.power)
        if config.unit_expr:
            reports["resolve"] = _stage("resolve", stage_resolve, expansion.terms, config.unit_expr, cprec)
            summary["m"] = reports["resolve"]["m"]
        if crit.c1 is not None and crit.c2 is not None:
            reports["drop"] = _stage("drop", stage_drop, seq, crit.c1, crit.c2, config.n_max)
            summary["drop"] = {
                "abs_root_at_n_max": reports["drop"]["abs_root_at_n_max"],
                "gap_to_c2": reports["drop"]["gap_to_c2"],
            }
    settings = {k: v for k, v in asdict(config).items() if k not in ("fun", "ode", "out")}
    summary["provenance"] = _provenance(
        [F.to_json(), ode.to_json() if ode is not None else None, settings], prec
    )
    reports["summary"] = summary
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        for name, rep in reports.items():
            with open(os.path.join(config.out, f"{name}.json"), "w") as fh:
                fh.write(dumps(rep))
    return reports
