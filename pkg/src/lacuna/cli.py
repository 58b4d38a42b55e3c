"""Command-line interface: ``lacuna <subcommand> ...``.

Exit codes: 0 success, 2 parse error, 3 numeric or precision failure,
4 hypothesis failure (ODE does not annihilate the diagonal, supporting test
false when required).
"""

from __future__ import annotations

import argparse
import json
import sys

from flint import fmpq

from .balls import PrecisionError, digits_to_bits
from .critical import symmetry_classes
from .dfinite import ODE, ode_to_recurrence, recurrence_extend
from .oracle import CoeffBox, diagonal, expand
from .pipeline import (
    EXIT_HYPOTHESIS,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_PARSE,
    PipelineConfig,
    StageError,
    dominant_singularities,
    dumps,
    parse_point,
    parse_target,
    prediction_json,
    run_pipeline,
    stage_asymptotics,
    stage_basis,
    stage_connect,
    stage_critical,
    stage_resolve,
)
from .poly import Direction, RatFun
from .resolver import TemplateMismatchError

__all__ = ["main", "build_parser"]


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--digits", type=int, default=default, help="target decimal digits (default 50)")
    parser.add_argument("--prec-bits", type=int, default=default, help="override working precision in bits")
    parser.add_argument("--seed", type=int, default=default, help="seed for multistart solving (default 0)")
    parser.add_argument("--out", default=default, help="output file (directory for 'pipeline')")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lacuna", description="Coefficient asymptotics near a lacuna.")
    _globals(p, True)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        sp = sub.add_parser(name, **kw)
        _globals(sp, True)
        return sp

    oracle = add("oracle", help="brute-force series coefficients")
    osub = oracle.add_subparsers(dest="action", required=True)
    ex = osub.add_parser("expand")
    _globals(ex, True)
    ex.add_argument("--fun", required=True)
    ex.add_argument("--box", type=int, required=True)
    dg = osub.add_parser("diag")
    _globals(dg, True)
    dg.add_argument("--dir", required=True)
    dg.add_argument("--coeffs", help="CoeffBox JSON written by 'oracle expand'")
    dg.add_argument("--fun")
    dg.add_argument("--box", type=int)

    cr = add("crit", help="critical points, heights, lacuna test")
    cr.add_argument("--fun", required=True)
    cr.add_argument("--dir", required=True)
    cr.add_argument("--symmetric", action="store_true")
    cr.add_argument("--require-supporting", action="store_true")

    df = add("dfinite", help="local Frobenius bases")
    dsub = df.add_subparsers(dest="action", required=True)
    bs = dsub.add_parser("basis")
    _globals(bs, True)
    bs.add_argument("--ode", required=True)
    bs.add_argument("--at", default="0")
    bs.add_argument("--order", type=int, default=10)

    cn = add("connect", help="connection constants")
    cn.add_argument("--ode", required=True)
    cn.add_argument("--target", default="a3")
    cn.add_argument("--to", required=True)
    cn.add_argument("--path", default=None, help="comma-separated intermediate waypoints")

    asy = add("asympt", help="connect + transfer")
    asy.add_argument("--ode", required=True)
    asy.add_argument("--target", default="a3")
    asy.add_argument("--n-max", type=int, default=200)

    rs = add("resolve", help="integer multiplicity from an asympt report")
    rs.add_argument("--numeric-from", required=True)
    rs.add_argument("--unit-expr", required=True)

    pl = add("pipeline", help="all stages end to end")
    pl.add_argument("--fun")
    pl.add_argument("--ode")
    pl.add_argument("--dir", default="1,1,1,1")
    pl.add_argument("--target", default="a3")
    pl.add_argument("--box", type=int, default=12)
    pl.add_argument("--n-max", type=int, default=200)
    pl.add_argument("--unit-expr")
    pl.add_argument("--path", default=None)
    pl.add_argument("--grz", action="store_true", help="use the bundled GRZ inputs")
    return p


def _emit(obj, out) -> None:
    text = dumps(obj)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(kind, path):
    try:
        if kind == "fun":
            return RatFun.load(path)
        if kind == "ode":
            return ODE.load(path)
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError("parse", EXIT_PARSE, f"cannot read {path}: {exc}") from exc


def _prec(args) -> int:
    if getattr(args, "prec_bits", None):
        return args.prec_bits
    return max(256, digits_to_bits(_digits(args)) + 64)


def _digits(args) -> int:
    return getattr(args, "digits", None) or 50


def _dispatch(args) -> int:
    out = getattr(args, "out", None)
    seed = getattr(args, "seed", None) or 0
    if args.command == "oracle":
        if args.action == "expand":
            box = expand(_load("fun", args.fun), args.box)
            _emit(box.to_json(), out)
            return EXIT_OK
        if args.coeffs:
            box = CoeffBox.from_json(_load("json", args.coeffs))
        elif args.fun and args.box is not None:
            box = expand(_load("fun", args.fun), args.box)
        else:
            raise StageError("parse", EXIT_PARSE, "oracle diag needs --coeffs or --fun with --box")
        seq = diagonal(box, Direction.parse(args.dir))
        _emit({"dir": args.dir, "diagonal": [f"{int(x.p)}/{int(x.q)}" for x in seq]}, out)
        return EXIT_OK
    if args.command == "crit":
        F = _load("fun", args.fun)
        r = Direction.parse(args.dir)
        sym = args.symmetric and symmetry_classes(F.Q, r) is not None
        rep, report = stage_critical(F, r, min(_prec(args), 256), seed, symmetric=sym)
        _emit(rep, out)
        if args.require_supporting and report.supporting is not True:
            return EXIT_HYPOTHESIS
        return EXIT_OK
    if args.command == "dfinite":
        ode = _load("ode", args.ode)
        prec = _prec(args)
        rep, _ = stage_basis(ode, parse_point(args.at, prec), args.order, prec)
        _emit(rep, out)
        return EXIT_OK
    if args.command == "connect":
        ode = _load("ode", args.ode)
        target = parse_target(args.target, ode.order)
        via = [parse_point(x) for x in args.path.split(",")] if args.path else []
        rep, _ = stage_connect(ode, target, [parse_point(args.to, _prec(args))], _digits(args), via)
        _emit(rep, out)
        return EXIT_OK
    if args.command == "asympt":
        ode = _load("ode", args.ode)
        target = parse_target(args.target, ode.order)
        prec = _prec(args)
        dom = dominant_singularities(ode, prec)
        crep, conns = stage_connect(ode, target, dom, _digits(args))
        cprec = conns[0].metadata["prec_bits"]
        rep, expansion, _ = stage_asymptotics(ode, conns, cprec)
        rec = ode_to_recurrence(ode)
        from .dfinite import frobenius_basis

        origin = frobenius_basis(ode, fmpq(0), rec.order, prec)
        init = [sum((t * b.coefficient(j, 0) for t, b in zip(target, origin)), fmpq(0)) for j in range(rec.order)]
        if any(b.max_log for t, b in zip(target, origin) if t != 0):
            raise StageError("asympt", EXIT_NUMERIC, "target has logarithmic terms at the origin")
        seq = recurrence_extend(rec, init, 2 * args.n_max)
        rep["prediction"] = prediction_json(expansion, seq, [args.n_max // 2, args.n_max, 2 * args.n_max], cprec)
        rep["connections"] = crep["connections"]
        _emit(rep, out)
        return EXIT_OK
    if args.command == "resolve":
        src = _load("json", args.numeric_from)
        rep = stage_resolve(src["terms"], args.unit_expr, _prec(args))
        _emit(rep, out)
        return EXIT_OK
    if args.command == "pipeline":
        kw = dict(
            direction=args.dir,
            target=args.target,
            digits=_digits(args),
            box=args.box,
            n_max=args.n_max,
            path=args.path.split(",") if args.path else [],
            out=out,
            seed=seed,
            prec_bits=getattr(args, "prec_bits", None),
        )
        if args.grz:
            cfg = PipelineConfig.grz(**kw)
        else:
            if not args.fun:
                raise StageError("parse", EXIT_PARSE, "pipeline needs --fun (or --grz)")
            cfg = PipelineConfig(fun=args.fun, ode=args.ode, unit_expr=args.unit_expr, **kw)
        reports = run_pipeline(cfg)
        if not out:
            sys.stdout.write(dumps(reports["summary"]))
        if reports["summary"].get("supporting") is False:
            return EXIT_HYPOTHESIS
        return EXIT_OK
    raise StageError("parse", EXIT_PARSE, f"unknown command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_PARSE
    try:
        return _dispatch(args)
    except StageError as exc:
        sys.stderr.write(dumps(exc.to_json()))
        return exc.code
    except TemplateMismatchError as exc:
        sys.stderr.write(dumps({"stage": args.command, "code": EXIT_NUMERIC, "error": str(exc)}))
        return EXIT_NUMERIC
    except (PrecisionError, ArithmeticError) as exc:
        sys.stderr.write(dumps({"stage": args.command, "code": EXIT_NUMERIC, "error": str(exc)}))
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(dumps({"stage": args.command, "code": EXIT_PARSE, "error": str(exc)}))
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
