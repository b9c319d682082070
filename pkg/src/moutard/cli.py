"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage or parse error,
3 numerical failure (no regular path, quadrature, empty domain).
Data goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import catalog
from .exprlang import DomainError, ExprError, compile_exprs, parameters, parse, to_text
from .quadrature import GridSpec, NoPathFoundError, QuadratureError
from .schrodinger import EmptyDomainError, Potential, SeedSolution, residual_report
from .transform import (
    DEFAULT_TOL, DegenerateSeedError, IncoherentSeedsError, SeedNotSolutionError,
    TransformedSolutionField, compare_field, field_residual_report, gauge_fit, make_oneform, make_step,
    verify_seed,
)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _threads() -> int:
    raw = os.environ.get("MOUTARD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise UsageError(f"MOUTARD_THREADS must be an integer, got {raw!r}") from None
    return min(8, os.cpu_count() or 1)


def _point(text: str) -> tuple:
    try:
        r, z = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"expected a point 'r,z', got {text!r}") from None
    return r, z


def _params(items) -> dict:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"expected NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"parameter {name!r} needs a number, got {value!r}") from None
    return out


def _grid(text, default=None) -> GridSpec:
    if text is None:
        return default
    try:
        return GridSpec.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _expr(text: str, params: dict, what: str):
    e = parse(text)
    missing = parameters(e) - set(params)
    if missing:
        raise UsageError(f"{what}: unbound parameter(s) {', '.join(sorted(missing))}; pass --param NAME=VALUE")
    return e


def _exclusions(items, params):
    out = []
    for item in items or ():
        text, sep, eps = item.rpartition(":")
        if not sep:
            raise UsageError(f"expected EXPR:EPS, got {item!r}")
        out.append((_expr(text, params, "exclusion"), float(eps)))
    return out


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _fmt(x) -> str:
    return "%.17g" % x


# commands ----------------------------------------------------------------------------

def cmd_transform(args) -> int:
    params = _params(args.param)
    u = _expr(args.potential, params, "potential")
    y_h = _expr(args.seed, params, "seed")
    grid = _grid(args.grid, None)
    step = make_step(Potential(u), SeedSolution(y_h), params, grid, args.tol)
    out = step.to_json()
    if args.at:
        r, z = _point(args.at)
        out["value_at"] = {"r": r, "z": z, "value": compile_exprs((step.u_tilde.expr,), params).scalar(r, z)[0]}
    if args.out == "json":
        _emit(out)
    else:
        print(to_text(step.u_tilde.expr))
        if args.at:
            print(_fmt(out["value_at"]["value"]))
        v = step.verified
        print(f"seed verified: max relative residual {v.max_rel_residual:.3e} over {v.n_evaluated} points "
              f"({v.n_skipped_singular} singular skipped)", file=sys.stderr)
    return EXIT_OK


def _build_field(args, params):
    u = Potential(_expr(args.potential, params, "potential"))
    y_h = SeedSolution(_expr(args.seed, params, "seed"))
    y = SeedSolution(_expr(args.solution, params, "solution"))
    grid = _grid(args.grid_verify, None)
    verify_seed(u, y_h, params, grid, args.tol)
    verify_seed(u, y, params, grid, args.tol)
    make_oneform(y, y_h, params, grid)
    return TransformedSolutionField(y, y_h, params, _point(args.base), additive_constant=args.additive_constant,
                                    tol=args.quad_tol)


def cmd_solve(args) -> int:
    params = _params(args.param)
    if (args.at is None) == (args.grid is None):
        raise UsageError("solve needs exactly one of --at or --grid")
    fld = _build_field(args, params)
    if args.at is not None:
        r, z = _point(args.at)
        value = fld.value(r, z)
        if args.out == "json":
            _emit({"r": r, "z": z, "value": value, "P": fld.potential_value((r, z)),
                   "basepoint": list(fld.basepoint)})
        else:
            print("r,z,value")
            print(f"{_fmt(r)},{_fmt(z)},{_fmt(value)}")
        return EXIT_OK
    grid = _grid(args.grid)
    rr, zz = grid.mesh()
    pts = list(zip(rr.ravel().tolist(), zz.ravel().tolist()))

    def one(p):
        try:
            return fld.value(*p)
        except (NoPathFoundError, ZeroDivisionError, QuadratureError):
            return float("nan")

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        values = list(pool.map(one, pts))
    missing = sum(1 for v in values if v != v)
    if missing:
        print(f"{missing} of {len(values)} grid points unreachable or singular (written as nan)", file=sys.stderr)
    if args.out == "json":
        _emit({"grid": grid.to_json(), "basepoint": list(fld.basepoint),
               "points": [{"r": p[0], "z": p[1], "value": (None if v != v else v)} for p, v in zip(pts, values)]})
    else:
        print("r,z,value")
        for (r, z), v in zip(pts, values):
            print(f"{_fmt(r)},{_fmt(z)},{_fmt(v)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    params = _params(args.param)
    u = _expr(args.potential, params, "potential")
    y = _expr(args.solution, params, "solution")
    grid = _grid(args.grid, None)
    rep = residual_report(Potential(u), SeedSolution(y), grid, params, _exclusions(args.exclude, params))
    ok = rep.max_rel_residual < args.tol
    out = rep.to_json()
    out["passed"] = ok
    out["tolerance"] = args.tol
    _emit(out)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_scan(args) -> int:
    params = _params(args.param)
    e = _expr(args.expr, params, "expression")
    grid = _grid(args.grid)
    out = catalog.sign_scan(e, params, grid)
    out["expr"] = to_text(e)
    ok = True
    if args.expect == "finite":
        ok = out["n_singular"] == 0
    elif args.expect == "negative":
        ok = out["n_singular"] == 0 and out["max"] is not None and out["max"] < 0
    elif args.expect == "positive":
        ok = out["n_singular"] == 0 and out["min"] is not None and out["min"] > 0
    if args.expect:
        out["expect"] = args.expect
        out["passed"] = ok
    _emit(out)
    return EXIT_OK if ok else EXIT_VERIFY


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict) or "u0" not in cfg or not isinstance(cfg.get("steps"), list):
        raise UsageError("config needs 'u0' and a list 'steps'")
    for i, st in enumerate(cfg["steps"]):
        if not isinstance(st, dict) or (("y_h" in st) == ("carry" in st)):
            raise UsageError(f"step {i} needs exactly one of 'y_h' or 'carry'")
    return cfg


def cmd_chain(args) -> int:
    cfg = _load_config(args.config)
    params = {k: float(v) for k, v in cfg.get("params", {}).items()}
    tols = dict({"residual": DEFAULT_TOL, "quadrature": 1e-10, "equality": 1e-9}, **cfg.get("tolerances", {}))
    grid = GridSpec.from_json(cfg["grid"]) if "grid" in cfg else None
    seeds = {name: SeedSolution(_expr(text, params, f"seed {name}")) for name, text in cfg.get("seeds", {}).items()}
    base = tuple(cfg.get("basepoint", (1.0, 0.0)))
    fit_points = [tuple(p) for p in cfg.get("fit_points", ())]
    u = Potential(_expr(cfg["u0"], params, "u0"))
    carried: dict = {}
    stages = []
    passed = True
    stage = 0
    for i, st in enumerate(cfg["steps"]):
        if "carry" in st:
            name = st["carry"]
            if name not in seeds:
                raise UsageError(f"step {i}: unknown seed {name!r}")
            try:
                verify_seed(u, seeds[name], params, grid, tols["residual"])
            except (SeedNotSolutionError, DegenerateSeedError) as exc:
                print(f"stage {stage}: carried solution {name!r}: {exc}", file=sys.stderr)
                _emit({"stages": stages, "passed": False, "failed_stage": stage})
                return EXIT_VERIFY
            carried[name] = seeds[name]
            continue
        y_h = SeedSolution(_expr(st["y_h"], params, f"step {i} seed"))
        try:
            step = make_step(u, y_h, params, grid, tols["residual"])
        except (SeedNotSolutionError, DegenerateSeedError) as exc:
            print(f"stage {stage}: {exc}", file=sys.stderr)
            _emit({"stages": stages, "passed": False, "failed_stage": stage})
            return EXIT_VERIFY
        out = step.to_json()
        out["stage"] = stage
        if "expect" in st:
            err = catalog.compare_exprs(step.u_tilde.expr, _expr(st["expect"], params, "expect"), params,
                                        grid or step.u_tilde.region, 100, stage)
            ok = err < tols["equality"]
            out["expect"] = {"max_rel_difference": err, "passed": ok}
            passed &= ok
        moved = {}
        reports = {}
        for name, sol in carried.items():
            fld = TransformedSolutionField(sol, y_h, params, base, tol=tols["quadrature"])
            rep = field_residual_report(step.u_tilde, fld)
            ok = rep.max_rel_residual < tols["residual"]
            entry = {"residual": rep.to_json(), "passed": ok}
            target = st.get("expect_solutions", {}).get(name)
            if target is not None:
                if len(fit_points) < 2:
                    raise UsageError("expect_solutions needs two 'fit_points' in the config")
                alpha, beta, fld = gauge_fit(fld, _expr(target, params, "expected solution"), fit_points, params)
                probe = [tuple(p) for p in cfg.get("check_points", ())]
                err, n = compare_field(fld, _expr(target, params, "expected solution"), probe, params)
                gauge_ok = n > 0 and err < tols.get("gauge", 1e-6)
                entry["gauge_fit"] = {"alpha": alpha, "beta": beta, "max_rel_difference": err,
                                      "n_points": n, "passed": gauge_ok}
                ok &= gauge_ok
            passed &= ok
            reports[name] = entry
            moved[name] = fld
        out["carried"] = reports
        stages.append(out)
        carried = moved
        u = step.u_tilde
        stage += 1
        if not passed:
            break
    result = {"stages": stages, "passed": passed, "final_potential": to_text(u.expr)}
    if not passed:
        result["failed_stage"] = stage if stage == len(stages) else stage - 1
    _emit(result)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_catalog(args) -> int:
    if args.action == "list":
        for name in catalog.list_entries():
            print(f"{name}\t{catalog.get_entry(name).description}")
        return EXIT_OK
    if args.action == "export":
        _emit(catalog.export_json())
        return EXIT_OK
    if args.action == "show":
        if not args.names:
            raise UsageError("catalog show needs an entry name")
        _emit([catalog.get_entry(n).to_json() for n in args.names])
        return EXIT_OK
    names = catalog.list_entries() if args.all else args.names
    if not names:
        raise UsageError("catalog verify needs entry names or --all")
    for n in names:
        catalog.get_entry(n)
    params = _params(args.param)

    def run(n):
        return catalog.verify_entry(n, params or None)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        reports = list(pool.map(run, names))
    for rep in reports:
        status = "pass" if rep.passed else "FAIL"
        print(f"{status} {rep.name}", file=sys.stderr)
    _emit({"passed": all(r.passed for r in reports), "entries": [r.to_json() for r in reports]})
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


# parser --------------------------------------------------------------------------------

def _add_common(p, out_choices=("text", "json")):
    p.add_argument("--param", "-p", action="append", metavar="NAME=VALUE", help="bind a parameter")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="relative residual tolerance")
    if out_choices:
        p.add_argument("--out", choices=out_choices, default=out_choices[0])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moutard", description="Generalized Moutard transformation toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="transformed potential for a seed")
    p.add_argument("--potential", required=True)
    p.add_argument("--seed", required=True)
    p.add_argument("--grid", help="verification grid rmin:rmax:n,zmin:zmax:n")
    p.add_argument("--at", help="also evaluate the new potential at r,z")
    _add_common(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("solve", help="transformed solution by line integration")
    p.add_argument("--potential", required=True)
    p.add_argument("--seed", required=True, help="the seed Y_h")
    p.add_argument("--solution", required=True, help="the solution Y to transform")
    p.add_argument("--base", default="1,0", help="base point r,z where P equals the additive constant")
    p.add_argument("--at", help="target point r,z")
    p.add_argument("--grid", help="target grid rmin:rmax:n,zmin:zmax:n")
    p.add_argument("--grid-verify", help="grid for the seed checks")
    p.add_argument("--additive-constant", type=float, default=0.0)
    p.add_argument("--quad-tol", type=float, default=1e-10)
    _add_common(p, ("csv", "json"))
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="residual report for a (potential, solution) pair")
    p.add_argument("--potential", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--grid")
    p.add_argument("--exclude", action="append", metavar="EXPR:EPS", help="skip points where |EXPR| < EPS")
    _add_common(p, None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan", help="min, max, sign changes and singular points over a grid")
    p.add_argument("--expr", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--expect", choices=("finite", "negative", "positive"))
    p.add_argument("--param", "-p", action="append", metavar="NAME=VALUE")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("chain", help="run a chain of transformations from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("catalog", help="built-in worked examples")
    p.add_argument("action", choices=("list", "show", "verify", "export"))
    p.add_argument("names", nargs="*")
    p.add_argument("--all", action="store_true")
    p.add_argument("--param", "-p", action="append", metavar="NAME=VALUE")
    p.set_defaults(func=cmd_catalog)
    return ap


_VALUE_OPTIONS = {"--potential", "--seed", "--solution", "--expr", "--exclude", "--at", "--base"}


def _join_values(argv):
    """Attach values like ``-k^2`` to their option so argparse does not read them as flags."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_OPTIONS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_values(argv))
    try:
        return args.func(args)
    except (UsageError, ExprError, catalog.UnknownEntryError) as exc:
        if isinstance(exc, DomainError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (SeedNotSolutionError, DegenerateSeedError, IncoherentSeedsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (NoPathFoundError, QuadratureError, EmptyDomainError, ZeroDivisionError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
