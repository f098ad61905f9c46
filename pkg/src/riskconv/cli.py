"""``riskconv`` command line: every report is a JSON document on stdout (or ``--out``).

Exit codes: 0 success, 1 domain error (bad data, failed evaluation), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .approx import localization_limit, refine_scheme
from .config import RunConfig
from .errors import InvalidArgument, NonConvergence, RiskConvError
from .fatou import SequenceFamily, gallery_bigexamp1, gallery_bigexamp2, probe
from .infconv import (
    SolverOptions,
    certify_exactness,
    infconv_bruteforce,
    infconv_law_invariant,
    infconv_surplus,
    sum_acceptance,
)
from .measures import AcceptanceSet, acceptance_value, check_flags, parse_measure
from .norms import fundamental_function, parse_norm, property_star_probe, standard_norms
from .probspace import RandomVariable, read_scenarios, rv

SCHEMA = 1
DEFAULT_X = (-4, -2, 1, 3)


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``"inf"``/``"-inf"``, NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (Fraction, float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return None
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, RandomVariable):
        return jsonable(obj.values.tolist())
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def emit(report: dict, cfg: RunConfig) -> None:
    doc = {"schema": SCHEMA, **report}
    text = json.dumps(jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def load_variable(args, cfg: RunConfig) -> RandomVariable:
    if getattr(args, "scenarios", None):
        sc = read_scenarios(args.scenarios, exact=cfg.exact)
        return sc[args.column] if args.column else sc.first()
    return rv(DEFAULT_X, exact=cfg.exact)


# -- subcommands ---------------------------------------------------------------------------

def cmd_risk_eval(args, cfg):
    X = load_variable(args, cfg)
    rho = parse_measure(args.measure, alpha=args.alpha, gamma=args.gamma)
    value = rho(X)
    report = {"command": "risk eval", "measure": rho.name, "value": value,
              "exact_value": str(value) if isinstance(value, Fraction) else None,
              "flags": sorted(rho.flags)}
    if args.flag_trials > 0:
        report["flags_report"] = check_flags(rho, args.flag_trials, cfg.seed, tol=cfg.tol)
    return report


def cmd_norms_table(args, cfg):
    norms = [parse_norm(n) for n in args.norms.split(",")] if args.norms else standard_norms()
    grid = [2.0**-j for j in range(1, args.grid + 1)]
    rows = []
    for N in norms:
        star = property_star_probe(N, grid, tol=cfg.tol)
        rows.append({"norm": N.name,
                     "fundamental": [[t, fundamental_function(N, t)] for t in grid],
                     "associate_fundamental": star.points,
                     "property_star": star.verdict, "decay_exponent": star.decay_exponent,
                     "small_set_behaviour": star.primal_behaviour})
    return {"command": "norms table", "rows": rows}


def cmd_approx_localize(args, cfg):
    X = load_variable(args, cfg)
    rho = parse_measure(args.measure, alpha=args.alpha, gamma=args.gamma)
    scheme = refine_scheme(X, parse_norm(args.norm), steps=args.steps)
    try:
        res = localization_limit(rho, X, scheme, tol=cfg.tol)
        trace, value, converged = res.trace, res.value, True
    except NonConvergence as exc:
        trace, value, converged = exc.trace, None, False
    return {"command": "approx localize", "measure": rho.name, "norm": args.norm,
            "value": value, "target": rho(X), "converged": converged, "trace": trace}


def cmd_infconv_solve(args, cfg):
    X = load_variable(args, cfg)
    measures = [parse_measure(m) for m in args.measures.split(",")]
    res = infconv_law_invariant(measures, X, SolverOptions(iterations=args.iterations))
    cert = certify_exactness(res, measures, X, tol=max(cfg.tol, 1e-8))
    report = {"command": "infconv solve", "measures": [m.name for m in measures],
              "value": res.value, "converged": res.converged, "gap": res.gap,
              "allocation": res.allocation.to_dict(), "certificate": cert.to_dict(),
              "pieces": [P for P in res.pieces]}
    if args.oracle:
        if len(measures) != 2:
            raise InvalidArgument("the grid oracle handles two measures")
        orc = infconv_bruteforce(measures[0], measures[1], X, grid=args.grid)
        report["oracle"] = {"value": orc.value, "resolution": orc.resolution,
                            "oracle_gap": abs(orc.value - res.value)}
    return report


def _parse_budgets(text):
    out = []
    for part in text.split(","):
        w, _, c = part.partition(":")
        if not c:
            raise InvalidArgument(f"budget {part!r} must look like weight:capacity")
        out.append(AcceptanceSet.budget(Fraction(w.strip()), Fraction(c.strip())))
    if len(out) != 2:
        raise InvalidArgument("infconv surplus needs exactly two budgets")
    return out


def cmd_infconv_surplus(args, cfg):
    X = load_variable(args, cfg)
    A1, A2 = _parse_budgets(args.budgets)
    res = infconv_surplus(A1, A2, X)
    summed = sum_acceptance(A1, A2)
    return {"command": "infconv surplus", "budgets": args.budgets, "value": res.value,
            "exact_value": str(res.value) if isinstance(res.value, Fraction) else None,
            "converged": res.converged, "diagnostics": res.diagnostics,
            "pieces": res.pieces, "accepted": summed.contains(X),
            "value_via_summed_set": acceptance_value(summed, X)}


def cmd_fatou_probe(args, cfg):
    rho = parse_measure(args.measure, alpha=args.alpha, gamma=args.gamma)
    fam = SequenceFamily(args.kind, parse_norm(args.norm), seed=cfg.seed, sign=args.sign)
    rep = probe(rho, fam, trials=args.trials, horizon=args.horizon, tol=cfg.tol)
    return {"command": "fatou probe", "norm": args.norm, "seed": cfg.seed, **rep.to_dict()}


def cmd_fatou_gallery(args, cfg):
    if args.example == "bigexamp2":
        return {"command": "fatou gallery", "example": "bigexamp2", **gallery_bigexamp2(args.nmax)}
    ladder = tuple(int(k) for k in args.ladder.split(","))
    return {"command": "fatou gallery", "example": "bigexamp1", **gallery_bigexamp1(ladder)}


# -- parser ----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def globals_parser(suppress):
        g = argparse.ArgumentParser(add_help=False)
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g.add_argument("--seed", type=int, default=dflt(0))
        g.add_argument("--tol", type=float, default=dflt(1e-9))
        g.add_argument("--mode", choices=("float", "rational"), default=dflt("float"))
        g.add_argument("--out", default=dflt(None), help="write the JSON report here")
        return g

    # options may appear before or after the subcommand; the subcommand copies must not
    # overwrite values given up front, hence SUPPRESS there
    top_common, common = globals_parser(False), globals_parser(True)

    def data_args(p):
        p.add_argument("--scenarios", help="CSV file (header row; optional prob column)")
        p.add_argument("--column", help="column to use (default: first)")

    def measure_args(p, default=None):
        p.add_argument("--measure", required=default is None, default=default,
                       help="es, var, entropic, neg_expectation (or es:0.5 ...)")
        p.add_argument("--alpha", type=str, default=None)
        p.add_argument("--gamma", type=float, default=None)

    parser = argparse.ArgumentParser(prog="riskconv", parents=[top_common],
                                     description="Risk measures on finite probability spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top = parser.add_subparsers(dest="group")

    risk = top.add_parser("risk", help="evaluate risk measures").add_subparsers(dest="action")
    p = risk.add_parser("eval", parents=[common])
    measure_args(p)
    data_args(p)
    p.add_argument("--flag-trials", type=int, default=200)
    p.set_defaults(func=cmd_risk_eval)

    norms = top.add_parser("norms", help="r.i. norm tables").add_subparsers(dest="action")
    p = norms.add_parser("table", parents=[common])
    p.add_argument("--norms", default=None, help="comma list, e.g. L1,L2,Linf,exp")
    p.add_argument("--grid", type=int, default=14, help="use t = 2^-1 .. 2^-grid")
    p.set_defaults(func=cmd_norms_table)

    approx = top.add_parser("approx", help="conditional-expectation schemes").add_subparsers(dest="action")
    p = approx.add_parser("localize", parents=[common])
    measure_args(p)
    data_args(p)
    p.add_argument("--norm", default="L1")
    p.add_argument("--steps", type=int, default=64)
    p.set_defaults(func=cmd_approx_localize)

    inf = top.add_parser("infconv", help="risk sharing").add_subparsers(dest="action")
    p = inf.add_parser("solve", parents=[common])
    p.add_argument("--measures", required=True, help="comma list, e.g. es:0.3,es:0.6")
    data_args(p)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--oracle", action="store_true", help="cross-check with the grid oracle")
    p.add_argument("--grid", type=int, default=41)
    p.set_defaults(func=cmd_infconv_solve)
    p = inf.add_parser("surplus", parents=[common])
    p.add_argument("--budgets", required=True, help="two weight:capacity pairs, e.g. 1:0.3,1:0.2")
    data_args(p)
    p.set_defaults(func=cmd_infconv_surplus)

    fat = top.add_parser("fatou", help="Fatou-property probes").add_subparsers(dest="action")
    p = fat.add_parser("probe", parents=[common])
    measure_args(p)
    p.add_argument("--kind", choices=("order_dominated", "norm_bounded_as", "as_only"),
                   default="as_only")
    p.add_argument("--norm", default="L1")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--horizon", type=int, default=64)
    p.add_argument("--sign", choices=("random", "+", "-"), default="random")
    p.set_defaults(func=cmd_fatou_probe)
    p = fat.add_parser("gallery", parents=[common])
    p.add_argument("example", choices=("bigexamp2", "bigexamp1"))
    p.add_argument("--nmax", type=int, default=8)
    p.add_argument("--ladder", default="4,6,8,10,12")
    p.set_defaults(func=cmd_fatou_gallery)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = RunConfig.resolve(args.seed, args.tol, args.mode, args.out)
        emit(args.func(args, cfg), cfg)
    except RiskConvError as exc:
        print(f"riskconv: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"riskconv: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
