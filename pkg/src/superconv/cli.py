"""Command-line entry point: ``superconv {solve,study,check,extend,theory}``.

Exit codes: 0 success, 1 usage or config error, 2 solver non-convergence,
3 verdict failure, 4 reference unconverged.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import parse_config, render_config
from .core import DomainSpec, Family, Field, norms
from .extension import BoundaryDataError, odd_extend, solve_dirichlet_direct, solve_dirichlet_via_extension
from .lab import (
    ConfigError,
    MissingTheoryRow,
    ReferenceUnconverged,
    StudyAborted,
    TheoryTable,
    check_assumptions,
    run_study,
    solve_case,
)
from .output import emit_csv, emit_manifest, emit_plot
from .solver import NonConvergence, build_aux_operators, galerkin_orthogonality_residual
from .spaces import build_space

EXIT_OK, EXIT_USAGE, EXIT_NONCONV, EXIT_VERDICT, EXIT_REFERENCE = 0, 1, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("superconv")

# boundary-vanishing data for the extend subcommand
EXTEND_FUNCTIONS = {
    "sin": lambda x: np.sin(np.pi * x),
    "parabola": lambda x: 1 - x**2,
    "cubic": lambda x: x * (1 - x**2),
    "expbump": lambda x: (1 - x**2) * np.exp(x),
    "sin2": lambda x: np.sin(2 * np.pi * x),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", metavar="PATH", required=config_required, help="study configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    p.add_argument("--plot", action="store_true", help="write an SVG convergence plot")
    p.add_argument("--threads", metavar="K", type=int, default=1, help="parallel cases in a study")
    p.add_argument("--seed", metavar="S", type=int, default=0, help="reserved; all data is deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="superconv", description="Galerkin Gross-Pitaevskii solvers and superconvergence studies")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one discrete problem and write its coefficients")
    _common(p)
    p.add_argument("--size", type=int, help="resolution to solve at (default: finest case)")

    p = sub.add_parser("study", help="run a refinement sweep and fit rates")
    _common(p)
    p.add_argument("--timings", action="store_true", help="fill the wall_ms column (breaks byte determinism)")

    p = sub.add_parser("check", help="assumption and invariant diagnostics over the sweep")
    _common(p)

    p = sub.add_parser("extend", help="Dirichlet Poisson solve through the odd periodic extension")
    _common(p, config_required=False)
    p.add_argument("--g", choices=sorted(EXTEND_FUNCTIONS), help="built-in right-hand side")
    p.add_argument("--samples", metavar="FILE", help="equispaced samples of g on [-1, 1], one per line")
    p.add_argument("--degree", type=int, default=48)
    p.add_argument("--resolution", type=int, default=512)

    p = sub.add_parser("theory", help="print the theory-table row")
    _common(p, config_required=False)
    p.add_argument("--basis", choices=[f.value for f in Family])
    p.add_argument("--problem", choices=["src", "eig"], default="src")
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--regularity", type=float, default=math.inf)
    return parser


def _setup_logging():
    level = os.environ.get("SUPERCONV_LOG", "error").strip().lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"SUPERCONV_LOG must be one of {', '.join(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("superconv").setLevel(LOG_LEVELS[level])


def _load(args):
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    return parse_config(text)


def _out_dir(args, cfg) -> Path:
    return Path(args.out) if args.out else Path(cfg.out_dir)


def cmd_solve(args) -> int:
    cfg = _load(args)
    size = args.size or cfg.sizes[-1]
    space, sol = solve_case(cfg, size)
    n = norms(space, sol.u)
    print(f"basis      {space.basis.family.value} size={size} dim={space.dim}")
    print(f"energy     {sol.energy:.17e}")
    if cfg.kind == "eig":
        print(f"lambda     {sol.lam:.17e}")
    print(f"residual   {sol.residual:.3e}")
    print(f"iterations {sol.iterations}")
    print(f"norms      l2={n.l2:.17e} h1={n.h1:.17e}")
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"solution_{space.basis.family.value}_{size}.txt"
    np.savetxt(path, sol.u.coeffs, fmt="%.17e", header=f"{space.basis.family.value} size={size} dim={space.dim}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_study(args) -> int:
    cfg = _load(args)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    out = _out_dir(args, cfg)
    text = render_config(cfg)
    try:
        outcome = run_study(cfg, threads=args.threads)
    except ReferenceUnconverged as exc:
        print(f"reference unconverged: {exc}", file=sys.stderr)
        if exc.results is not None:
            emit_csv(exc.results.results, out / cfg.csv_name, args.timings)
            emit_manifest(out / "manifest.json", text, exc.results.results, exc.results.report, {"status": "reference_unconverged"})
        return EXIT_REFERENCE
    except StudyAborted as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    rep = outcome.report
    emit_csv(outcome.results, out / cfg.csv_name, args.timings)
    emit_manifest(
        out / "manifest.json",
        text,
        outcome.results,
        rep,
        {"reference_gap_h1": outcome.reference_gap_h1, "reference_shift": outcome.reference_shift},
    )
    if args.plot:
        plot = emit_plot(outcome.results, rep, out / cfg.plot_name, title=f"{cfg.family.value} {cfg.kind}")
        for note in plot.notes:
            print(f"plot note: {note}")
    for col, s in rep.slopes.items():
        print(f"slope {col:10s} {s:8.3f}")
    print(f"gain  l2 {rep.gain_l2:8.3f}  (theory {rep.theory.gain_l2})")
    print(f"gain  h1 {rep.gain_h1:8.3f}  (theory {rep.theory.gain_h1})")
    for name, ok in rep.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"wrote {out / cfg.csv_name}")
    return EXIT_OK if rep.passed else EXIT_VERDICT


def cmd_check(args) -> int:
    cfg = _load(args)
    ref_space, ref = solve_case(cfg, cfg.reference)
    sols, gal = [], []
    for n in cfg.sizes:
        space, sol = solve_case(cfg, n, reference_for_sign=ref.u)
        sols.append(sol.u)
        if cfg.kind == "src":
            aux = build_aux_operators(space, ref.u, sol.u, cfg.V)
            gal.append(galerkin_orthogonality_residual(space, aux, ref.u, sol.u))
    rep = check_assumptions(sols, cfg.V, ref.u)
    ok = rep.min_coercivity >= rep.coercivity_floor - 1e-10 and rep.bounded_monotone
    print(f"linf bound        {rep.linf_bound:.6e}")
    print(f"V_tilde bound     {rep.v_tilde_bound:.6e}")
    print(f"min coercivity    {rep.min_coercivity:.6e}  (floor {rep.coercivity_floor:.6e})")
    print(f"bounded           {rep.bounded_monotone}")
    if gal:
        worst = max(gal)
        ok = ok and worst <= 1e-8
        print(f"galerkin residual {worst:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_extend(args) -> int:
    if (args.g is None) == (args.samples is None):
        raise UsageError("extend needs exactly one of --g or --samples")
    if args.g is not None:
        g = EXTEND_FUNCTIONS[args.g]
    else:
        try:
            g = np.loadtxt(args.samples, ndmin=1)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read samples: {exc}") from None
    try:
        ext = odd_extend(g, args.resolution)
        u = solve_dirichlet_via_extension(g, args.degree, args.resolution)
    except BoundaryDataError as exc:
        raise UsageError(str(exc)) from None
    space = build_space(DomainSpec.for_family(Family.LEGENDRE), u.basis)
    xs = np.linspace(-1, 1, 9)
    vals = space.eval_at(u.coeffs, xs)
    print(f"extension mean {ext.mean:.3e}")
    for x, v in zip(xs, vals):
        print(f"u({x:+.2f}) = {v:+.17e}")
    if args.g is not None:
        direct = solve_dirichlet_direct(g, args.degree)
        diff = norms(space, Field(u.basis, u.coeffs - direct.coeffs)).h1
        print(f"H1 difference to direct Legendre solve {diff:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "extension_solution.txt", u.coeffs, fmt="%.17e", header=f"legendre degree={args.degree}")
    return EXIT_OK


def cmd_theory(args) -> int:
    if args.config:
        cfg = _load(args)
        family, problem, degree, t, reg = cfg.family, cfg.kind, cfg.degree, cfg.t, cfg.regularity
    else:
        if args.basis is None:
            raise UsageError("theory needs --basis or --config")
        family, problem, degree, t, reg = args.basis, args.problem, args.degree, args.t, args.regularity
    try:
        row = TheoryTable.row(family, problem, degree, t, reg)
    except MissingTheoryRow as exc:
        raise UsageError(str(exc)) from None
    print(f"family   {row.family.value}  problem {row.problem}  degree {row.degree}  t {row.t:g}")
    print(f"std_l2   {row.std_l2:g}")
    print(f"std_h1   {row.std_h1:g}")
    print(f"gain_l2  {'not asserted' if row.gain_l2 is None else f'{row.gain_l2:g}'}")
    print(f"gain_h1  {row.gain_h1:g}")
    if row.note:
        print(f"note     {row.note}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "check": cmd_check, "extend": cmd_extend, "theory": cmd_theory}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        log.debug("seed %d (reserved)", args.seed)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except ReferenceUnconverged as exc:
        print(f"reference unconverged: {exc}", file=sys.stderr)
        return EXIT_REFERENCE


if __name__ == "__main__":
    sys.exit(main())
