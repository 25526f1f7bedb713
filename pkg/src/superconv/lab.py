"""Refinement studies: error columns against a reference, EOC fits and theory comparison."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import BasisTag, DomainSpec, Family, Field, PotentialSpec, norms
from .solver import (
    EigProblem,
    NonConvergence,
    SolverOptions,
    SourceProblem,
    build_aux_operators,
    cbar_diagnostic,
    solve_eig,
    solve_source,
)
from .spaces import SpaceHandle, TransferMap, build_space, project_x

log = logging.getLogger(__name__)

ERROR_COLUMNS = ("e_std_l2", "e_std_h1", "e_best_l2", "e_best_h1", "e_sup_l2", "e_sup_h1")
SPECTRAL_FLOOR = 1e-15
FLOOR_FACTOR = 100.0  # >= 50; 100 keeps every accepted error reference-independent to 1%
REFERENCE_RTOL = 0.01


class ConfigError(ValueError):
    pass


class ReferenceUnconverged(RuntimeError):
    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = results


class StudyAborted(RuntimeError):
    """A case failed to converge; ``results`` holds the cases finished so far."""

    def __init__(self, message, results, cause: NonConvergence):
        super().__init__(message)
        self.results = results
        self.cause = cause


@dataclass(frozen=True)
class StudyConfig:
    """One refinement sweep.

    ``sizes`` are N values for spectral families and element counts M for
    FEM. ``regularity`` is the Sobolev index of the exact solution used for
    the standard-rate row of the theory table; ``t`` is the FEM gain index.
    """

    kind: str
    family: Family
    sizes: tuple[int, ...]
    reference: int
    V: PotentialSpec
    f: Optional[PotentialSpec] = None
    degree: int = 1
    cubic_on: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)
    oversample: int = 1
    regularity: float = math.inf
    t: float = 1.0
    tolerance: Optional[float] = None
    out_dir: str = "results"
    csv_name: str = "study.csv"
    plot_name: str = "study.svg"

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if self.family is not Family.FEM:
            object.__setattr__(self, "degree", 1)
        self.validate()

    def validate(self):
        if self.kind not in ("src", "eig"):
            raise ConfigError(f"problem kind must be src or eig, got {self.kind!r}")
        if self.kind == "src" and self.f is None:
            raise ConfigError("source studies need a source term f")
        if self.kind == "eig" and self.f is not None:
            raise ConfigError("eigen studies take no source term")
        if len(self.sizes) < 4:
            raise ConfigError("at least 4 cases are needed for rate fitting")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ConfigError("resolution list must be strictly increasing")
        if self.reference < 8 * self.sizes[-1]:
            raise ConfigError("reference resolution must be at least 8x the finest case")
        if self.family is Family.FEM and any(self.reference % m for m in self.sizes):
            raise ConfigError("FEM reference mesh must refine every case mesh")
        if self.oversample < 1:
            raise ConfigError("oversample must be >= 1")

    @property
    def domain(self) -> DomainSpec:
        return DomainSpec.for_family(self.family)

    def basis(self, size: int) -> BasisTag:
        return BasisTag(self.family, size, self.degree)

    @property
    def gain_tolerance(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return 0.45 if self.family is Family.LEGENDRE else 0.35


@dataclass(frozen=True)
class CaseResult:
    delta: float
    dim: int
    e_std_l2: float
    e_std_h1: float
    e_best_l2: float
    e_best_h1: float
    e_sup_l2: float
    e_sup_h1: float
    lambda_err: Optional[float] = None
    cbar: Optional[float] = None
    iters: int = 0
    wall_ms: float = 0.0

    def column(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class TheoryRow:
    family: Family
    problem: str
    degree: int
    t: float
    std_l2: float
    std_h1: float
    gain_l2: Optional[float]
    gain_h1: float
    note: str = ""


class MissingTheoryRow(KeyError):
    pass


class TheoryTable:
    """Read-only lookup of standard rates and superconvergence gains."""

    @staticmethod
    def row(family, problem: str, degree: int = 1, t: float = 1.0, regularity: float = math.inf) -> TheoryRow:
        family = Family(family)
        if problem not in ("src", "eig"):
            raise MissingTheoryRow(f"no row for problem {problem!r}")
        if family is Family.FEM:
            if degree not in (1, 2, 3):
                raise MissingTheoryRow(f"no row for FEM degree {degree}")
            h1 = min(float(degree), regularity - 1)
            if degree == 1:
                return TheoryRow(family, problem, 1, 0.0, h1 + 1, h1, None, 1.0, "L2 gain not asserted for P1")
            if not (0 <= t < 1.5 and t <= degree - 1):
                raise MissingTheoryRow(f"t={t} outside [0, 3/2) and [0, n-1]")
            return TheoryRow(family, problem, degree, t, h1 + 1, h1, t + 1, t / 2)
        h1 = regularity - 1
        if family is Family.LEGENDRE:
            return TheoryRow(family, problem, 1, 0.0, h1 + 1, h1, 3.0, 2.0, "gains reduced by epsilon")
        return TheoryRow(family, problem, 1, 0.0, h1 + 1, h1, 3.0, 2.0)


def theory_row(config: StudyConfig) -> TheoryRow:
    return TheoryTable.row(config.family, config.kind, config.degree, config.t, config.regularity)


def fit_eoc(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(delta).

    Errors below the spectral floor give ``+inf``: the sequence has already
    converged to rounding level and no algebraic order is observable.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    d = np.array([p[0] for p in pts], dtype=float)
    e = np.array([p[1] for p in pts], dtype=float)
    if np.any(d <= 0) or np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("deltas must be positive and errors nonnegative")
    if np.any(e < SPECTRAL_FLOOR):
        return math.inf
    x, y = np.log(d), np.log(e)
    if np.ptp(x) == 0:
        raise ValueError("deltas must not all coincide")
    return float(np.polyfit(x, y, 1)[0])


def _fit_residual(points) -> float:
    d = np.log([p[0] for p in points])
    e = np.log([p[1] for p in points])
    if len(points) < 3:
        return 0.0
    coef = np.polyfit(d, e, 1)
    return float(np.max(np.abs(e - np.polyval(coef, d))))


@dataclass(frozen=True)
class RateReport:
    slopes: dict
    fit_residuals: dict
    fit_points: dict
    gain_l2: float
    gain_h1: float
    theory: TheoryRow
    verdicts: dict
    lambda_slope: Optional[float] = None
    cbar_slope: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _accepted(results: Sequence[CaseResult], column: str, floors: Optional[dict]) -> list[CaseResult]:
    keep = []
    for r in results:
        v = r.column(column)
        if v is None or v < SPECTRAL_FLOOR:
            continue
        if floors is not None and v < FLOOR_FACTOR * floors[column].get(r.delta, 0.0):
            continue
        keep.append(r)
    return keep


def _finest_half(results: list[CaseResult], total: int) -> list[CaseResult]:
    ordered = sorted(results, key=lambda r: r.delta)
    k = max(2, math.ceil(total / 2))
    return sorted(ordered[:k], key=lambda r: -r.delta)


def rate_report(results: Sequence[CaseResult], theory: TheoryRow, tol: float, floors: Optional[dict] = None) -> RateReport:
    """Fit every error column over the finest half of the accepted cases."""
    slopes, residuals, used = {}, {}, {}
    cols = list(ERROR_COLUMNS)
    if results and results[0].lambda_err is not None:
        cols += ["lambda_err", "cbar"]
    for col in cols:
        if col == "cbar":
            rows = [r for r in results if r.cbar is not None and abs(r.cbar) >= SPECTRAL_FLOOR]
            if floors is not None:
                rows = [r for r in rows if abs(r.cbar) >= FLOOR_FACTOR * floors[col].get(r.delta, 0.0)]
            pts = [(r.delta, abs(r.cbar)) for r in _finest_half(rows, len(results))] if len(rows) >= 2 else []
        else:
            rows = _accepted(results, col, floors)
            pts = [(r.delta, r.column(col)) for r in _finest_half(rows, len(results))] if len(rows) >= 2 else []
        if len(pts) >= 2:
            slopes[col] = fit_eoc(pts)
            residuals[col] = _fit_residual(pts)
        else:
            slopes[col] = math.inf
            residuals[col] = math.nan
        used[col] = tuple(p[0] for p in pts)
    gain_l2 = slopes["e_sup_l2"] - slopes["e_best_h1"]
    gain_h1 = slopes["e_sup_h1"] - slopes["e_best_h1"]
    report = RateReport(
        slopes,
        residuals,
        used,
        gain_l2,
        gain_h1,
        theory,
        {},
        slopes.get("lambda_err"),
        slopes.get("cbar"),
    )
    return replace(report, verdicts=compare_to_theory(report, theory, tol))


def compare_to_theory(report: RateReport, table, tol: float) -> dict:
    """Gains must match within ``tol``; standard slopes only need to reach theory - tol."""
    row = table if isinstance(table, TheoryRow) else table.row(
        report.theory.family, report.theory.problem, report.theory.degree, report.theory.t
    )
    if row is None:
        raise MissingTheoryRow("no matching theory row")
    out = {}
    if row.gain_l2 is not None:
        out["gain_l2"] = bool(abs(report.gain_l2 - row.gain_l2) <= tol)
    out["gain_h1"] = bool(abs(report.gain_h1 - row.gain_h1) <= tol)
    if math.isfinite(row.std_l2):
        out["std_l2"] = bool(report.slopes["e_std_l2"] >= row.std_l2 - tol)
        out["std_h1"] = bool(report.slopes["e_std_h1"] >= row.std_h1 - tol)
    return out


# --------------------------------------------------------------------------
# running a study
# --------------------------------------------------------------------------


STUDY_TOL_FACTOR = 1e-3


def solve_case(config: StudyConfig, size: int, reference_for_sign: Optional[Field] = None):
    space = build_space(config.domain, config.basis(size), config.oversample)
    # superconvergent errors reach the 1e-12 range, so sweep solves are
    # driven to the rounding floor rather than the nominal tolerance
    opts = replace(config.solver, tol_residual=config.solver.tol_residual * STUDY_TOL_FACTOR)
    if config.kind == "src":
        sol = solve_source(SourceProblem(space, config.V, config.f, config.cubic_on), opts)
    else:
        sol = solve_eig(EigProblem(space, config.V), opts, reference_for_sign=reference_for_sign)
    return space, sol


def case_errors(case_space: SpaceHandle, u_case: Field, ref_space: SpaceHandle, u_ref: Field) -> dict:
    """Six error columns (and c-bar) of one case measured in the reference space."""
    tm = TransferMap(case_space, ref_space)
    proj = project_x(case_space, u_ref)
    uc = tm.apply(u_case.coeffs)
    pc = tm.apply(proj.coeffs)
    ref = u_ref.coeffs
    std = norms(ref_space, Field(ref_space.basis, ref - uc))
    best = norms(ref_space, Field(ref_space.basis, ref - pc))
    sup = norms(ref_space, Field(ref_space.basis, pc - uc))
    out = dict(
        e_std_l2=std.l2, e_std_h1=std.h1, e_best_l2=best.l2, e_best_h1=best.h1, e_sup_l2=sup.l2, e_sup_h1=sup.h1
    )
    out["cbar"] = cbar_diagnostic(u_ref, u_case, proj)
    return out


@dataclass(frozen=True)
class StudyOutcome:
    config: StudyConfig
    results: tuple[CaseResult, ...]
    report: RateReport
    reference_gap_h1: float
    reference_shift: dict
    solutions: tuple = field(default=(), repr=False)
    reference: Optional[Field] = field(default=None, repr=False)
    flagged: tuple = ()  # eigen sizes whose energy sits suspiciously far above the reference


def _reference_pair(config: StudyConfig):
    ref_space, ref_sol = solve_case(config, config.reference)
    ref2_space, ref2_sol = solve_case(config, 2 * config.reference, reference_for_sign=ref_sol.u)
    return (ref_space, ref_sol), (ref2_space, ref2_sol)


ENERGY_GAP_FACTOR = 10.0


def _energy_flags(config, ref_sol, done) -> tuple:
    # a conforming minimiser has 0 <= E_delta - E_ref <~ (1 + lambda) |e|_H1^2 / 2;
    # anything well beyond that suggests an excited branch. Flagged, not resolved.
    scale = ENERGY_GAP_FACTOR * max(1.0, abs(ref_sol.lam))
    out = []
    for res, _, sol in done:
        excess = sol.energy - ref_sol.energy
        if excess > scale * res.e_std_h1**2 + 1e-12 * max(1.0, abs(ref_sol.energy)):
            log.warning("size delta=%g: energy %.6e exceeds reference by %.3e", res.delta, sol.energy, excess)
            out.append(res.delta)
    return tuple(out)


def run_study(config: StudyConfig, threads: int = 1) -> StudyOutcome:
    """Solve the reference (at R and 2R), then every case, and fit the rates."""
    config.validate()
    try:
        (ref_space, ref_sol), (ref2_space, ref2_sol) = _reference_pair(config)
    except NonConvergence as exc:
        raise StudyAborted(f"reference failed: {exc}", (), exc) from exc
    log.info("reference %s solved in %d iterations", ref_space, ref_sol.iterations)
    tm_ref = TransferMap(ref_space, ref2_space)
    gap = norms(ref2_space, Field(ref2_space.basis, ref2_sol.u.coeffs - tm_ref.apply(ref_sol.u.coeffs))).h1

    def one_case(size: int):
        t0 = time.perf_counter()
        space, sol = solve_case(config, size, reference_for_sign=ref_sol.u)
        wall = (time.perf_counter() - t0) * 1e3
        errs = case_errors(space, sol.u, ref_space, ref_sol.u)
        errs2 = case_errors(space, sol.u, ref2_space, ref2_sol.u)
        lam_err = cbar = None
        if config.kind == "eig":
            lam_err = sol.lam - ref_sol.lam
            cbar = errs["cbar"]
            errs2["lambda_err"] = sol.lam - ref2_sol.lam
        res = CaseResult(
            config.basis(size).delta,
            space.dim,
            *(errs[c] for c in ERROR_COLUMNS),
            lambda_err=lam_err,
            cbar=cbar,
            iters=sol.iterations,
            wall_ms=wall,
        )
        return res, errs2, sol

    done: list = []
    sizes = list(config.sizes)
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(one_case, n) for n in sizes]
                for fut in futures:
                    done.append(fut.result())
        else:
            for n in sizes:
                done.append(one_case(n))
    except NonConvergence as exc:
        partial = tuple(sorted((d[0] for d in done), key=lambda r: -r.delta))
        raise StudyAborted(f"case failed: {exc}", partial, exc) from exc

    done.sort(key=lambda d: -d[0].delta)
    results = tuple(d[0] for d in done)
    # per-column reference sensitivity |e(R) - e(2R)|
    floors: dict = {c: {} for c in ERROR_COLUMNS + ("lambda_err", "cbar")}
    for res, errs2, _ in done:
        for c in ERROR_COLUMNS:
            floors[c][res.delta] = abs(res.column(c) - errs2[c])
        if config.kind == "eig":
            floors["lambda_err"][res.delta] = abs(res.lambda_err - errs2["lambda_err"])
            floors["cbar"][res.delta] = abs(res.cbar - errs2["cbar"])
    report = rate_report(results, theory_row(config), config.gain_tolerance, floors)

    smallest = min(r.e_std_h1 for r in results)
    shift = {}
    for c in ERROR_COLUMNS:
        accepted = _accepted(results, c, floors)
        shift[c] = max((floors[c][r.delta] / r.column(c) for r in accepted), default=0.0)
    flagged = ()
    if config.kind == "eig":
        flagged = _energy_flags(config, ref_sol, done)
    outcome = StudyOutcome(
        config, results, report, gap, shift, tuple(d[2] for d in done), ref_sol.u, flagged
    )
    if smallest > SPECTRAL_FLOOR and gap > REFERENCE_RTOL * smallest:
        raise ReferenceUnconverged(
            f"reference gap {gap:.3e} exceeds {REFERENCE_RTOL:g} x smallest case error {smallest:.3e}", outcome
        )
    worst = max(shift, key=shift.get)
    if shift[worst] >= REFERENCE_RTOL:
        raise ReferenceUnconverged(
            f"doubling the reference moves {worst} by {100 * shift[worst]:.2f}%", outcome
        )
    return outcome


# --------------------------------------------------------------------------
# assumption diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    linf_bound: float
    v_tilde_bound: float
    min_coercivity: float
    coercivity_floor: float
    bounded_monotone: bool
    per_case_linf: tuple


def check_assumptions(solutions: Sequence[Field], V: PotentialSpec, u_ref: Optional[Field] = None, v_min: Optional[float] = None) -> AssumptionReport:
    """L-infinity bounds of discrete minimisers, of the shifted auxiliary potential and coercivity of a_delta.

    Everything is sampled on the quadrature grid of the finest space
    involved. Without ``u_ref`` the finest solution stands in for it.
    """
    sols = [getattr(s, "u", s) for s in solutions]
    if len(sols) < 2:
        raise ValueError("need at least two cases")
    domain = DomainSpec.for_family(sols[0].basis.family)
    ref = u_ref if u_ref is not None else max(sols, key=lambda u: u.basis.dim)
    host = build_space(domain, max([ref] + sols, key=lambda u: u.basis.dim).basis)
    if v_min is None:
        v_min = float(np.min(V(host.quad_x)))
    floor = min(1.0, v_min)
    linf, vt, coer = [], [], []
    for u in sols:
        space = build_space(domain, u.basis)
        aux = build_aux_operators(space, ref, u, V)
        b = host.values(TransferMap(space, host).apply(u.coeffs))
        linf.append(float(np.max(np.abs(b))) if b.size else 0.0)
        vt.append(float(np.max(np.abs(aux.V_tilde))))
        coer.append(aux.coercivity())
    mono = all(v <= linf[-1] * (1 + 1e-2) + 1e-12 for v in linf) or max(linf) <= 10 * max(linf[-1], 1e-300)
    return AssumptionReport(max(linf), max(vt), min(coer), floor, bool(mono), tuple(linf))
