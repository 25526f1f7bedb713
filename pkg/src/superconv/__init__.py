"""Galerkin solvers for the 1D Gross-Pitaevskii source and ground-state problems,
with a harness that measures superconvergence of the projected Galerkin error."""

__version__ = "0.1.0"

from .core import (
    BasisMismatch,
    BasisTag,
    DomainSpec,
    Family,
    Field,
    NormTriple,
    PositivityError,
    PotentialKind,
    PotentialSpec,
    Setting,
    XInner,
    inner_l2,
    inner_x,
    norm_x,
    norms,
    synthesize_potential,
)
from .spaces import (
    IncompatibleBasis,
    NonNestedSpaces,
    SingularGram,
    SpaceHandle,
    TransferMap,
    build_space,
    project_l2,
    project_x,
    prolong,
    space_for,
)
from .solver import (
    Algorithm,
    EigProblem,
    EigSolution,
    NonConvergence,
    SolverOptions,
    SourceProblem,
    SourceSolution,
    build_aux_operators,
    cbar_diagnostic,
    energy_eig,
    energy_src,
    euler_lagrange_residual,
    galerkin_orthogonality_residual,
    jacobian_check,
    rayleigh_lambda,
    solve_eig,
    solve_source,
)
from .lab import (
    CaseResult,
    ConfigError,
    RateReport,
    ReferenceUnconverged,
    StudyAborted,
    StudyConfig,
    StudyOutcome,
    TheoryRow,
    TheoryTable,
    check_assumptions,
    compare_to_theory,
    fit_eoc,
    rate_report,
    run_study,
    solve_case,
)
from .extension import ExtendedField, odd_extend, solve_dirichlet_direct, solve_dirichlet_via_extension
from .config import MissingRequired, TypeMismatch, UnknownKey, parse_config, render_config
from .output import emit_csv, emit_plot, render_plot
