"""Discrete Gross-Pitaevskii source and ground-state solvers, plus diagnostics."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .core import DomainSpec, Field, PotentialSpec, Setting, synthesize_potential
from .spaces import SpaceHandle, TransferMap, build_space

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class NonConvergence(RuntimeError):
    """Raised when an iteration exhausts ``max_iter``; carries the last iterate."""

    def __init__(self, message, u: Optional[Field] = None, residual: float = math.nan):
        super().__init__(message)
        self.u = u
        self.residual = residual


class NegativeCurvatureStall(NonConvergence):
    pass


class Algorithm(str, enum.Enum):
    SOBOLEV = "sobolev"
    SCF = "scf"


@dataclass(frozen=True)
class SolverOptions:
    tol_residual: float = 1e-12
    max_iter: int = 200
    damping: str = "armijo"
    algorithm: Algorithm = Algorithm.SOBOLEV

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.damping != "armijo":
            raise ValueError(f"unknown damping {self.damping!r}")
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))


Source = Union[PotentialSpec, Field, None]


@dataclass(frozen=True, eq=False)
class SourceProblem:
    space: SpaceHandle
    V: PotentialSpec
    f: Source = None
    cubic_on: bool = True

    def __post_init__(self):
        synthesize_potential(self.V, self.space)
        object.__setattr__(self, "v_q", self.space.potential_values(self.V))
        object.__setattr__(self, "load", self.space.load_vector(self.f))


@dataclass(frozen=True, eq=False)
class EigProblem:
    space: SpaceHandle
    V: PotentialSpec

    def __post_init__(self):
        synthesize_potential(self.V, self.space)
        object.__setattr__(self, "v_q", self.space.potential_values(self.V))

    cubic_on = True


Problem = Union[SourceProblem, EigProblem]


@dataclass(frozen=True, eq=False)
class SourceSolution:
    u: Field
    energy: float
    residual: float
    iterations: int
    log: tuple = ()


@dataclass(frozen=True, eq=False)
class EigSolution:
    u: Field
    energy: float
    residual: float
    iterations: int
    lam: float
    sign_fixed: bool = False
    log: tuple = ()


def _coeffs(problem: Problem, u) -> np.ndarray:
    if isinstance(u, Field):
        if u.basis != problem.space.basis:
            raise ValueError(f"field in {u.basis}, problem space is {problem.space.basis}")
        return u.coeffs
    return np.asarray(u, dtype=float)


def _quartic(problem: Problem) -> float:
    return 1.0 if problem.cubic_on else 0.0


def _energy_parts(problem: Problem, c: np.ndarray) -> tuple[float, float, float]:
    s = problem.space
    uq = s.values(c)
    kin = 0.5 * float(c @ s.apply_stiffness(c))
    pot = 0.5 * s.integrate(problem.v_q * uq * uq)
    quart = 0.25 * _quartic(problem) * s.integrate(uq**4)
    return kin, pot, quart


def energy_src(problem: SourceProblem, u) -> float:
    c = _coeffs(problem, u)
    return sum(_energy_parts(problem, c)) - float(problem.load @ c)


def energy_eig(problem: Problem, u) -> float:
    return sum(_energy_parts(problem, _coeffs(problem, u)))


def rayleigh_lambda(problem: Problem, u) -> float:
    """[(u',u') + (Vu,u) + int u^4] / (u,u)."""
    c = _coeffs(problem, u)
    s = problem.space
    nrm = float(c @ s.apply_mass(c))
    if nrm <= 0:
        raise ValueError("Rayleigh quotient of the zero field")
    uq = s.values(c)
    num = float(c @ s.apply_stiffness(c)) + s.integrate((problem.v_q + uq * uq) * uq * uq)
    return num / nrm


def _cubic_weight(problem: Problem, uq: np.ndarray) -> np.ndarray:
    return _quartic(problem) * uq * uq


def euler_lagrange_residual(problem: SourceProblem, c: np.ndarray) -> np.ndarray:
    """Coefficients of (u',phi) + (Vu,phi) + (u^3,phi) - (f,phi)."""
    s = problem.space
    uq = s.values(c)
    return s.apply_stiffness(c) + s.test((problem.v_q + _cubic_weight(problem, uq)) * uq) - problem.load


def eigen_residual(problem: Problem, c: np.ndarray, lam: float) -> np.ndarray:
    s = problem.space
    uq = s.values(c)
    return s.apply_stiffness(c) + s.test((problem.v_q + _cubic_weight(problem, uq)) * uq) - lam * s.apply_mass(c)


def jacobian_apply(problem: Problem, c: np.ndarray, d: np.ndarray) -> np.ndarray:
    """(K + M_V + 3 M_{u^2}) d."""
    s = problem.space
    uq = s.values(c)
    return s.apply_stiffness(d) + s.apply_weighted(problem.v_q + 3 * _cubic_weight(problem, uq), d)


def jacobian_check(problem: SourceProblem, u, h_fd: float = 1e-5, direction=None, seed: int = 0) -> float:
    """Max relative gap between J d and a central difference of the residual."""
    c = _coeffs(problem, u)
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(c.size) if direction is None else _coeffs(problem, direction)
    if not np.any(d):
        return 0.0
    d = d / np.linalg.norm(d)
    jd = jacobian_apply(problem, c, d)
    fd = (euler_lagrange_residual(problem, c + h_fd * d) - euler_lagrange_residual(problem, c - h_fd * d)) / (2 * h_fd)
    scale = np.max(np.abs(jd))
    return float(np.max(np.abs(jd - fd)) / scale) if scale > 0 else float(np.max(np.abs(fd)))


def _stop_tolerance(problem: Problem, c: np.ndarray, opts: SolverOptions) -> float:
    """Requested tolerance, raised to the level attainable in floating point.

    Residual entries carry rounding errors of relative size eps against the
    largest operator term, which bounds how small the dual norm can get on
    fine meshes. The errors are modelled as independent signs (fixed seed,
    so the bound is deterministic).
    """
    s = problem.space
    terms = s.stiffness_magnitude(c) + np.abs(s.test(np.abs(problem.v_q * s.values(c))))
    if isinstance(problem, SourceProblem):
        terms = terms + np.abs(problem.load)
    signs = np.where(np.random.default_rng(0).random(terms.size) < 0.5, -1.0, 1.0)
    floor = 16 * _EPS * s.dual_norm(signs * terms)
    return max(opts.tol_residual, floor)


def _armijo(energy, c, d, slope, e0, max_halvings=40):
    """Backtracking along d; returns (step, new energy) or (0, e0) on failure."""
    t = 1.0
    slack = 64 * _EPS * (abs(e0) + 1.0)
    for _ in range(max_halvings):
        e1 = energy(c + t * d)
        if e1 <= e0 + 1e-4 * t * slope + slack:
            return t, e1
        t *= 0.5
    return 0.0, e0


def solve_source(problem: SourceProblem, opts: SolverOptions = SolverOptions(), initial: Optional[Field] = None) -> SourceSolution:
    """Damped Newton on the discrete Euler-Lagrange system, Armijo on the energy."""
    s = problem.space
    if not np.any(problem.load):
        z = Field.zeros(s.basis)
        return SourceSolution(z, 0.0, 0.0, 0, ())
    if initial is not None:
        c = _coeffs(problem, initial).copy()
    else:
        c = s.solve_weighted(problem.v_q, problem.load)
    energy = lambda x: energy_src(problem, x)  # noqa: E731
    e = energy(c)
    history = []
    tol = _stop_tolerance(problem, c, opts)
    stalled = 0
    best = math.inf
    for it in range(opts.max_iter + 1):
        r = euler_lagrange_residual(problem, c)
        res = s.dual_norm(r)
        history.append((it, e, res))
        log.debug("source it=%d E=%.16e res=%.3e", it, e, res)
        if res <= tol:
            return SourceSolution(Field(s.basis, c), e, res, it, tuple(history))
        # Newton at the rounding floor: further steps cannot reduce the residual
        stalled = stalled + 1 if res > 0.5 * best else 0
        best = min(best, res)
        if stalled >= 3 and res <= 1e3 * tol:
            return SourceSolution(Field(s.basis, c), e, res, it, tuple(history))
        if it == opts.max_iter:
            break
        uq = s.values(c)
        d = s.solve_weighted(problem.v_q + 3 * _cubic_weight(problem, uq), -r)
        t, e_new = _armijo(energy, c, d, float(r @ d), e)
        if t == 0.0:
            if res <= 1e3 * tol:
                return SourceSolution(Field(s.basis, c), e, res, it, tuple(history))
            raise NonConvergence("line search failed", Field(s.basis, c), res)
        c = c + t * d
        e = e_new
    raise NonConvergence(f"no convergence in {opts.max_iter} iterations", Field(s.basis, c), res)


# --------------------------------------------------------------------------
# ground state
# --------------------------------------------------------------------------


def _normalise(space: SpaceHandle, c: np.ndarray) -> np.ndarray:
    return c / math.sqrt(float(c @ space.apply_mass(c)))


def _initial_ground_state(problem: EigProblem) -> np.ndarray:
    """Lowest eigenvector of the linear operator K + M_V by inverse iteration."""
    s = problem.space
    ones = np.ones_like(s.quad_x)
    if s.domain.setting is Setting.ONE:
        ones = np.cos(np.pi * s.quad_x / 2)
    c = _normalise(s, s.solve_weighted(np.zeros_like(s.quad_x) + s.x_shift, s.test(ones)))
    for _ in range(8):
        c = _normalise(s, s.solve_weighted(problem.v_q, s.apply_mass(c)))
    return c


def _fix_sign(space: SpaceHandle, c: np.ndarray, reference: Optional[Field]) -> tuple[np.ndarray, bool]:
    if reference is not None:
        ref = reference
        if reference.basis.dim > space.dim:
            fine = build_space(space.domain, reference.basis)
            overlap = float(TransferMap(space, fine).apply(c) @ fine.apply_mass(ref.coeffs))
        elif reference.basis != space.basis:
            coarse = build_space(space.domain, reference.basis)
            overlap = float(c @ space.apply_mass(TransferMap(coarse, space).apply(ref.coeffs)))
        else:
            overlap = float(c @ space.apply_mass(ref.coeffs))
    else:
        overlap = space.integrate(space.values(c))
    if overlap < 0:
        return -c, True
    return c, False


def _eig_state(problem: EigProblem, c: np.ndarray):
    lam = rayleigh_lambda(problem, c)
    r = eigen_residual(problem, c, lam)
    return lam, r, problem.space.dual_norm(r)


def _sobolev_step(problem: EigProblem, c, e, tau):
    """One projected Sobolev-gradient step in the X metric with backtracking."""
    s = problem.space
    uq = s.values(c)
    grad_dual = s.apply_stiffness(c) + s.test((problem.v_q + uq * uq) * uq)
    g = s.solve_x_gram(grad_dual)
    mu = s.solve_x_gram(s.apply_mass(c))
    g = g - (float(c @ s.apply_mass(g)) / float(c @ s.apply_mass(mu))) * mu
    slope = -float(grad_dual @ g)
    for _ in range(50):
        trial = _normalise(s, c - tau * g)
        e1 = energy_eig(problem, trial)
        if e1 <= e + 1e-4 * tau * slope + 64 * _EPS * abs(e):
            return trial, e1, tau
        tau *= 0.5
    return c, e, 0.0


def _newton_eig_step(problem: EigProblem, c, lam, r):
    """Bordered Newton step for K u + M_{V+u^2} u = lam M u on the unit sphere."""
    s = problem.space
    uq = s.values(c)
    w = problem.v_q + 3 * uq * uq - lam
    mu = s.apply_mass(c)
    y1 = s.solve_weighted(w, r)
    y2 = s.solve_weighted(w, mu)
    dlam = float(mu @ y1) / float(mu @ y2)
    return _normalise(s, c - y1 + dlam * y2)


def _scf_step(problem: EigProblem, c):
    """Lowest eigenvector of the linearised operator A_u (dense, small spaces)."""
    s = problem.space
    uq = s.values(c)
    A = s.stiffness + s.weighted_mass(problem.v_q + uq * uq)
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    M = s.mass.toarray() if sp.issparse(s.mass) else np.asarray(s.mass)
    _, vec = sla.eigh(A, M, subset_by_index=[0, 0])
    v = vec[:, 0]
    if float(v @ s.apply_mass(c)) < 0:
        v = -v
    return _normalise(s, v)


def solve_eig(
    problem: EigProblem,
    opts: SolverOptions = SolverOptions(),
    reference_for_sign: Optional[Field] = None,
    initial: Optional[Field] = None,
) -> EigSolution:
    """Minimise the energy on the L2 unit sphere of the problem's space.

    Default: X-metric Sobolev gradient descent with Armijo backtracking,
    then at most 5 bordered Newton sweeps.
    """
    s = problem.space
    c = _initial_ground_state(problem) if initial is None else _normalise(s, _coeffs(problem, initial).copy())
    c, _ = _fix_sign(s, c, None)
    e = energy_eig(problem, c)
    lam, r, res = _eig_state(problem, c)
    tol = _stop_tolerance(problem, c, opts)
    history = [(0, e, res)]
    switch = max(1e-4, 1e3 * tol)
    tau = 1.0
    it = 0
    while res > switch and it < opts.max_iter:
        it += 1
        if opts.algorithm is Algorithm.SCF:
            trial = _scf_step(problem, c)
            e1 = energy_eig(problem, trial)
            if e1 > e + 64 * _EPS * abs(e):
                # damp the SCF update back onto the sphere until the energy decreases
                trial, e1, _ = _sobolev_step(problem, c, e, 1.0)
            c, e = trial, e1
        else:
            c_new, e_new, used = _sobolev_step(problem, c, e, tau)
            if used == 0.0:
                raise NegativeCurvatureStall("line search cannot decrease the energy", Field(s.basis, c), res)
            c, e = c_new, e_new
            tau = min(used * 2.0, 1e3)
        lam, r, res = _eig_state(problem, c)
        history.append((it, e, res))
        log.debug("eig grad it=%d E=%.16e res=%.3e", it, e, res)
    if res > switch:
        raise NonConvergence(f"gradient phase did not converge in {opts.max_iter} iterations", Field(s.basis, c), res)
    for _ in range(5):
        if res <= tol:
            break
        trial = _newton_eig_step(problem, c, lam, r)
        e1 = energy_eig(problem, trial)
        lam1, r1, res1 = _eig_state(problem, trial)
        if e1 > e + 64 * _EPS * abs(e) and res1 >= res:
            break
        it += 1
        if res1 >= res and res <= 1e3 * tol:
            break
        c, e, lam, r, res = trial, min(e1, e) if e1 <= e else e1, lam1, r1, res1
        history.append((it, e, res))
        log.debug("eig newton it=%d E=%.16e res=%.3e", it, e, res)
    if res > 1e3 * tol:
        raise NonConvergence(f"eigen residual {res:.3e} above tolerance {tol:.3e}", Field(s.basis, c), res)
    c, flipped = _fix_sign(s, c, reference_for_sign)
    e = energy_eig(problem, c)
    lam = rayleigh_lambda(problem, c)
    return EigSolution(Field(s.basis, c), e, res, it, lam, flipped, tuple(history))


# --------------------------------------------------------------------------
# auxiliary potentials and diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AuxOperators:
    """Auxiliary potentials sampled on the quadrature of ``host`` and the form a_delta.

    ``host`` is the finest space involved, so products of reference and
    coarse fields are integrated without aliasing.
    """

    space: SpaceHandle
    host: SpaceHandle
    V_delta: np.ndarray
    V_tilde: np.ndarray
    V1_aux: Optional[np.ndarray]
    V2_aux: Optional[np.ndarray]
    v_q: np.ndarray
    transfer: TransferMap = field(repr=False)

    def apply_host(self, c_host: np.ndarray) -> np.ndarray:
        """a_delta(c_host, .) tested against host basis functions."""
        return self.host.apply_stiffness(c_host) + self.host.apply_weighted(self.V_delta, c_host)

    @property
    def a_delta(self) -> np.ndarray:
        """a_delta restricted to the coarse space, as a dense matrix."""
        P = self.transfer
        cols = [P.adjoint(self.apply_host(P.apply(e))) for e in np.eye(self.space.dim)]
        A = np.array(cols).T
        return 0.5 * (A + A.T)

    def coercivity(self) -> float:
        """Smallest generalised eigenvalue of a_delta against the X Gram matrix."""
        G = self.space.x_gram
        G = G.toarray() if sp.issparse(G) else np.asarray(G)
        return float(sla.eigh(self.a_delta, G, eigvals_only=True, subset_by_index=[0, 0])[0])


def _host_for(space: SpaceHandle, *fields: Field) -> SpaceHandle:
    host = space
    for f in fields:
        if f.basis.dim > host.dim:
            host = build_space(space.domain, f.basis)
    return host


def _on_host(host: SpaceHandle, f: Field) -> np.ndarray:
    if f.basis == host.basis:
        return f.coeffs
    src = build_space(host.domain, f.basis)
    return TransferMap(src, host).apply(f.coeffs)


def build_aux_operators(
    space: SpaceHandle,
    u_ref: Field,
    u_delta: Field,
    V: PotentialSpec,
    lambda_star: Optional[float] = None,
) -> AuxOperators:
    host = _host_for(space, u_ref, u_delta)
    a = host.values(_on_host(host, u_ref))
    b = host.values(_on_host(host, u_delta))
    v_q = host.potential_values(V)
    V_delta = v_q + a * a + b * b + a * b
    V1 = V2 = None
    if lambda_star is not None:
        V1 = v_q - lambda_star + a * a + b * b + a * b
        V2 = v_q - lambda_star + 3 * a * a
    return AuxOperators(space, host, V_delta, V_delta - 1.0, V1, V2, v_q, TransferMap(space, host))


def galerkin_orthogonality_residual(space: SpaceHandle, aux: AuxOperators, u_ref: Field, u_delta: Field) -> float:
    """max_i |a_delta(u_ref - u_delta, phi_i)| / ||u_ref - u_delta||_X.

    When the two fields agree to rounding the quotient is noise over noise,
    so the scale switches to ||u_ref||_X.
    """
    host = aux.host
    ref = _on_host(host, u_ref)
    diff = ref - _on_host(host, u_delta)
    nrm = math.sqrt(max(float(diff @ host.apply_x_gram(diff)), 0.0))
    if nrm == 0.0:
        return 0.0
    ref_norm = math.sqrt(max(float(ref @ host.apply_x_gram(ref)), 0.0))
    if nrm <= 1e-8 * ref_norm:
        nrm = ref_norm
    r = aux.transfer.adjoint(aux.apply_host(diff))
    return float(np.max(np.abs(r)) / nrm)


def cbar_diagnostic(u_ref: Field, u_delta: Field, projected: Field) -> float:
    """(Pi u_ref - u_delta, u_ref)_L2, with all fields mapped to the finest space."""
    host = build_space(DomainSpec.for_family(u_ref.basis.family), u_ref.basis)
    host = _host_for(host, u_delta, projected)
    d = _on_host(host, projected) - _on_host(host, u_delta)
    return float(d @ host.apply_mass(_on_host(host, u_ref)))
