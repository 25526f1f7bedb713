"""Discrete spaces, operator assembly, X-orthogonal projection and transfer."""

from __future__ import annotations

import functools
import math
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    BasisMismatch,
    BasisTag,
    DomainSpec,
    Family,
    Field,
    PotentialSpec,
    Setting,
    synthesize_potential,
)

Operator = Union[np.ndarray, sp.spmatrix]

# dense Fourier assembly above this dimension is replaced by matrix-free CG
_FOURIER_DENSE_MAX = 1025


class IncompatibleBasis(ValueError):
    pass


class SingularGram(np.linalg.LinAlgError):
    pass


class SpaceHandle:
    """Common interface of an assembled discrete space.

    Subclasses provide quadrature nodes/weights, evaluation of coefficient
    vectors at the nodes (``values``/``grads``) and the adjoint "testing"
    maps, which is all the nonlinear solvers need.
    """

    domain: DomainSpec
    basis: BasisTag
    quad_x: np.ndarray
    quad_w: np.ndarray
    mass: Operator
    stiffness: Operator

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def family(self) -> Family:
        return self.basis.family

    def __repr__(self):
        return f"{type(self).__name__}({self.basis.size}, dim={self.dim})"

    # --- evaluation -------------------------------------------------------
    def values(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def test(self, g: np.ndarray) -> np.ndarray:
        """Vector of quadrature approximations of (g, phi_i)."""
        raise NotImplementedError

    def eval_at(self, c: np.ndarray, x) -> np.ndarray:
        raise NotImplementedError

    # --- operators --------------------------------------------------------
    def apply_mass(self, c):
        return self.mass @ c

    def apply_stiffness(self, c):
        return self.stiffness @ c

    def stiffness_magnitude(self, c):
        """Entrywise bound on the terms summed in ``apply_stiffness`` (rounding scale)."""
        return abs(self.stiffness) @ np.abs(c)

    @property
    def x_shift(self) -> float:
        """Weight of the L2 part of the X inner product."""
        return 0.0 if self.domain.setting is Setting.ONE else 1.0

    def apply_x_gram(self, c):
        out = self.apply_stiffness(c)
        if self.x_shift:
            out = out + self.apply_mass(c)
        return out

    @functools.cached_property
    def x_gram(self) -> Operator:
        return self.stiffness + self.x_shift * self.mass if self.x_shift else self.stiffness

    def apply_weighted(self, w: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Apply M_w: (M_w c)_i = quadrature of w * u_c * phi_i."""
        return self.test(w * self.values(c))

    def weighted_mass(self, w: np.ndarray) -> Operator:
        raise NotImplementedError

    def solve_weighted(self, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (K + M_w) x = rhs for quadrature weights ``w``."""
        raise NotImplementedError

    def solve_x_gram(self, rhs: np.ndarray) -> np.ndarray:
        return self.solve_weighted(np.full(self.quad_x.size, self.x_shift), rhs)

    def dual_norm(self, r: np.ndarray) -> float:
        """Norm of the functional r in the dual of (X_delta, (.,.)_X)."""
        return math.sqrt(max(float(r @ self.solve_x_gram(r)), 0.0))

    def integrate(self, g: np.ndarray) -> float:
        return float(self.quad_w @ g)

    def potential_values(self, V: PotentialSpec) -> np.ndarray:
        """Quadrature samples of V as used in assembling (V u, v)."""
        return V(self.quad_x)

    def load_vector(self, f: Union[PotentialSpec, Field, Callable, None]) -> np.ndarray:
        if f is None:
            return np.zeros(self.dim)
        if isinstance(f, Field):
            if f.basis != self.basis:
                raise BasisMismatch("source field must live on the solution space")
            return self.apply_mass(f.coeffs)
        return self.test(np.asarray(f(self.quad_x), dtype=float))

    # used by the transfer machinery
    def transfer_matrix(self, target: "SpaceHandle") -> Optional[sp.spmatrix]:
        raise NotImplementedError


# --------------------------------------------------------------------------
# Fourier
# --------------------------------------------------------------------------


class FourierSpace(SpaceHandle):
    """Real trigonometric polynomials of degree <= N on the unit torus.

    Coefficients are ordered ``[c0, a1, b1, ..., aN, bN]`` for the
    orthonormal basis ``1, sqrt2 cos(2 pi k x), sqrt2 sin(2 pi k x)``, so the
    mass matrix is the identity and coarse vectors embed by zero padding.
    """

    def __init__(self, domain: DomainSpec, basis: BasisTag, oversample: int = 1):
        self.domain, self.basis = domain, basis
        self.N = basis.size
        self.n_quad = sfft.next_fast_len(oversample * (4 * self.N + 1))
        self.quad_x = np.arange(self.n_quad) / self.n_quad
        self.quad_w = np.full(self.n_quad, 1.0 / self.n_quad)
        k = np.repeat(np.arange(1, self.N + 1), 2)
        self.wave_numbers_real = np.concatenate([[0.0], 2 * np.pi * k])
        self.mass = sp.identity(self.dim, format="csr")
        self.stiffness = sp.diags(self.wave_numbers_real**2, format="csr")

    # real coefficients <-> one-sided complex coefficients
    def _to_complex(self, c):
        z = np.zeros(self.n_quad // 2 + 1, dtype=complex)
        z[0] = c[0]
        z[1:self.N + 1] = (c[1::2] - 1j * c[2::2]) / math.sqrt(2)
        return z

    def _from_complex(self, z):
        c = np.empty(self.dim)
        c[0] = z[0].real
        c[1::2] = math.sqrt(2) * z[1:self.N + 1].real
        c[2::2] = -math.sqrt(2) * z[1:self.N + 1].imag
        return c

    def values(self, c):
        return sfft.irfft(self._to_complex(c) * self.n_quad, n=self.n_quad)

    def grads(self, c):
        z = self._to_complex(c)
        z[: self.N + 1] *= 2j * np.pi * np.arange(self.N + 1)
        return sfft.irfft(z * self.n_quad, n=self.n_quad)

    def test(self, g):
        return self._from_complex(sfft.rfft(g) / self.n_quad)

    def eval_at(self, c, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        k = np.arange(1, self.N + 1)
        out = np.full(flat.size, c[0])
        for s in range(0, flat.size, 4096):
            th = 2 * np.pi * np.outer(flat[s:s + 4096], k)
            out[s:s + 4096] += math.sqrt(2) * (np.cos(th) @ c[1::2] + np.sin(th) @ c[2::2])
        return out.reshape(x.shape)

    def apply_mass(self, c):
        return np.array(c, dtype=float, copy=True)

    def apply_stiffness(self, c):
        return self.wave_numbers_real**2 * c

    def solve_x_gram(self, rhs):
        return rhs / (1.0 + self.wave_numbers_real**2)

    def potential_values(self, V: PotentialSpec) -> np.ndarray:
        """Samples of V truncated to wave numbers <= 2N.

        (V u, v) for u, v of degree N only sees those modes, so the
        assembled term is the exact Galerkin integral.
        """
        return self.band_limit(V, 2 * self.N)

    def band_limit(self, func, kmax: int) -> np.ndarray:
        series = func.cosine_series() if isinstance(func, PotentialSpec) else None
        z = np.zeros(self.n_quad // 2 + 1, dtype=complex)
        if series is not None:
            k, a = series
            keep = k <= kmax
            k, a = k[keep], a[keep]
            half = np.where(k == 0, 1.0, 0.5)
            np.add.at(z, k, half * a)
        else:
            L = sfft.next_fast_len(max(8 * self.n_quad, 2 * kmax + 1))
            zf = sfft.rfft(np.asarray(func(np.arange(L) / L), dtype=float)) / L
            m = min(kmax, zf.size - 1, z.size - 1)
            z[: m + 1] = zf[: m + 1]
        return sfft.irfft(z * self.n_quad, n=self.n_quad)

    def load_vector(self, f):
        if isinstance(f, PotentialSpec):
            return self.test(self.band_limit(f, self.N))
        return super().load_vector(f)

    @functools.cached_property
    def basis_matrix(self) -> np.ndarray:
        """Basis functions sampled on the quadrature grid (n_quad x dim)."""
        return np.stack([self.values(e) for e in np.eye(self.dim)], axis=1)

    def weighted_mass(self, w):
        B = self.basis_matrix
        return B.T @ ((w * self.quad_w)[:, None] * B)

    def solve_weighted(self, w, rhs):
        if self.dim <= _FOURIER_DENSE_MAX:
            A = self.weighted_mass(w)
            A[np.diag_indices_from(A)] += self.wave_numbers_real**2
            return sla.solve(A, rhs, assume_a="sym")
        shift = float(np.mean(w))
        shift = max(shift, 1e-2 * (1.0 + abs(shift)))
        diag = self.wave_numbers_real**2 + shift
        op = spla.LinearOperator(
            (self.dim, self.dim),
            matvec=lambda c: self.wave_numbers_real**2 * c + self.apply_weighted(w, c),
            dtype=float,
        )
        prec = spla.LinearOperator((self.dim, self.dim), matvec=lambda r: r / diag, dtype=float)
        x, info = spla.cg(op, rhs, M=prec, rtol=1e-15, atol=0.0, maxiter=2000)
        if info > 0:
            # CG stalls at roundoff level; refine once and accept
            x2, _ = spla.cg(op, rhs, x0=x, M=prec, rtol=1e-14, atol=0.0, maxiter=2000)
            x = x2
        return x

    def transfer_matrix(self, target):
        return None


# --------------------------------------------------------------------------
# Legendre
# --------------------------------------------------------------------------


def legendre_table(x: np.ndarray, n: int) -> np.ndarray:
    """L_0..L_n evaluated at x, shape (len(x), n + 1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, n + 1))
    out[:, 0] = 1.0
    if n >= 1:
        out[:, 1] = x
    for k in range(1, n):
        out[:, k + 1] = ((2 * k + 1) * x * out[:, k] - k * out[:, k - 1]) / (k + 1)
    return out


def two_panel_gauss(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre with q nodes on each of (-1, 0) and (0, 1)."""
    t, w = np.polynomial.legendre.leggauss(q)
    x = np.concatenate([(t - 1) / 2, (t + 1) / 2])
    return x, np.concatenate([w, w]) / 2


class LegendreSpace(SpaceHandle):
    """Polynomials of degree <= N vanishing at +-1.

    Basis ``phi_k = (L_k - L_{k+2}) / sqrt(4k + 6)``, k = 0..N-2, for which
    the stiffness matrix is the identity. Quadrature is Gauss-Legendre on the
    two panels split at 0, so data with a kink at the origin integrates
    exactly against polynomials.
    """

    def __init__(self, domain: DomainSpec, basis: BasisTag, oversample: int = 1):
        self.domain, self.basis = domain, basis
        self.N = basis.size
        q = oversample * math.ceil((4 * self.N + 2) / 2)
        self.quad_x, self.quad_w = two_panel_gauss(q)
        self.B, self.Bx = self._tables(self.quad_x)
        Bw = self.B * self.quad_w[:, None]
        self.mass = Bw.T @ self.B
        self.stiffness = (self.Bx * self.quad_w[:, None]).T @ self.Bx

    def _tables(self, x):
        L = legendre_table(x, self.N)
        k = np.arange(self.N - 1)
        B = (L[:, :-2] - L[:, 2:]) / np.sqrt(4 * k + 6)
        Bx = -np.sqrt((2 * k + 3) / 2.0) * L[:, 1:-1]
        return B, Bx

    def values(self, c):
        return self.B @ c

    def grads(self, c):
        return self.Bx @ c

    def test(self, g):
        return self.B.T @ (self.quad_w * g)

    def eval_at(self, c, x):
        x = np.asarray(x, dtype=float)
        return (self._tables(x.ravel())[0] @ c).reshape(x.shape)

    def weighted_mass(self, w):
        return (self.B * (w * self.quad_w)[:, None]).T @ self.B

    def solve_weighted(self, w, rhs):
        return sla.solve(self.stiffness + self.weighted_mass(w), rhs, assume_a="sym")

    def solve_x_gram(self, rhs):
        return sla.solve(self.stiffness, rhs, assume_a="pos")

    def transfer_matrix(self, target):
        return None


# --------------------------------------------------------------------------
# Lagrange finite elements
# --------------------------------------------------------------------------


def lagrange_local(n: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Equispaced Lagrange shape functions of degree n on [0, 1] and derivatives."""
    nodes = np.linspace(0.0, 1.0, n + 1)
    t = np.asarray(t, dtype=float)
    vals = np.ones((t.size, n + 1))
    ders = np.zeros((t.size, n + 1))
    for i in range(n + 1):
        others = [j for j in range(n + 1) if j != i]
        denom = np.prod([nodes[i] - nodes[j] for j in others])
        for j in others:
            vals[:, i] *= t - nodes[j]
        for m in others:
            term = np.ones(t.size)
            for j in others:
                if j != m:
                    term *= t - nodes[j]
            ders[:, i] += term
        vals[:, i] /= denom
        ders[:, i] /= denom
    return vals, ders


class FemSpace(SpaceHandle):
    """Continuous P_n elements on a uniform mesh of (-1, 1), Dirichlet nodes removed.

    Global unknown j sits at ``x = -1 + (j + 1) h / n``.
    """

    def __init__(self, domain: DomainSpec, basis: BasisTag, oversample: int = 1):
        self.domain, self.basis = domain, basis
        self.M, self.n = basis.size, basis.degree
        if self.M < 2:
            raise ValueError("FEM mesh needs at least 2 elements")
        self.h = 2.0 / self.M
        q = oversample * (2 * self.n + 1)
        t, wq = np.polynomial.legendre.leggauss(q)
        t = (t + 1) / 2
        wq = wq / 2
        e = np.arange(self.M)
        self.quad_x = (-1.0 + self.h * (e[:, None] + t[None, :])).ravel()
        self.quad_w = np.tile(wq * self.h, self.M)
        self.B, self.Bx = self._tables_at(self.quad_x)
        W = sp.diags(self.quad_w)
        self.mass = (self.B.T @ W @ self.B).tocsr()
        self.stiffness = (self.Bx.T @ W @ self.Bx).tocsr()
        # element-local derivative table and dof map; boundary dofs point at a zero pad
        self._dloc = lagrange_local(self.n, t)[1] / self.h
        dofs = e[:, None] * self.n + np.arange(self.n + 1)[None, :] - 1
        dofs[(dofs < 0) | (dofs >= self.dim)] = self.dim
        self._dofs = dofs

    @property
    def nodes(self) -> np.ndarray:
        return -1.0 + self.h / self.n * np.arange(1, self.n * self.M)

    def _tables_at(self, x):
        x = np.asarray(x, dtype=float).ravel()
        s = (x + 1.0) / self.h
        elem = np.clip(np.floor(s).astype(int), 0, self.M - 1)
        t = s - elem
        vals, ders = lagrange_local(self.n, t)
        rows = np.repeat(np.arange(x.size), self.n + 1)
        glob = (elem[:, None] * self.n + np.arange(self.n + 1)[None, :] - 1).ravel()
        keep = (glob >= 0) & (glob < self.dim)
        shape = (x.size, self.dim)
        B = sp.csr_matrix((vals.ravel()[keep], (rows[keep], glob[keep])), shape=shape)
        Bx = sp.csr_matrix((ders.ravel()[keep] / self.h, (rows[keep], glob[keep])), shape=shape)
        return B, Bx

    def values(self, c):
        return self.B @ c

    def grads(self, c):
        # differences of neighbouring coefficients are exact in floating
        # point, so gradients carry rounding relative to |u'| rather than |u|/h
        cl = np.append(c, 0.0)[self._dofs]
        return ((cl - cl[:, :1]) @ self._dloc.T).ravel()

    def test(self, g):
        return self.B.T @ (self.quad_w * g)

    def _test_grad(self, g):
        local = (self.quad_w * g).reshape(self.M, -1) @ self._dloc
        return np.bincount(self._dofs.ravel(), local.ravel(), minlength=self.dim + 1)[: self.dim]

    def apply_stiffness(self, c):
        return self._test_grad(self.grads(c))

    def stiffness_magnitude(self, c):
        local = (self.quad_w * np.abs(self.grads(c))).reshape(self.M, -1) @ np.abs(self._dloc)
        return np.bincount(self._dofs.ravel(), local.ravel(), minlength=self.dim + 1)[: self.dim]

    def eval_at(self, c, x):
        x = np.asarray(x, dtype=float)
        return (self._tables_at(x)[0] @ c).reshape(x.shape)

    def weighted_mass(self, w):
        return (self.B.T @ sp.diags(w * self.quad_w) @ self.B).tocsc()

    def solve_weighted(self, w, rhs):
        return spla.spsolve((self.stiffness + self.weighted_mass(w)).tocsc(), rhs)

    def solve_x_gram(self, rhs):
        return self._x_factor(rhs)

    @functools.cached_property
    def _x_factor(self):
        return spla.factorized(self.x_gram.tocsc())

    def transfer_matrix(self, target: "FemSpace"):
        return self._tables_at(target.nodes)[0].tocsr()


# --------------------------------------------------------------------------
# construction and transfer
# --------------------------------------------------------------------------

_SPACE_TYPES = {Family.FOURIER: FourierSpace, Family.LEGENDRE: LegendreSpace, Family.FEM: FemSpace}


@functools.lru_cache(maxsize=16)
def _build(domain: DomainSpec, basis: BasisTag, oversample: int) -> SpaceHandle:
    return _SPACE_TYPES[basis.family](domain, basis, oversample)


def build_space(domain: DomainSpec, basis: BasisTag, oversample: int = 1) -> SpaceHandle:
    """Assemble X_delta for ``basis`` on ``domain`` (cached; handles are immutable)."""
    if not basis.compatible_with(domain):
        raise IncompatibleBasis(f"{basis.family.value} basis not available in setting {domain.setting.value}")
    minimum = {Family.FOURIER: 0, Family.LEGENDRE: 2, Family.FEM: 2}[basis.family]
    if basis.size < minimum:
        raise ValueError(f"{basis.family.value} size {basis.size} below minimum {minimum}")
    return _build(domain, basis, int(oversample))


def space_for(family, size: int, degree: int = 1, oversample: int = 1) -> SpaceHandle:
    """Shorthand: build the space of ``family`` in its natural setting."""
    family = Family(family)
    return build_space(DomainSpec.for_family(family), BasisTag(family, size, degree), oversample)


def assemble_potential_mass(space: SpaceHandle, V: PotentialSpec) -> Operator:
    """Operator M_V with (M_V u, v) = quadrature of V u v."""
    synthesize_potential(V, space, positive=False)
    return space.weighted_mass(space.potential_values(V))


class NonNestedSpaces(ValueError):
    pass


class TransferMap:
    """Exact embedding of a coarse space into a finer nested one."""

    def __init__(self, source: SpaceHandle, target: SpaceHandle):
        s, t = source.basis, target.basis
        if s.family is not t.family or source.domain != target.domain:
            raise NonNestedSpaces(f"cannot transfer {s} -> {t}")
        if s.family is Family.FEM:
            if s.degree != t.degree or t.size % s.size:
                raise NonNestedSpaces(f"FEM meshes not nested: {s} -> {t}")
        elif t.size < s.size:
            raise NonNestedSpaces(f"target resolution below source: {s} -> {t}")
        self.source, self.target = source, target
        self.matrix = source.transfer_matrix(target)

    def apply(self, c: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ c
        out = np.zeros(self.target.dim)
        out[: self.source.dim] = c
        return out

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        """Restriction of a functional on the target space to the source space."""
        if self.matrix is not None:
            return self.matrix.T @ r
        return np.array(r[: self.source.dim], dtype=float)

    def columns(self) -> Operator:
        if self.matrix is not None:
            return self.matrix
        return sp.eye(self.target.dim, self.source.dim, format="csr")


def prolong(tmap: TransferMap, u: Field) -> Field:
    if u.basis != tmap.source.basis:
        raise BasisMismatch(f"field in {u.basis}, map starts at {tmap.source.basis}")
    return Field(tmap.target.basis, tmap.apply(u.coeffs))


def _space_of(field: Field, like: SpaceHandle) -> SpaceHandle:
    return build_space(like.domain, field.basis)


def _fem_rhs(space: "FemSpace", fine: "FemSpace", c: np.ndarray, grad_weight: float, mass_weight: float) -> np.ndarray:
    # Integrate against coarse basis functions on the fine quadrature. Going
    # through the fine Gram matrix instead forms second differences whose
    # rounding error the coarse solve amplifies by 1/h.
    B, Bx = space._tables_at(fine.quad_x)
    w = fine.quad_w
    rhs = np.zeros(space.dim)
    if grad_weight:
        rhs += grad_weight * (Bx.T @ (w * fine.grads(c)))
    if mass_weight:
        rhs += mass_weight * (B.T @ (w * fine.values(c)))
    return rhs


def _project(space: SpaceHandle, u: Field, gram_apply, gram_solve, weights=None) -> Field:
    if u.basis == space.basis:
        return u
    fine = _space_of(u, space)
    tmap = TransferMap(space, fine)
    if space.family is Family.FOURIER:
        # modes are orthogonal in every Sobolev inner product: plain truncation
        return Field(space.basis, tmap.adjoint(u.coeffs))
    if space.family is Family.FEM and weights is not None:
        rhs = _fem_rhs(space, fine, u.coeffs, *weights)
    else:
        rhs = tmap.adjoint(gram_apply(fine, u.coeffs))
    c = gram_solve(space, rhs)
    if space.family is Family.FEM:
        # direct solves are backward stable only relative to |G||c| ~ |c|/h;
        # refine against the cancellation-free residual
        for _ in range(2):
            c = c + gram_solve(space, rhs - gram_apply(space, c))
    if not np.all(np.isfinite(c)):
        raise SingularGram("projection produced non-finite coefficients")
    return Field(space.basis, c)


def project_x(space: SpaceHandle, u: Field) -> Field:
    """(.,.)_X-orthogonal projection of a field living on a finer nested space."""
    return _project(
        space, u, lambda s, c: s.apply_x_gram(c), lambda s, r: s.solve_x_gram(r), (1.0, space.x_shift)
    )


def _solve_mass(space: SpaceHandle, r):
    if space.family is Family.FOURIER:
        return np.array(r, dtype=float)
    if space.family is Family.FEM:
        return spla.spsolve(space.mass.tocsc(), r)
    return sla.solve(space.mass, r, assume_a="pos")


def project_l2(space: SpaceHandle, u: Field) -> Field:
    return _project(space, u, lambda s, c: s.apply_mass(c), _solve_mass, (0.0, 1.0))


def interpolate_fem(space: SpaceHandle, g: Union[Callable, np.ndarray]) -> Field:
    """Nodal Lagrange interpolant; ``g`` is a callable or its values at the nodes."""
    if space.family is not Family.FEM:
        raise IncompatibleBasis("nodal interpolation requires a FEM space")
    vals = g(space.nodes) if callable(g) else np.asarray(g, dtype=float)
    return Field(space.basis, vals)
