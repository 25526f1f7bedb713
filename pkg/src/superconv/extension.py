"""Odd periodic extension of Dirichlet data on (-1, 1) and the induced periodic Poisson solve."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft as sfft

from .core import BasisTag, DomainSpec, Family, Field, Setting
from .spaces import build_space, two_panel_gauss

PERIOD = 4.0
BOUNDARY_TOL = 1e-10
OVERSAMPLE = 4

Data = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


class BoundaryDataError(ValueError):
    """Data handed to the extension does not vanish at the endpoints."""


def _series_eval(c: np.ndarray, x, deriv: bool = False) -> np.ndarray:
    """Evaluate a real series in the orthonormal basis of the unit torus at x on the period-4 cell."""
    x = np.asarray(x, dtype=float)
    y = ((x.ravel() + 1.0) / PERIOD) % 1.0
    N = (c.size - 1) // 2
    k = np.arange(1, N + 1)
    a, b = c[1::2], c[2::2]
    if deriv:
        w = 2 * np.pi * k / PERIOD
        a, b = w * b, -w * a
        out = np.zeros(y.size)
    else:
        out = np.full(y.size, c[0])
    for s in range(0, y.size, 512):
        th = 2 * np.pi * np.outer(y[s:s + 512], k)
        out[s:s + 512] += math.sqrt(2) * (np.cos(th) @ a + np.sin(th) @ b)
    return out.reshape(x.shape)


@dataclass(frozen=True, eq=False)
class ExtendedField:
    """Odd extension h of g to the period-4 torus with cell (-1, 3).

    ``extended`` holds the trigonometric interpolant of h on the sampling
    grid, in the unit-torus Fourier basis under ``y = (x + 1) / 4``.
    """

    original: np.ndarray
    grid: np.ndarray
    extended: Field
    source: Optional[Callable] = None

    def __call__(self, x) -> np.ndarray:
        return _series_eval(self.extended.coeffs, x)

    def derivative(self, x) -> np.ndarray:
        return _series_eval(self.extended.coeffs, x, deriv=True)

    def formula(self, x) -> np.ndarray:
        """h from its defining formula (needs the callable g)."""
        if self.source is None:
            raise ValueError("extension was built from samples only")
        x = np.asarray(x, dtype=float)
        r = (x + 1.0) % PERIOD - 1.0
        inner = r <= 1.0
        return np.where(inner, self.source(np.where(inner, r, 0.0)), -self.source(np.where(inner, 0.0, 2.0 - r)))

    @property
    def mean(self) -> float:
        return float(self.extended.coeffs[0])


def _samples(g: Data, resolution: int) -> tuple[np.ndarray, Optional[Callable]]:
    if callable(g):
        m = 2 * math.ceil(OVERSAMPLE * (2 * resolution + 1) / 4)
        x = np.linspace(-1.0, 1.0, m + 1)
        return np.asarray(g(x), dtype=float) + 0.0 * x, g
    vals = np.asarray(g, dtype=float)
    if vals.ndim != 1 or vals.size < 3:
        raise ValueError("samples must be a 1D array on an equispaced grid including both endpoints")
    return vals, None


def odd_extend(g: Data, resolution: int = 256) -> ExtendedField:
    """h = g on (-1, 1), h(x) = -g(2 - x) on (1, 3), extended with period 4.

    ``g`` is a callable or its samples at ``-1 + 2j/m``, j = 0..m. A callable
    is sampled on a grid of at least 4x the requested resolution.
    """
    vals, src = _samples(g, resolution)
    if max(abs(vals[0]), abs(vals[-1])) > BOUNDARY_TOL:
        raise BoundaryDataError(f"boundary values {vals[0]:.3e}, {vals[-1]:.3e} do not vanish")
    m = vals.size - 1
    h = np.concatenate([vals, -vals[-2:0:-1]])  # n = 2m samples over one period
    n = h.size
    z = sfft.rfft(h) / n
    z[-1] *= 0.5  # Nyquist mode: split between the +-n/2 pair
    N = n // 2
    basis = BasisTag(Family.FOURIER, N)
    c = np.empty(basis.dim)
    c[0] = z[0].real
    c[1::2] = math.sqrt(2) * z[1:N + 1].real
    c[2::2] = -math.sqrt(2) * z[1:N + 1].imag
    grid = np.linspace(-1.0, 1.0, m + 1)
    return ExtendedField(vals, grid, Field(basis, c), src)


@dataclass(frozen=True, eq=False)
class PeriodicSolution:
    """Zero-mean solution of -u'' = h on the period-4 torus."""

    coeffs: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return _series_eval(self.coeffs, x)

    def derivative(self, x) -> np.ndarray:
        return _series_eval(self.coeffs, x, deriv=True)


def solve_periodic_poisson(ext: ExtendedField) -> PeriodicSolution:
    """Diagonal inversion; the constant mode of h vanishes by oddness."""
    c = ext.extended.coeffs
    N = (c.size - 1) // 2
    w = np.repeat(2 * np.pi * np.arange(1, N + 1) / PERIOD, 2)
    u = np.zeros_like(c)
    u[1:] = c[1:] / w**2
    return PeriodicSolution(u)


def solve_dirichlet_via_extension(g: Data, degree: int = 48, resolution: int = 512) -> Field:
    """Solve -u'' = g on (-1, 1), u(+-1) = 0, through the periodic problem.

    The periodic solution is restricted to (-1, 1) and represented in the
    Legendre space of ``degree`` by its (.,.)_X projection, computed on a
    Gauss grid fine enough to resolve every retained Fourier mode.
    """
    ext = odd_extend(g, resolution)
    sol = solve_periodic_poisson(ext)
    space = build_space(DomainSpec(Setting.ONE), BasisTag(Family.LEGENDRE, degree))
    x, w = two_panel_gauss(max(ext.original.size, 2 * degree + 2))
    _, Bx = space._tables(x)
    rhs = Bx.T @ (w * sol.derivative(x))
    return Field(space.basis, space.solve_x_gram(rhs))


def solve_dirichlet_direct(g: Callable, degree: int = 48) -> Field:
    """Legendre Galerkin solve of -u'' = g with homogeneous Dirichlet data."""
    space = build_space(DomainSpec(Setting.ONE), BasisTag(Family.LEGENDRE, degree))
    return Field(space.basis, space.solve_x_gram(space.load_vector(g)))
