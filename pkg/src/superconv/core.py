"""Domains, data functions, fields and the norms shared by every discretisation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np


class Setting(str, enum.Enum):
    ONE = "one"  # (-1, 1), homogeneous Dirichlet
    TWO = "two"  # unit torus (0, 1)


class XInner(str, enum.Enum):
    GRAD_ONLY = "grad"
    FULL_H1 = "h1"


class Family(str, enum.Enum):
    FOURIER = "fourier"
    LEGENDRE = "legendre"
    FEM = "fem"


class BasisMismatch(ValueError):
    """Two fields (or a field and a space) do not share a basis."""


@dataclass(frozen=True)
class DomainSpec:
    setting: Setting

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting(self.setting))

    @property
    def interval(self) -> tuple[float, float]:
        return (-1.0, 1.0) if self.setting is Setting.ONE else (0.0, 1.0)

    @property
    def length(self) -> float:
        a, b = self.interval
        return b - a

    @property
    def x_inner(self) -> XInner:
        return XInner.GRAD_ONLY if self.setting is Setting.ONE else XInner.FULL_H1

    @classmethod
    def for_family(cls, family: Family | str) -> "DomainSpec":
        family = Family(family)
        return cls(Setting.TWO if family is Family.FOURIER else Setting.ONE)


@dataclass(frozen=True)
class BasisTag:
    """Identifies a discrete space.

    ``size`` is the maximal wave number N (Fourier), the maximal polynomial
    degree N (Legendre) or the number of elements M (FEM). ``degree`` is the
    local polynomial degree and only meaningful for FEM.
    """

    family: Family
    size: int
    degree: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is not Family.FEM:
            object.__setattr__(self, "degree", 1)
        if self.family is Family.FEM and self.degree not in (1, 2, 3):
            raise ValueError(f"FEM degree must be 1, 2 or 3, got {self.degree}")

    @property
    def dim(self) -> int:
        if self.family is Family.FOURIER:
            return 2 * self.size + 1
        if self.family is Family.LEGENDRE:
            return self.size - 1
        return self.degree * self.size - 1

    @property
    def delta(self) -> float:
        """Discretisation parameter: 1/N for spectral spaces, h for FEM."""
        if self.family is Family.FEM:
            return 2.0 / self.size
        return 1.0 / self.size

    def compatible_with(self, domain: DomainSpec) -> bool:
        if self.family is Family.FOURIER:
            return domain.setting is Setting.TWO
        return domain.setting is Setting.ONE


class PotentialKind(str, enum.Enum):
    CONST = "const"
    TRIG_DECAY = "trigdecay"
    POLYNOMIAL = "poly"
    ABS_POWER = "abspower"
    COSINE = "cosine"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PotentialSpec:
    """A scalar data function on the domain (a potential V or a source f).

    Kinds and their parameters:

    * ``const``: ``value``.
    * ``trigdecay``: ``v_min + c * sum_{k=1..K} k^-(r+1/2) cos(2 pi k x)`` with
      ``c = v_min / (2 sum_k k^-(r+1/2))`` so the minimum is at least ``v_min/2``.
    * ``poly``: ``coeffs`` in increasing order of power.
    * ``abspower``: ``value + |x|^gamma``.
    * ``cosine``: finite series ``sum_k modes[k] cos(2 pi k x)``.
    * ``custom``: any vectorised callable ``func``.
    """

    kind: PotentialKind
    value: float = 0.0
    r: float = 0.0
    K: int = 0
    v_min: float = 1.0
    coeffs: tuple[float, ...] = ()
    gamma: float = 1.0
    modes: tuple[tuple[int, float], ...] = ()
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", PotentialKind(self.kind))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "modes", tuple((int(k), float(a)) for k, a in self.modes))
        if self.kind is PotentialKind.TRIG_DECAY and (self.K < 1 or self.v_min <= 0):
            raise ValueError("trigdecay needs K >= 1 and v_min > 0")
        if self.kind is PotentialKind.CUSTOM and self.func is None:
            raise ValueError("custom data needs a callable")
        if self.kind is PotentialKind.COSINE and any(k < 0 for k, _ in self.modes):
            raise ValueError("cosine modes must be nonnegative wave numbers")

    # constructors used throughout the tests and the config parser
    @classmethod
    def const(cls, value: float) -> "PotentialSpec":
        return cls(PotentialKind.CONST, value=float(value))

    @classmethod
    def trig_decay(cls, r: float, K: int, v_min: float = 1.0) -> "PotentialSpec":
        return cls(PotentialKind.TRIG_DECAY, r=float(r), K=int(K), v_min=float(v_min))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "PotentialSpec":
        return cls(PotentialKind.POLYNOMIAL, coeffs=tuple(coeffs))

    @classmethod
    def abs_power(cls, gamma: float, value: float = 0.0) -> "PotentialSpec":
        return cls(PotentialKind.ABS_POWER, gamma=float(gamma), value=float(value))

    @classmethod
    def cosine(cls, modes: Mapping[int, float]) -> "PotentialSpec":
        return cls(PotentialKind.COSINE, modes=tuple(sorted(modes.items())))

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], np.ndarray]) -> "PotentialSpec":
        return cls(PotentialKind.CUSTOM, func=func)

    @property
    def is_polynomial(self) -> bool:
        if self.kind in (PotentialKind.CONST, PotentialKind.POLYNOMIAL):
            return True
        return self.kind is PotentialKind.ABS_POWER and float(self.gamma).is_integer() and self.gamma % 2 == 0

    @property
    def has_kink_at_zero(self) -> bool:
        return self.kind is PotentialKind.ABS_POWER and not self.is_polynomial

    def trig_amplitude(self) -> float:
        if self.kind is not PotentialKind.TRIG_DECAY:
            raise ValueError("only trigdecay data has an amplitude")
        weights = np.arange(1, self.K + 1, dtype=float) ** (-(self.r + 0.5))
        return self.v_min / (2.0 * weights.sum())

    def cosine_series(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """Wave numbers and cosine amplitudes if the data is a finite cosine series."""
        if self.kind is PotentialKind.CONST:
            return np.array([0]), np.array([self.value])
        if self.kind is PotentialKind.TRIG_DECAY:
            k = np.arange(1, self.K + 1)
            amp = self.trig_amplitude() * k.astype(float) ** (-(self.r + 0.5))
            return np.concatenate([[0], k]), np.concatenate([[self.v_min], amp])
        if self.kind is PotentialKind.COSINE:
            if not self.modes:
                return np.array([0]), np.array([0.0])
            k, a = zip(*self.modes)
            return np.asarray(k), np.asarray(a, dtype=float)
        return None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind is PotentialKind.CONST:
            return np.full_like(x, self.value)
        if self.kind is PotentialKind.POLYNOMIAL:
            return np.polynomial.polynomial.polyval(x, self.coeffs) + 0.0 * x
        if self.kind is PotentialKind.ABS_POWER:
            return self.value + np.abs(x) ** self.gamma
        if self.kind is PotentialKind.CUSTOM:
            return np.asarray(self.func(x), dtype=float) + 0.0 * x
        k, a = self.cosine_series()
        out = np.zeros(x.size)
        flat = x.ravel()
        # chunk to bound the outer-product size
        for start in range(0, flat.size, 2048):
            xs = flat[start:start + 2048]
            out[start:start + 2048] = np.cos(2 * np.pi * np.outer(xs, k)) @ a
        return out.reshape(x.shape)


@dataclass(frozen=True, eq=False)
class Field:
    """Coefficient vector of a function in the space identified by ``basis``."""

    basis: BasisTag
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size != self.basis.dim:
            raise ValueError(f"expected {self.basis.dim} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: BasisTag) -> "Field":
        return cls(basis, np.zeros(basis.dim))

    def _check(self, other: "Field"):
        if other.basis != self.basis:
            raise BasisMismatch(f"{self.basis} vs {other.basis}")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, alpha: float) -> "Field":
        return Field(self.basis, float(alpha) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.basis, -self.coeffs)


@dataclass(frozen=True)
class NormTriple:
    l2: float
    h1: float
    h2: Optional[float] = None


class PositivityError(ValueError):
    pass


def synthesize_potential(spec: PotentialSpec, space, positive: bool = True) -> np.ndarray:
    """Sample ``spec`` at the quadrature nodes of ``space``.

    With ``positive`` set, realised samples must satisfy the positivity
    required of the effective potential in the space's setting.
    """
    values = spec(space.quad_x)
    if positive:
        vmin = float(values.min())
        if spec.kind is PotentialKind.TRIG_DECAY:
            ok = vmin >= spec.v_min / 2 - 1e-14
        else:
            # V >= 0 and not identically zero keeps the energy coercive
            ok = vmin >= 0 and float(values.max()) > 0
        if not ok:
            raise PositivityError(f"potential not positive: minimum sample {vmin:.6g}")
    return values


def _check_field(space, *fields: Field):
    for f in fields:
        if f.basis != space.basis:
            raise BasisMismatch(f"field in {f.basis}, space is {space.basis}")


def inner_x(space, u: Field, v: Field) -> float:
    """Natural inner product of X: gradient-only on (-1,1), full H1 on the torus."""
    _check_field(space, u, v)
    return float(u.coeffs @ space.apply_x_gram(v.coeffs))


def inner_l2(space, u: Field, v: Field) -> float:
    _check_field(space, u, v)
    return float(u.coeffs @ space.apply_mass(v.coeffs))


def norm_x(space, u: Field) -> float:
    return math.sqrt(max(inner_x(space, u, u), 0.0))


def norms(space, u: Field) -> NormTriple:
    """L2 norm, full H1 norm (in either setting) and, for Fourier, the H2 norm."""
    _check_field(space, u)
    c = u.coeffs
    m = float(c @ space.apply_mass(c))
    k = float(c @ space.apply_stiffness(c))
    h2 = None
    if space.basis.family is Family.FOURIER:
        w = space.wave_numbers_real
        h2 = math.sqrt(float(np.sum((1 + w**2 + w**4) * c**2)))
    return NormTriple(math.sqrt(max(m, 0.0)), math.sqrt(max(m + k, 0.0)), h2)
