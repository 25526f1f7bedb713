import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from superconv import (
    BasisMismatch,
    BasisTag,
    DomainSpec,
    Family,
    Field,
    PositivityError,
    PotentialSpec,
    Setting,
    XInner,
    inner_l2,
    inner_x,
    norms,
    space_for,
    synthesize_potential,
)
from superconv.spaces import TransferMap, prolong

from conftest import const_field, cos_mode


def test_domain_settings():
    one, two = DomainSpec(Setting.ONE), DomainSpec(Setting.TWO)
    assert one.x_inner is XInner.GRAD_ONLY and two.x_inner is XInner.FULL_H1
    assert one.interval == (-1.0, 1.0) and one.length == 2.0
    assert two.interval == (0.0, 1.0) and two.length == 1.0


def test_basis_dims():
    assert BasisTag(Family.FOURIER, 3).dim == 7
    assert BasisTag(Family.LEGENDRE, 5).dim == 4
    assert BasisTag(Family.FEM, 8, 1).dim == 7
    assert BasisTag(Family.FEM, 8, 2).dim == 15
    assert BasisTag(Family.FEM, 4, 3).dim == 11


def test_basis_compatibility():
    assert BasisTag(Family.FOURIER, 3).compatible_with(DomainSpec(Setting.TWO))
    assert not BasisTag(Family.FOURIER, 3).compatible_with(DomainSpec(Setting.ONE))
    assert not BasisTag(Family.LEGENDRE, 3).compatible_with(DomainSpec(Setting.TWO))


def test_field_rejects_bad_input():
    with pytest.raises(ValueError):
        Field(BasisTag(Family.FOURIER, 2), np.zeros(4))
    with pytest.raises(ValueError):
        Field(BasisTag(Family.FOURIER, 1), [0.0, np.nan, 1.0])
    with pytest.raises(BasisMismatch):
        const_field(2) + const_field(3)


def test_field_is_immutable():
    u = const_field(2)
    with pytest.raises(ValueError):
        u.coeffs[0] = 3.0


def test_potential_const_samples():
    s = space_for("fourier", 4)
    assert np.all(synthesize_potential(PotentialSpec.const(10), s) == 10.0)


def test_potential_trigdecay_at_zero():
    V = PotentialSpec.trig_decay(2.5, 4, 1.0)
    assert V(np.array([0.0]))[0] == pytest.approx(1.5, abs=1e-14)
    k = np.arange(1, 5.0)
    c = 1 / (2 * np.sum(k**-3))
    x = np.array([0.3])
    assert V(x)[0] == pytest.approx(1 + c * np.sum(k**-3 * np.cos(2 * np.pi * k * 0.3)), abs=1e-14)


def test_potential_trigdecay_minimum():
    V = PotentialSpec.trig_decay(2.5, 4096, 1.0)
    s = space_for("fourier", 512)
    assert synthesize_potential(V, s).min() >= 0.5


def test_potential_abspower():
    assert PotentialSpec.abs_power(1.0)(np.array([-0.25]))[0] == 0.25


def test_positivity_rejected():
    s = space_for("legendre", 8)
    with pytest.raises(PositivityError, match="minimum"):
        synthesize_potential(PotentialSpec.polynomial([-1.0, 0.0, 1.0]), s)


def test_inner_x_examples():
    s = space_for("fourier", 4)
    u = cos_mode(4)
    assert inner_x(s, Field.zeros(u.basis), Field.zeros(u.basis)) == 0.0
    assert inner_x(s, u, u) == pytest.approx(0.5 + 2 * math.pi**2, rel=1e-14)
    assert inner_x(s, u, u) == pytest.approx(20.2392, abs=1e-4)
    fem = space_for("fem", 2, 1)  # h = 1, single hat at 0
    hat = Field(fem.basis, [1.0])
    assert inner_x(fem, hat, hat) == pytest.approx(2.0, rel=1e-14)


def test_norm_examples():
    s = space_for("fourier", 4)
    z = norms(s, Field.zeros(s.basis))
    assert (z.l2, z.h1, z.h2) == (0.0, 0.0, 0.0)
    n = norms(s, cos_mode(4))
    assert n.l2 == pytest.approx(math.sqrt(0.5), rel=1e-14)
    assert n.h1 == pytest.approx(math.sqrt(0.5 + 2 * math.pi**2), rel=1e-14)
    assert n.h1 == pytest.approx(4.498801, abs=1e-6)
    one = norms(s, const_field(4))
    assert (one.l2, one.h1, one.h2) == pytest.approx((1.0, 1.0, 1.0))


def test_h2_only_for_fourier():
    s = space_for("legendre", 6)
    assert norms(s, Field(s.basis, np.ones(s.dim))).h2 is None


SPACES = [("fourier", 6, 1), ("legendre", 9, 1), ("fem", 6, 1), ("fem", 4, 2), ("fem", 3, 3)]


@pytest.mark.parametrize("fam,n,deg", SPACES)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_inner_x_bilinear_symmetric(fam, n, deg, seed, a, b):
    s = space_for(fam, n, deg)
    rng = np.random.default_rng(seed)
    u, v, w = (Field(s.basis, rng.standard_normal(s.dim)) for _ in range(3))
    lhs = inner_x(s, u * a + v * b, w)
    rhs = a * inner_x(s, u, w) + b * inner_x(s, v, w)
    scale = (abs(a) + abs(b) + 1) * max(1.0, abs(inner_x(s, u, u)), abs(inner_x(s, v, v)), abs(inner_x(s, w, w)))
    assert abs(lhs - rhs) <= 1e-13 * scale
    assert abs(inner_x(s, u, w) - inner_x(s, w, u)) <= 1e-13 * scale


@pytest.mark.parametrize("fam,n,deg", SPACES)
@given(seed=st.integers(0, 2**32 - 1))
def test_cauchy_schwarz(fam, n, deg, seed):
    s = space_for(fam, n, deg)
    rng = np.random.default_rng(seed)
    u, v = (Field(s.basis, rng.standard_normal(s.dim)) for _ in range(2))
    assert abs(inner_x(s, u, v)) <= math.sqrt(inner_x(s, u, u) * inner_x(s, v, v)) + 1e-12


@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 40))
def test_parseval(seed, N):
    s = space_for("fourier", N)
    c = np.random.default_rng(seed).standard_normal(2 * N + 1)
    u = Field(s.basis, c)
    quad = math.sqrt(s.integrate(s.values(c) ** 2))
    assert norms(s, u).l2 == pytest.approx(quad, rel=1e-12)
    assert norms(s, u).l2 == pytest.approx(np.linalg.norm(c), rel=1e-12)


@pytest.mark.parametrize("fam,n,deg,fine", [("fourier", 5, 1, 17), ("legendre", 7, 1, 20), ("fem", 4, 2, 16), ("fem", 3, 1, 12)])
@given(seed=st.integers(0, 2**32 - 1))
def test_norms_invariant_under_prolongation(fam, n, deg, fine, seed):
    s, t = space_for(fam, n, deg), space_for(fam, fine, deg)
    u = Field(s.basis, np.random.default_rng(seed).standard_normal(s.dim))
    v = prolong(TransferMap(s, t), u)
    a, b = norms(s, u), norms(t, v)
    assert b.l2 == pytest.approx(a.l2, rel=1e-12)
    assert b.h1 == pytest.approx(a.h1, rel=1e-12)


def test_inner_l2_basis_check():
    s = space_for("fourier", 3)
    with pytest.raises(BasisMismatch):
        inner_l2(s, const_field(4), const_field(4))
