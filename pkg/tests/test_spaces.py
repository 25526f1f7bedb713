import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from superconv import (
    BasisTag,
    DomainSpec,
    Family,
    Field,
    IncompatibleBasis,
    NonNestedSpaces,
    PotentialSpec,
    Setting,
    TransferMap,
    build_space,
    inner_x,
    norm_x,
    project_l2,
    project_x,
    prolong,
    space_for,
)
from superconv.spaces import assemble_potential_mass, interpolate_fem


def dense(op):
    return op.toarray() if hasattr(op, "toarray") else np.asarray(op)


def test_build_space_dims():
    assert space_for("fourier", 3).dim == 7
    assert space_for("legendre", 5).dim == 4


def test_fem_p1_stiffness_by_hand():
    s = space_for("fem", 8, 1)
    K = dense(s.stiffness)
    h = 0.25
    assert s.dim == 7
    assert np.allclose(np.diag(K), 2 / h, rtol=1e-13)
    assert np.allclose(np.diag(K, 1), -1 / h, rtol=1e-13)
    assert np.allclose(np.triu(K, 2), 0.0)


def test_incompatible_basis():
    with pytest.raises(IncompatibleBasis):
        build_space(DomainSpec(Setting.ONE), BasisTag(Family.FOURIER, 4))
    with pytest.raises(IncompatibleBasis):
        build_space(DomainSpec(Setting.TWO), BasisTag(Family.FEM, 4, 1))


def test_size_below_minimum():
    with pytest.raises(ValueError):
        space_for("fem", 1, 1)


@pytest.mark.parametrize("fam,n,deg", [("fourier", 6, 1), ("legendre", 10, 1), ("fem", 6, 1), ("fem", 4, 2), ("fem", 3, 3)])
def test_operator_symmetry_and_definiteness(fam, n, deg):
    s = space_for(fam, n, deg)
    M, K = dense(s.mass), dense(s.stiffness)
    for A in (M, K):
        assert np.max(np.abs(A - A.T)) <= 1e-13 * np.max(np.abs(A))
    assert np.linalg.eigvalsh(M).min() > 0
    assert np.linalg.eigvalsh(K).min() > -1e-12 * np.max(np.abs(K))


def test_fourier_operators():
    s = space_for("fourier", 5)
    assert np.allclose(dense(s.mass), np.eye(11), atol=1e-14)
    k = np.repeat(np.arange(1, 6), 2)
    assert np.allclose(np.diag(dense(s.stiffness)), np.concatenate([[0], (2 * np.pi * k) ** 2]), rtol=1e-14)


def test_legendre_stiffness_identity():
    s = space_for("legendre", 24)
    assert np.max(np.abs(dense(s.stiffness) - np.eye(s.dim))) <= 1e-12


@pytest.mark.parametrize("fam,n,deg", [("fourier", 4, 1), ("legendre", 8, 1), ("fem", 5, 2)])
def test_potential_mass_const(fam, n, deg):
    s = space_for(fam, n, deg)
    MV = dense(assemble_potential_mass(s, PotentialSpec.const(3.5)))
    M = dense(s.mass)
    assert np.max(np.abs(MV - 3.5 * M)) <= 1e-13 * np.max(np.abs(3.5 * M))
    assert np.all(dense(assemble_potential_mass(s, PotentialSpec.const(0.0))) == 0)


def test_potential_mass_cosine_coupling():
    s = space_for("fourier", 1)
    MV = dense(assemble_potential_mass(s, PotentialSpec.cosine({1: 1.0})))
    # (cos(2 pi x) * 1, sqrt2 cos(2 pi x)) = sqrt2/2; the complex-mode coupling is 1/2
    assert MV[0, 1] == pytest.approx(math.sqrt(2) / 2, abs=1e-14)
    assert MV[0, 1] / math.sqrt(2) == pytest.approx(0.5, abs=1e-14)
    assert MV[0, 2] == pytest.approx(0.0, abs=1e-14)


def test_project_x_fourier_truncation():
    fine = space_for("fourier", 5)
    c = np.zeros(11)
    c[0], c[3], c[9] = 2.0, -1.0, 0.5  # constant, cos mode 2, cos mode 5
    p = project_x(space_for("fourier", 3), Field(fine.basis, c))
    want = np.zeros(7)
    want[0], want[3] = 2.0, -1.0
    assert np.array_equal(p.coeffs, want)


def test_project_l2_equals_project_x_fourier(rng):
    fine = space_for("fourier", 20)
    u = Field(fine.basis, rng.standard_normal(fine.dim))
    s = space_for("fourier", 7)
    assert np.array_equal(project_x(s, u).coeffs, project_l2(s, u).coeffs)


def test_legendre_truncation_matches_normal_equations(rng):
    fine, s = space_for("legendre", 30), space_for("legendre", 12)
    u = Field(fine.basis, rng.standard_normal(fine.dim))
    p = project_x(s, u)
    G = dense(s.stiffness)
    T = dense(TransferMap(s, fine).columns())
    direct = np.linalg.solve(G, T.T @ dense(fine.stiffness) @ u.coeffs)
    assert np.max(np.abs(p.coeffs - direct)) <= 1e-12 * np.max(np.abs(direct))
    assert np.max(np.abs(p.coeffs - u.coeffs[: s.dim])) <= 1e-12 * np.max(np.abs(u.coeffs))


def test_project_identity_on_members(rng):
    for fam, n, deg in [("fourier", 5, 1), ("legendre", 9, 1), ("fem", 4, 2)]:
        s = space_for(fam, n, deg)
        u = Field(s.basis, rng.standard_normal(s.dim))
        assert project_x(s, u) is u
        assert project_l2(s, u) is u


def test_project_l2_hat_in_space():
    coarse, fine = space_for("fem", 2, 1), space_for("fem", 8, 1)
    hat = interpolate_fem(fine, lambda x: 1 - np.abs(x))
    p = project_l2(coarse, hat)
    assert p.coeffs == pytest.approx([1.0], abs=1e-13)


def test_interpolation_examples():
    p1 = space_for("fem", 4, 1)
    # piecewise linear, vanishing at +-1: a member of the P1 space
    g = lambda x: np.minimum(1 + x, 0.5 * (1 - x))
    lin = interpolate_fem(p1, g)
    xs = np.array([-0.9, 0.1, 0.77, 0.5])
    assert np.allclose(p1.eval_at(lin.coeffs, xs), g(xs), atol=1e-14)
    c = np.array([0.3, -1.2, 2.0])
    assert np.allclose(interpolate_fem(p1, lambda x: p1.eval_at(c, x)).coeffs, c, atol=1e-14)
    p2 = space_for("fem", 3, 2)
    q = interpolate_fem(p2, lambda x: x**2 - 1)
    xs = np.linspace(-1, 1, 17)
    assert np.allclose(p2.eval_at(q.coeffs, xs), xs**2 - 1, atol=1e-13)
    cub = interpolate_fem(space_for("fem", 2, 1), lambda x: x**3)
    assert cub.coeffs[0] == 0.0
    with pytest.raises(IncompatibleBasis):
        interpolate_fem(space_for("legendre", 4), np.sin)


def test_prolong_examples():
    f2, f4 = space_for("fourier", 2), space_for("fourier", 4)
    u = Field(f2.basis, np.arange(1.0, 6.0))
    v = prolong(TransferMap(f2, f4), u)
    assert np.array_equal(v.coeffs, np.concatenate([np.arange(1.0, 6.0), np.zeros(4)]))

    c, f = space_for("fem", 4, 1), space_for("fem", 8, 1)
    u = Field(c.basis, [1.0, -2.0, 4.0])
    v = prolong(TransferMap(c, f), u).coeffs
    assert np.allclose(v, [0.5, 1.0, -0.5, -2.0, 1.0, 4.0, 2.0], atol=1e-15)

    l5, l7 = space_for("legendre", 5), space_for("legendre", 7)
    u = Field(l5.basis, [1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(prolong(TransferMap(l5, l7), u).coeffs, [1.0, 2.0, 3.0, 4.0, 0.0, 0.0])


def test_non_nested():
    with pytest.raises(NonNestedSpaces):
        TransferMap(space_for("fem", 4, 1), space_for("fem", 6, 1))
    with pytest.raises(NonNestedSpaces):
        TransferMap(space_for("fourier", 6), space_for("fourier", 3))
    with pytest.raises(NonNestedSpaces):
        TransferMap(space_for("fem", 4, 1), space_for("fem", 8, 2))


def test_transfer_composition(rng):
    a, b, c = space_for("fem", 3, 2), space_for("fem", 6, 2), space_for("fem", 24, 2)
    x = rng.standard_normal(a.dim)
    two = TransferMap(b, c).apply(TransferMap(a, b).apply(x))
    assert np.allclose(two, TransferMap(a, c).apply(x), atol=1e-14)


PAIRS = [("fourier", 4, 1, 16), ("legendre", 7, 1, 25), ("fem", 4, 1, 32), ("fem", 4, 2, 16), ("fem", 2, 3, 8)]


def _random_fine(fam, n, deg, fine, seed):
    s, t = space_for(fam, n, deg), space_for(fam, fine, deg)
    rng = np.random.default_rng(seed)
    return s, t, Field(t.basis, rng.standard_normal(t.dim)), rng


@pytest.mark.parametrize("fam,n,deg,fine", PAIRS)
@given(seed=st.integers(0, 2**32 - 1))
def test_projector_self_adjoint_and_idempotent(fam, n, deg, fine, seed):
    s, t, u, rng = _random_fine(fam, n, deg, fine, seed)
    v = Field(t.basis, rng.standard_normal(t.dim))
    tm = TransferMap(s, t)
    pu, pv = prolong(tm, project_x(s, u)), prolong(tm, project_x(s, v))
    scale = norm_x(t, u) * norm_x(t, v)
    assert abs(inner_x(t, pu, v) - inner_x(t, u, pv)) <= 1e-12 * scale
    p = project_x(s, u)
    assert np.allclose(project_x(s, prolong(tm, p)).coeffs, p.coeffs, atol=1e-12 * np.max(np.abs(p.coeffs)))


@pytest.mark.parametrize("fam,n,deg,fine", PAIRS)
@given(seed=st.integers(0, 2**32 - 1))
def test_best_approximation(fam, n, deg, fine, seed):
    s, t, u, rng = _random_fine(fam, n, deg, fine, seed)
    tm = TransferMap(s, t)
    best = norm_x(t, u - prolong(tm, project_x(s, u)))
    for _ in range(100):
        v = Field(s.basis, rng.standard_normal(s.dim))
        assert best <= norm_x(t, u - prolong(tm, v)) + 1e-12


@pytest.mark.parametrize("fam,n,deg,fine", PAIRS)
@given(seed=st.integers(0, 2**32 - 1))
def test_orthogonality_residual(fam, n, deg, fine, seed):
    s, t, u, _ = _random_fine(fam, n, deg, fine, seed)
    tm = TransferMap(s, t)
    e = u.coeffs - tm.apply(project_x(s, u).coeffs)
    r = tm.adjoint(t.apply_x_gram(e))
    assert np.max(np.abs(r)) <= 1e-10 * norm_x(t, u)


@pytest.mark.parametrize("fam,n,deg,fine", PAIRS)
@given(seed=st.integers(0, 2**32 - 1))
def test_prolong_then_project_is_identity(fam, n, deg, fine, seed):
    s, t, _, rng = _random_fine(fam, n, deg, fine, seed)
    u = Field(s.basis, rng.standard_normal(s.dim))
    back = project_x(s, prolong(TransferMap(s, t), u))
    assert np.allclose(back.coeffs, u.coeffs, atol=1e-12 * np.max(np.abs(u.coeffs)))
    back2 = project_l2(s, prolong(TransferMap(s, t), u))
    assert np.allclose(back2.coeffs, u.coeffs, atol=1e-12 * np.max(np.abs(u.coeffs)))
