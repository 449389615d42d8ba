import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from rflab.algebra import (
    HomogeneousSpaceSpec,
    LieAlgebraSpec,
    bracket,
    invariant_sym_basis,
    triple_coefficients,
    validate,
)
from rflab.catalog import get_space, so4_space, su2_space

from conftest import STRUCTURE_SPACES

vec8 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=8, max_size=8).map(np.array)


# --- independent su(3) oracle: Gell-Mann style basis as explicit matrices ---

def su3_matrix_basis():
    """Basis of su(3) in the catalog order: two Cartan elements, then root pairs."""
    def E(a, b):
        M = np.zeros((3, 3), complex)
        M[a, b] = 1
        return M

    mats = [1j * np.diag([1, -1, 0]), 1j * np.diag([1, 1, -2])]
    for a, b in [(0, 1), (0, 2), (1, 2)]:
        mats.append(E(a, b) - E(b, a))
        mats.append(1j * (E(a, b) + E(b, a)))
    return mats


def to_coords(M, mats):
    A = np.array([np.concatenate([X.real.ravel(), X.imag.ravel()]) for X in mats]).T
    v = np.concatenate([M.real.ravel(), M.imag.ravel()])
    return np.linalg.lstsq(A, v, rcond=None)[0]


def test_bracket_su2_defining_relation():
    alg = su2_space().algebra
    e = np.eye(3)
    assert np.allclose(bracket(alg, e[0], e[1]), e[2])
    assert np.allclose(bracket(alg, e[1], e[2]), e[0])
    assert np.allclose(bracket(alg, e[2], e[0]), e[1])


def test_bracket_dimension_mismatch():
    alg = su2_space().algebra
    with pytest.raises(ValueError):
        bracket(alg, np.ones(2), np.ones(3))


@given(vec8)
def test_bracket_self_is_zero(X):
    alg = get_space("su3_full_flag").algebra
    assert np.allclose(bracket(alg, X, X), 0, atol=1e-12)


@given(vec8, vec8, vec8, st.floats(-2, 2))
def test_bracket_bilinear_antisymmetric(X, Y, Z, a):
    alg = get_space("su3_full_flag").algebra
    assert np.allclose(bracket(alg, X, Y), -bracket(alg, Y, X), atol=1e-10)
    assert np.allclose(bracket(alg, a * X + Z, Y), a * bracket(alg, X, Y) + bracket(alg, Z, Y), atol=1e-9)


def test_bracket_matches_matrix_commutator(rng):
    alg = get_space("su3_full_flag").algebra
    mats = su3_matrix_basis()
    for _ in range(10):
        x, y = rng.normal(size=8), rng.normal(size=8)
        X = sum(c * M for c, M in zip(x, mats))
        Y = sum(c * M for c, M in zip(y, mats))
        expected = to_coords(X @ Y - Y @ X, mats)
        assert np.allclose(bracket(alg, x, y), expected, atol=1e-12)


@pytest.mark.parametrize("space_id", STRUCTURE_SPACES)
def test_catalog_spaces_validate(space_id):
    rep = validate(get_space(space_id))
    assert rep.passed, rep.as_dict()


def test_maximality_fails_with_partial_torus():
    full = get_space("su3_group")
    # only the first torus direction is vertical; the second stays in n
    mods = [full.modules[0], np.vstack([full.modules[1]]), *full.modules[2:]]
    bad = HomogeneousSpaceSpec(full.algebra, full.h_basis, [mods[0], *mods[1:]], toral_split=1)
    rep = validate(bad)
    assert "maximality" in rep.failures()
    assert rep.checks["antisymmetry"] <= rep.tol


def test_q_perturbation_breaks_ad_invariance():
    sp = get_space("su3_full_flag")
    Q = sp.algebra.Q.copy()
    Q[0, 0] *= 1.3
    bad = HomogeneousSpaceSpec(LieAlgebraSpec(sp.algebra.c, Q), sp.h_basis, sp.modules)
    rep = validate(bad)
    assert "Q_ad_invariance" in rep.failures()


def test_each_invariant_violable():
    sp = get_space("su3_full_flag")
    c = sp.algebra.c.copy()
    c[2, 3, 4] += 0.5  # not mirrored
    rep = validate(HomogeneousSpaceSpec(LieAlgebraSpec(c, sp.algebra.Q), sp.h_basis, sp.modules))
    assert "antisymmetry" in rep.failures()

    c = sp.algebra.c.copy()
    c[2, 3] *= 1.5
    c[3, 2] *= 1.5
    rep = validate(HomogeneousSpaceSpec(LieAlgebraSpec(c, sp.algebra.Q), sp.h_basis, sp.modules))
    assert "jacobi" in rep.failures()

    # a module that is not ad(h)-invariant
    mods = [np.array([[0, 0, 1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, 0, 0, 0]], float),
            np.array([[0, 0, 0, 1, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1, 0, 0]], float), [6, 7]]
    rep = validate(HomogeneousSpaceSpec(sp.algebra, sp.h_basis, mods))
    assert "modules_ad_h_invariant" in rep.failures()

    # h not orthogonal to m
    h = sp.h_basis.copy()
    h[0, 2] = 0.3
    rep = validate(HomogeneousSpaceSpec(sp.algebra, h, sp.modules))
    assert "orthogonal_decomposition" in rep.failures()


def test_invariant_basis_dimensions():
    b = invariant_sym_basis(get_space("su3_group"), submersion=True)
    assert b.t_block_dim == 3
    b = invariant_sym_basis(get_space("su3_full_flag"))
    assert len(b) == 3
    for E in b.frames:
        # each frame element is the identity of one module
        ev = np.linalg.eigvalsh(E)
        assert np.allclose(sorted(set(np.round(ev, 12))), [0, 1])
    assert len(invariant_sym_basis(get_space("so4_full_flag"))) == 2
    # connected H acting trivially on t: nu = d(d+1)/2
    for sid, d in [("su4_group", 3), ("su4_over_s1", 2), ("aloff_wallach(1,2)", 1), ("so4_group", 2)]:
        assert invariant_sym_basis(get_space(sid), submersion=True).t_block_dim == d * (d + 1) // 2


@pytest.mark.parametrize("space_id", ["su3_full_flag", "su3_group", "aloff_wallach(1,2)", "so4_slope(1,2)"])
def test_invariant_basis_properties(space_id):
    sp = get_space(space_id)
    b = invariant_sym_basis(sp)
    fr = sp.frame
    gram = np.einsum("iab,jab->ij", b.elements, b.elements)
    assert np.allclose(gram, np.eye(len(b)), atol=1e-10)
    for E in b.elements:
        assert np.allclose(E, E.T)
        for a in range(fr.nh):
            A = fr.ad_m[a]
            assert np.max(np.abs(E @ A - A @ E)) < 1e-9


def test_isotropy_generator_component_group():
    # diag(1,-1,1,-1) normalizes the maximal torus of SO(4) and preserves both modules
    base = so4_space(None)
    g = np.diag([-1.0, -1.0, 1.0, -1.0, 1.0, -1.0])  # its action on (E12, E34, n1, n2)
    sp = HomogeneousSpaceSpec(base.algebra, base.h_basis, base.modules, (g,))
    rep = validate(sp)
    assert rep.passed, rep.as_dict()
    assert len(invariant_sym_basis(sp)) == 2
    # conjugating the generator by a map commuting with the decomposition keeps the dimension
    R = np.eye(6)
    th = 0.7
    R[2:4, 2:4] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
    sp2 = HomogeneousSpaceSpec(base.algebra, base.h_basis, base.modules, (R @ g @ R.T,))
    assert len(invariant_sym_basis(sp2)) == len(invariant_sym_basis(sp))


def test_isotropy_element_from_h_is_automorphism():
    sp = get_space("su3_full_flag")
    g = expm(0.37 * sp.algebra.ad(sp.h_basis[0]))
    spg = HomogeneousSpaceSpec(sp.algebra, sp.h_basis, sp.modules, (g,))
    assert validate(spg).passed
    assert len(invariant_sym_basis(spg)) == 3


def test_triple_su3_direct_summation():
    # oracle: Q-orthonormal root vectors as matrices, brackets as commutators
    mats = su3_matrix_basis()
    form = lambda A, B: -6 * np.real(np.trace(A @ B))
    roots = mats[2:]
    roots = [M / np.sqrt(form(M, M)) for M in roots]
    mods = [roots[0:2], roots[2:4], roots[4:6]]
    total = 0.0
    for X in mods[0]:
        for Y in mods[1]:
            for Z in mods[2]:
                total += form(X @ Y - Y @ X, Z) ** 2
    assert total == pytest.approx(1 / 3, abs=1e-12)
    T = triple_coefficients(get_space("su3_full_flag"))
    assert T[0, 1, 2] == pytest.approx(total, abs=1e-12)
    for p in itertools.permutations(range(3)):
        assert T[p] == pytest.approx(T[0, 1, 2], abs=1e-14)


def test_triple_abelian_zero():
    c = np.zeros((3, 3, 3))
    sp = HomogeneousSpaceSpec(LieAlgebraSpec(c, np.eye(3)), np.zeros((0, 3)), [[0], [1], [2]])
    assert np.all(triple_coefficients(sp) == 0)


@pytest.mark.parametrize("space_id", ["su3_group", "su4_group", "so4_group", "su4_over_s1"])
def test_triple_vertical_pairs_vanish(space_id):
    sp = get_space(space_id)
    T = triple_coefficients(sp)
    r = sp.toral_split
    assert np.max(np.abs(T[:r, :r, :])) < 1e-14


@given(st.integers(0, 2**31 - 1))
def test_triple_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    sp = get_space("su4_over_t2")
    rots = []
    for d in sp.module_dims:
        Qm, _ = np.linalg.qr(rng.normal(size=(d, d)))
        rots.append(Qm)
    a = triple_coefficients(sp)
    b = triple_coefficients(sp, rots)
    assert np.max(np.abs(a - b)) <= 1e-10
