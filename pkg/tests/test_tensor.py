import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spin7flow import tensor as tc
from spin7flow.tensor import TensorError

from conftest import random_form, rel_err

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_contract_identity_with_identity():
    d = np.eye(8)
    assert np.array_equal(tc.contract(d, d, [(1, 0)]), d)


def test_contract_phi_all_pairs_is_336(Phi0):
    assert tc.contract(Phi0, Phi0, [(0, 0), (1, 1), (2, 2), (3, 3)]) == pytest.approx(336, abs=1e-12)


def test_contract_phi_three_pairs_is_42_delta(Phi0):
    out = tc.contract(Phi0, Phi0, [(1, 1), (2, 2), (3, 3)])
    assert np.abs(out - 42 * np.eye(8)).max() < 1e-12


def test_contract_with_metric_matches_explicit_raise(rng):
    a, b = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    M = rng.standard_normal((8, 8))
    g = M @ M.T + 8 * np.eye(8)
    gi = np.linalg.inv(g)
    expected = np.einsum("ij,kl,ik->jl", a, b, gi)
    assert rel_err(tc.contract(a, b, [(0, 0)], g), expected) < 1e-12


def test_contract_is_multilinear(rng):
    t1, t1p = rng.standard_normal((2, 8, 8, 8))
    t2 = rng.standard_normal((8, 8))
    lhs = tc.contract(2.5 * t1 - 0.5 * t1p, t2, [(2, 0)])
    rhs = 2.5 * tc.contract(t1, t2, [(2, 0)]) - 0.5 * tc.contract(t1p, t2, [(2, 0)])
    assert rel_err(lhs, rhs) < 1e-12


@pytest.mark.parametrize("pairs", [[(4, 0)], [(0, 0), (0, 1)]])
def test_contract_rejects_bad_pairs(rng, pairs):
    with pytest.raises(TensorError):
        tc.contract(rng.standard_normal((8,) * 2), rng.standard_normal((8,) * 2), pairs)


def test_contract_rejects_rank_overflow(rng):
    with pytest.raises(TensorError):
        tc.contract(rng.standard_normal((8,) * 3), rng.standard_normal((8,) * 3), [])


def test_as_tensor_rejects_nonfinite_and_bad_shape():
    with pytest.raises(TensorError):
        tc.as_tensor(np.full((8, 8), np.nan))
    with pytest.raises(TensorError):
        tc.as_tensor(np.zeros((8, 7)))
    with pytest.raises(TensorError):
        tc.as_tensor(np.zeros((8,) * 6))


def test_check_metric_rejects_indefinite():
    g = np.eye(8)
    g[3, 3] = -1
    with pytest.raises(TensorError):
        tc.check_metric(g)


def test_antisymmetrize_symmetric_is_zero(rng):
    s = rng.standard_normal((8, 8))
    assert np.abs(tc.antisymmetrize(s + s.T)).max() == 0


def test_sym_plus_skew_recovers_rank2(rng):
    t = rng.standard_normal((8, 8))
    assert np.abs(tc.symmetrize(t) + tc.antisymmetrize(t) - t).max() < 1e-15


def test_antisymmetrize_phi_is_phi(Phi0):
    assert np.abs(tc.antisymmetrize(Phi0) - Phi0).max() < 1e-15


@pytest.mark.parametrize("rank", [2, 3, 4])
def test_projections_idempotent(rng, rank):
    t = rng.standard_normal((8,) * rank)
    a = tc.antisymmetrize(t)
    s = tc.symmetrize(t)
    assert np.abs(tc.antisymmetrize(a) - a).max() < 1e-14
    assert np.abs(tc.symmetrize(s) - s).max() < 1e-14
    assert np.abs(tc.symmetrize(a)).max() < 1e-14
    assert np.abs(tc.antisymmetrize(s)).max() < 1e-14


def test_antisymmetrize_rejects_rank_one():
    with pytest.raises(TensorError):
        tc.antisymmetrize(np.ones(8))


def test_norm_sq_examples(Phi0, rng):
    assert tc.norm_sq(np.zeros((8, 8))) == 0
    assert tc.norm_sq(Phi0) == pytest.approx(336, abs=1e-12)
    t = rng.standard_normal((8, 8, 8))
    assert tc.norm_sq(9.0 * t) == pytest.approx(81 * tc.norm_sq(t), rel=1e-12)


def test_inner_rank_mismatch():
    with pytest.raises(TensorError):
        tc.inner(np.zeros((8, 8)), np.zeros((8, 8, 8)))


def test_norm_with_metric_matches_raised_indices(rng):
    M = rng.standard_normal((8, 8))
    g = M @ M.T + 8 * np.eye(8)
    gi = np.linalg.inv(g)
    t = rng.standard_normal((8, 8))
    expected = np.einsum("ij,kl,ik,jl->", t, t, gi, gi)
    assert tc.norm_sq(t, g) == pytest.approx(expected, rel=1e-12)


def test_hodge_star_phi_self_dual(Phi0):
    assert np.abs(tc.hodge_star(Phi0) - Phi0).max() < 1e-14


def test_hodge_star_volume_split():
    e = np.eye(8)
    f = tc.wedge(tc.wedge(e[0], e[1]), tc.wedge(e[2], e[3]))
    g = tc.wedge(tc.wedge(e[4], e[5]), tc.wedge(e[6], e[7]))
    assert np.abs(tc.hodge_star(f) - g).max() < 1e-14


def test_hodge_star_sign_by_permutation_parity():
    # ⋆(e⁰∧e²∧e⁴∧e⁶) = sign(0,2,4,6,1,3,5,7) e¹∧e³∧e⁵∧e⁷
    e = np.eye(8)
    f = tc.wedge(tc.wedge(e[0], e[2]), tc.wedge(e[4], e[6]))
    g = tc.wedge(tc.wedge(e[1], e[3]), tc.wedge(e[5], e[7]))
    assert np.abs(tc.hodge_star(f) - tc.perm_sign((0, 2, 4, 6, 1, 3, 5, 7)) * g).max() < 1e-14


def test_hodge_star_involution_and_isometry(rng):
    s = random_form(rng, 4)
    M = rng.standard_normal((8, 8))
    g = M @ M.T + 4 * np.eye(8)
    assert np.abs(tc.hodge_star(tc.hodge_star(s)) - s).max() < 1e-13
    assert np.abs(tc.hodge_star(tc.hodge_star(s, g), g) - s).max() < 1e-10
    assert tc.norm_sq(tc.hodge_star(s, g), g) == pytest.approx(tc.norm_sq(s, g), rel=1e-12)


def test_hodge_star_3_5_composition(rng):
    # ⋆⋆ = (−1)^{k(8−k)} = −1 on 3-forms
    s = random_form(rng, 3)
    assert np.abs(tc.hodge_star(tc.hodge_star(s)) + s).max() < 1e-13


def test_hodge_star_rejects_non_form(rng):
    with pytest.raises(TensorError):
        tc.hodge_star(rng.standard_normal((8,) * 4))


def test_wedge_and_interior_examples():
    e = np.eye(8)
    assert np.abs(tc.wedge(e[1], e[1])).max() == 0
    assert np.abs(tc.interior(e[0], tc.wedge(e[0], e[1])) - e[1]).max() == 0


def test_wedge_graded_commutative(rng):
    a, b = random_form(rng, 2), random_form(rng, 3)
    assert np.abs(tc.wedge(a, b) - tc.wedge(b, a)).max() < 1e-13
    v, w = rng.standard_normal((2, 8))
    assert np.abs(tc.wedge(v, w) + tc.wedge(w, v)).max() < 1e-14


def test_wedge_associative(rng):
    a, b, c = random_form(rng, 2), rng.standard_normal(8), random_form(rng, 2)
    lhs = tc.wedge(tc.wedge(a, b), c)
    rhs = tc.wedge(a, tc.wedge(b, c))
    assert rel_err(lhs, rhs) < 1e-12


def test_interior_is_antiderivation(rng):
    v, a, b = rng.standard_normal(8), random_form(rng, 2), random_form(rng, 2)
    lhs = tc.interior(v, tc.wedge(a, b))
    rhs = tc.wedge(tc.interior(v, a), b) + tc.wedge(a, tc.interior(v, b))
    assert rel_err(lhs, rhs) < 1e-12


def test_wedge_rank_overflow(rng):
    with pytest.raises(TensorError):
        tc.wedge(random_form(rng, 3), random_form(rng, 3))


def test_exterior_power_basis_orthonormal():
    for k in (2, 3, 4):
        B = tc.exterior_power_basis(k).reshape(math.comb(8, k), -1)
        assert np.abs(B @ B.T - np.eye(math.comb(8, k))).max() < 1e-14


def test_perm_sign():
    assert tc.perm_sign((0, 1, 2)) == 1
    assert tc.perm_sign((1, 0, 2)) == -1
    for p in itertools.permutations(range(4)):
        M = np.eye(4)[list(p)]
        assert tc.perm_sign(p) == round(np.linalg.det(M))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (8, 8), elements=finite), arrays(np.float64, (8, 8), elements=finite))
def test_inner_symmetric_and_cauchy_schwarz(a, b):
    ab = tc.inner(a, b)
    assert ab == pytest.approx(tc.inner(b, a), abs=1e-9)
    assert ab ** 2 <= tc.norm_sq(a) * tc.norm_sq(b) * (1 + 1e-12) + 1e-9


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (8, 8, 8), elements=finite))
def test_antisymmetrize_property(t):
    a = tc.antisymmetrize(t)
    assert tc.is_antisymmetric(a, 3, atol=1e-9)
    assert np.abs(tc.expand_form(tc.compress_form(a, 3), 3) - a).max() < 1e-9
