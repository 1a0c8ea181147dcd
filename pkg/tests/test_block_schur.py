import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlhlab.block_schur import (BlockOperator, BlockSplit, TestFamily, block_inverse, default_test_family,
                                geometric_weights, inverse_block_operator, inversion_duality, is_member,
                                random_coercive_matrix, random_split, schur_data, schur_distance,
                                schur_factorization_residual, tau_bound, three_block_expansion)
from nlhlab.errors import MembershipError, StructuralError
from nlhlab.operator_core import HilbertSpace, Subspace

TWO = np.array([[2.0, 1.0], [1.0, 2.0]])


def coord(mat, d0):
    mat = np.asarray(mat, dtype=float)
    return BlockOperator.from_operator(mat, BlockSplit.from_dims(d0, mat.shape[0] - d0))


def test_schur_data_identity():
    d = schur_data(coord(np.eye(5), 2))
    np.testing.assert_allclose(d.inv00, np.eye(2))
    np.testing.assert_allclose(d.m01, 0)
    np.testing.assert_allclose(d.m10, 0)
    np.testing.assert_allclose(d.schur, np.eye(3))


def test_schur_data_two_by_two():
    d = schur_data(coord(TWO, 1))
    assert np.allclose([d.inv00[0, 0], d.m01[0, 0], d.m10[0, 0], d.schur[0, 0]], [0.5, 0.5, 0.5, 1.5])


def test_schur_data_block_diagonal(rng):
    a00 = random_coercive_matrix(3, rng)
    a11 = random_coercive_matrix(4, rng)
    a = BlockOperator.from_blocks(a00, np.zeros((3, 4)), np.zeros((4, 3)), a11)
    d = schur_data(a)
    np.testing.assert_allclose(d.inv00, np.linalg.inv(a00), atol=1e-14)
    np.testing.assert_allclose(d.schur, a11)
    assert not d.m01.any() and not d.m10.any()


def test_singular_a00_is_not_member():
    a = coord([[0.0, 1.0], [1.0, 0.0]], 1)
    with pytest.raises(MembershipError):
        schur_data(a)
    assert not is_member(a)


def test_singular_operator_is_not_member():
    assert not is_member(coord([[1.0, 1.0], [1.0, 1.0]], 1))


def test_block_inverse_examples(rng):
    np.testing.assert_allclose(block_inverse(coord(np.eye(4), 2)).dense(), np.eye(4))
    np.testing.assert_allclose(block_inverse(coord(TWO, 1)).dense(), np.array([[2, -1], [-1, 2]]) / 3,
                               atol=1e-15)
    split = random_split(20, 8, rng)
    mat = random_coercive_matrix(20, rng)
    inv = block_inverse(BlockOperator.from_operator(mat, split)).dense()
    np.testing.assert_allclose(inv, np.linalg.inv(mat), atol=1e-9)


def test_reassembly_reproduces_operator(rng):
    space = HilbertSpace(9, rng.random(9) + 0.5)
    split = BlockSplit.from_subspace(Subspace.span(space, rng.standard_normal((9, 4))))
    mat = rng.standard_normal((9, 9))
    a = BlockOperator.from_operator(mat, split)
    np.testing.assert_allclose(a.assemble(), mat, atol=1e-12)


def test_inversion_duality_examples(rng):
    d = inversion_duality(coord(np.eye(3), 1))
    assert max(v for k, v in d.items() if k != "scale") == 0
    d = inversion_duality(coord(TWO, 1))
    assert max(v for k, v in d.items() if k != "scale") <= 1e-12
    split = random_split(50, 20, rng)
    d = inversion_duality(BlockOperator.from_operator(random_coercive_matrix(50, rng), split))
    assert max(v for k, v in d.items() if k != "scale") <= 1e-9


def test_tau_bound_examples():
    assert np.isclose(tau_bound(coord(np.eye(3), 1)), 1.0)
    assert np.isclose(tau_bound(coord(TWO, 1)), 1.5)
    assert np.isclose(tau_bound(coord(3.0 * np.eye(4), 2)), 3.0)


def test_schur_distance_examples():
    fam = TestFamily(HilbertSpace(4), np.eye(4), geometric_weights(4))
    a = coord(np.eye(4), 2)
    assert schur_distance(a, a, fam) == 0
    assert schur_distance(a, coord(2 * np.eye(4), 2), fam) > 0


def test_schur_distance_split_mismatch():
    fam = TestFamily(HilbertSpace(4), np.eye(4))
    with pytest.raises(StructuralError):
        schur_distance(coord(np.eye(4), 1), coord(np.eye(4), 2), fam)


def test_schur_distance_oscillating_diagonals_decrease():
    N = 64
    space = HilbertSpace(N)
    fam = default_test_family(space, n_modes=6, n_random=4, seed=3)
    split = BlockSplit.from_dims(N // 2, N // 2)
    limit = BlockOperator.from_operator(np.eye(N) * 1.0, split)
    dists = []
    for m in range(1, 5):
        block = N >> (m + 1)
        osc = np.where((np.arange(N) // block) % 2 == 0, 1.5, 0.5)
        dists.append(schur_distance(BlockOperator.from_operator(np.diag(osc), split), limit, fam))
    assert all(b < a for a, b in zip(dists, dists[1:]))


def test_test_family_validation():
    with pytest.raises(StructuralError):
        TestFamily(HilbertSpace(2), np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(StructuralError):
        TestFamily(HilbertSpace(2), np.eye(2), np.array([0.6, 0.6]))
    with pytest.raises(StructuralError):
        TestFamily(HilbertSpace(2), np.eye(2), np.array([0.5]))
    fam = TestFamily.from_vectors(HilbertSpace(3), np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))
    assert fam.size == 2 and fam.weights.sum() <= 1


def test_default_test_family_is_orthonormal_and_seeded():
    space = HilbertSpace(40, np.full(40, 0.25))
    a = default_test_family(space, seed=5)
    b = default_test_family(space, seed=5)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert a.size == 24
    np.testing.assert_allclose(space.inner(a.vectors, a.vectors), np.eye(24), atol=1e-12)
    np.testing.assert_allclose(a.weights, 0.5 ** np.arange(1, 25))


def test_three_block_examples():
    rep = three_block_expansion(np.eye(6), (2, 2, 2))
    assert rep.max_residual == 0
    rep = three_block_expansion(np.diag([2.0, 3.0, 4.0]), (1, 1, 1))
    np.testing.assert_allclose(rep.coarse_schur, [[4.0]])
    assert rep.max_residual == 0


def test_three_block_random_dims(rng):
    mat = random_coercive_matrix(30, rng)
    assert three_block_expansion(mat, (10, 5, 15)).max_residual <= 1e-9


def test_three_block_subspace_split(rng):
    space = HilbertSpace(12)
    q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    subs = [Subspace(space, q[:, :3]), Subspace(space, q[:, 3:5]), Subspace(space, q[:, 5:])]
    assert three_block_expansion(random_coercive_matrix(12, rng), subs).max_residual <= 1e-9


def test_three_block_errors(rng):
    with pytest.raises(StructuralError):
        three_block_expansion(np.eye(5), (2, 2, 2))
    with pytest.raises(StructuralError):
        three_block_expansion(np.eye(4), (0, 2, 2))
    with pytest.raises(MembershipError):
        three_block_expansion(np.array([[1.0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]]), (1, 1, 1))


def test_interleaved_products_stay_exact(rng):
    """Expansion residuals stay at roundoff along an oscillating sequence."""
    base = random_coercive_matrix(24, rng)
    for n in range(1, 9):
        osc = np.diag(1.0 + 0.5 * np.cos(np.pi * n * np.arange(24) / 4))
        assert three_block_expansion(base @ osc + osc, (8, 4, 12)).max_residual <= 1e-9


instances = st.tuples(st.integers(2, 30), st.floats(0.05, 0.95), st.integers(0, 2 ** 31 - 1),
                      st.sampled_from([0.1, 1.0]), st.booleans())


@settings(max_examples=40, deadline=None)
@given(instances)
def test_coercive_operators_are_members_with_exact_identities(args):
    dim, frac, seed, alpha, complex_ = args
    r = np.random.default_rng(seed)
    d0 = min(max(1, int(frac * dim)), dim - 1)
    split = random_split(dim, d0, r)
    mat = random_coercive_matrix(dim, r, alpha=alpha, complex_=complex_)
    a = BlockOperator.from_operator(mat, split)
    assert is_member(a)
    assert schur_factorization_residual(a) <= 1e-10
    assert np.linalg.norm(block_inverse(a).dense() @ mat - np.eye(dim), 2) <= 1e-10 * max(1, np.linalg.cond(mat))
    d = inversion_duality(a)
    assert max(v for k, v in d.items() if k != "scale") <= 1e-9 * d["scale"]
    # a^-1 in the swapped split is a member and carries the same tau bound
    inv = inverse_block_operator(a)
    assert is_member(inv)
    assert abs(tau_bound(a) - tau_bound(inv)) <= 1e-9 * tau_bound(a)
