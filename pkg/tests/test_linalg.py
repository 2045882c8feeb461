import math

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from friedrichs_mor.exceptions import NotPositiveDefinite, SpaceMismatch
from friedrichs_mor.linalg import (
    GaussianStream,
    factorize,
    gaussian_vector,
    generalized_svd,
    gram_orthonormalize,
    orthonormalize_against,
    smallest_eigenvalue,
)


def random_spd(rng, n, density=None):
    if density is None:
        b = rng.standard_normal((n, n))
        return b @ b.T + n * np.eye(n)
    b = sps.random(n, n, density=density, random_state=rng)
    return (b @ b.T + sps.identity(n)).tocsc()


def test_factorize_identity():
    x = factorize(np.eye(5)).solve(np.eye(5)[1])
    np.testing.assert_array_equal(x, np.eye(5)[1])


def test_factorize_laplacian():
    a = sps.diags([-np.ones(2), 2 * np.ones(3), -np.ones(2)], [-1, 0, 1])
    np.testing.assert_allclose(factorize(a).solve(np.ones(3)), [1.5, 2.0, 1.5], rtol=1e-14)


def test_factorize_negative_pivot():
    with pytest.raises(NotPositiveDefinite):
        factorize(np.diag([1.0, -2.0, 3.0]))
    # positive diagonal but indefinite: second pivot is 1 - 4 = -3
    with pytest.raises(NotPositiveDefinite):
        factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_factorize_non_square():
    with pytest.raises(SpaceMismatch):
        factorize(np.ones((2, 3)))


@pytest.mark.parametrize("n", [10, 200, 2000])
def test_solve_multiply_identity(rng, n):
    a = random_spd(rng, n, density=min(1.0, 5.0 / n))
    x = rng.standard_normal(n)
    y = factorize(a).solve(a @ x)
    assert np.linalg.norm(y - x) <= 1e-10 * np.linalg.norm(x)


def test_solve_many_rhs(rng):
    a = random_spd(rng, 30)
    x = rng.standard_normal((30, 7))
    np.testing.assert_allclose(factorize(a).solve(a @ x), x, rtol=1e-10, atol=1e-12)


def test_orthonormalize_examples():
    e = np.eye(3)
    basis, dropped = gram_orthonormalize(e[:, :2], np.eye(3))
    np.testing.assert_array_equal(basis, e[:, :2])
    assert dropped == 0
    basis, dropped = gram_orthonormalize(np.column_stack([e[:, 0], e[:, 0]]), np.eye(3))
    assert basis.shape == (3, 1) and dropped == 1
    assert orthonormalize_against(np.zeros(3), basis, np.eye(3)) is None


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 10), st.integers(10, 30))
def test_orthonormalize_random_spd(seed, k, n):
    r = np.random.default_rng(seed)
    gram = random_spd(r, n)
    vectors = r.standard_normal((n, k))
    basis, dropped = gram_orthonormalize(vectors, gram)
    assert dropped == 0
    assert np.abs(basis.T @ gram @ basis - np.eye(k)).max() <= 1e-10
    # same span: G-projection of each input reproduces it
    proj = basis @ (basis.T @ (gram @ vectors))
    assert np.linalg.norm(proj - vectors) <= 1e-9 * np.linalg.norm(vectors)


def test_orthonormalize_drops_dependent(rng):
    gram = random_spd(rng, 12)
    v = rng.standard_normal((12, 3))
    vectors = np.column_stack([v, v[:, 0] - 2 * v[:, 2]])
    basis, dropped = gram_orthonormalize(vectors, gram)
    assert basis.shape[1] == 3 and dropped == 1


def test_gsvd_identity():
    sigmas, left = generalized_svd(np.eye(3), np.eye(3), np.eye(3))
    np.testing.assert_allclose(sigmas, 1.0)


def test_gsvd_diagonal():
    sigmas, _ = generalized_svd(np.diag([3.0, 2.0, 1.0]), np.eye(3), np.eye(3))
    np.testing.assert_allclose(sigmas, [3, 2, 1])


def test_gsvd_weighted_range():
    sigmas, left = generalized_svd(np.eye(2), np.eye(2), sps.diags([4.0, 1.0]))
    np.testing.assert_allclose(sigmas, [2, 1])
    np.testing.assert_allclose(left.T @ np.diag([4.0, 1.0]) @ left, np.eye(2), atol=1e-14)


def test_gsvd_dimension_mismatch():
    with pytest.raises(SpaceMismatch):
        generalized_svd(np.ones((3, 2)), np.eye(3), np.eye(3))


def test_gsvd_not_spd():
    with pytest.raises(NotPositiveDefinite):
        generalized_svd(np.eye(2), np.diag([1.0, -1.0]), np.eye(2))


def test_gsvd_brute_force(rng):
    m, n = 8, 3
    tmat = rng.standard_normal((m, n))
    gs = random_spd(rng, n)
    gr = random_spd(rng, m)
    sigmas, left = generalized_svd(tmat, gs, gr)
    x = rng.standard_normal((n, 10_000))
    tx = tmat @ x
    ratios = np.sqrt(np.einsum("ij,ij->j", tx, gr @ tx) / np.einsum("ij,ij->j", x, gs @ x))
    assert ratios.max() <= sigmas[0] * (1 + 1e-12)
    assert ratios.max() >= 0.99 * sigmas[0]
    assert np.all(np.diff(sigmas) <= 0)
    np.testing.assert_allclose(left.T @ gr @ left, np.eye(n), atol=1e-12)


def test_gsvd_against_scipy_eigh(rng):
    # sigma^2 are the generalized eigenvalues of (T^T Gr T, Gs)
    import scipy.linalg

    tmat = rng.standard_normal((6, 4))
    gs, gr = random_spd(rng, 4), random_spd(rng, 6)
    sigmas, _ = generalized_svd(tmat, gs, gr)
    eig = scipy.linalg.eigh(tmat.T @ gr @ tmat, gs, eigvals_only=True)[::-1]
    np.testing.assert_allclose(sigmas**2, eig, rtol=1e-10)


@pytest.mark.parametrize("n", [40, 300])
def test_smallest_eigenvalue(rng, n):
    # clustered spectrum near the bottom
    a = random_spd(rng, n)
    exact = np.linalg.eigvalsh(a)[0]
    assert smallest_eigenvalue(sps.csr_matrix(a)) == pytest.approx(exact, rel=1e-2)


def test_smallest_eigenvalue_boundary_mass():
    from friedrichs_mor.grid import Rect, build_grid
    from friedrichs_mor.spaces import BoundarySpace

    h = 1 / 30
    mass = BoundarySpace(build_grid(Rect(-1, -1, 2, 2), h)).mass_matrix()
    # circulant h/6 [1 4 1]: smallest eigenvalue h/3 for the alternating vector
    assert smallest_eigenvalue(mass) == pytest.approx(h / 3, rel=1e-2)


def test_gaussian_determinism():
    a = GaussianStream(5, 1).normal(101)
    b = GaussianStream(5, 1).normal(101)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, GaussianStream(5, 2).normal(101))
    assert not np.array_equal(a, GaussianStream(6, 1).normal(101))


def test_gaussian_moments():
    n = 10**5
    z = gaussian_vector(n, GaussianStream(1))
    assert abs(z.mean()) <= 4 / math.sqrt(n)
    assert abs(z.var() - 1) <= 0.05


def test_gaussian_empty():
    assert GaussianStream(1).normal(0).shape == (0,)
    with pytest.raises(ValueError):
        GaussianStream(1).normal(-1)


def test_gaussian_documented_algorithm():
    # scalar re-implementation of the documented transform
    bits = np.random.Philox(np.random.SeedSequence([42, 3]))
    expected = []
    for _ in range(3):
        a, b = (int(w) for w in bits.random_raw(2))
        u1 = ((a >> 11) + 1) * 2.0**-53
        u2 = (b >> 11) * 2.0**-53
        r = math.sqrt(-2 * math.log(u1))
        expected += [r * math.cos(2 * math.pi * u2), r * math.sin(2 * math.pi * u2)]
    got = GaussianStream(42, 3).normal(5)
    np.testing.assert_allclose(got, expected[:5], rtol=1e-15, atol=1e-15)
