import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from friedrichs_mor.assembly import (
    ChannelPattern,
    CoefficientField,
    OperatorMatrices,
    assemble_fosls,
    assemble_fosls_load,
    assemble_mass,
    assemble_weighted_gram,
    check_friedrichs_positivity,
    friedrichs_matrices,
    graph_norm,
    max_coefficient_matrix_norm,
    sample_coefficients,
)
from friedrichs_mor.exceptions import NegativeDefinite, SpaceMismatch
from friedrichs_mor.grid import Rect, build_grid
from friedrichs_mor.harness import CHANNEL_CENTERS, channel_geometry
from friedrichs_mor.spaces import MixedSpace

UNIT = Rect(0, 0, 1, 1)
OMEGA_STAR = Rect(-1, -1, 2, 2)


def random_field(grid, rng, convection=(0.7, -1.3)):
    d = rng.uniform(0.1, 10, size=(grid.n_cells, 2))
    return CoefficientField(d, np.asarray(convection), rng.uniform(0, 3, grid.n_cells))


def pointwise_quadratic_forms(grid, coeff, x, n_gauss=4):
    """(||A x||^2, ||x||_w^2) by point evaluation of the discrete functions."""
    space = MixedSpace.on(grid)
    f = space.element(x)
    pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    pts = 0.5 * (pts + 1)
    wts = 0.5 * wts
    residual = weighted = 0.0
    cells = np.arange(grid.n_cells)
    dinv = coeff.inverse_diffusion
    for a, wa in zip(pts, wts):
        for b, wb in zip(pts, wts):
            local = np.tile([a, b], (grid.n_cells, 1))
            sigma, div = space.flux.evaluate(cells, local, f.flux)
            u, grad = space.scalar.evaluate(cells, local, f.scalar)
            first = dinv * sigma + grad
            second = div + grad @ coeff.convection + coeff.reaction * u
            w = wa * wb * grid.h**2
            residual += w * np.sum(np.sum(first**2, axis=1) + second**2)
            weighted += w * np.sum(np.sum((dinv * sigma) ** 2, axis=1) + u**2)
    return residual, weighted


def test_sample_pure_diffusion():
    grid = build_grid(OMEGA_STAR, 0.25)
    coeff = sample_coefficients(grid)
    assert np.all(coeff.diffusion == 1) and np.all(coeff.reaction == 0)
    np.testing.assert_array_equal(coeff.convection, [0, 0])


def test_sample_full_cdr():
    grid = build_grid(OMEGA_STAR, 1 / 30)
    pattern = channel_geometry("parallel")
    coeff = sample_coefficients(grid, pattern, (1, 1), pattern.with_values(0.0, 1.0))
    inside = pattern.mask(grid.cell_centers)
    assert inside.any() and not inside.all()
    assert np.all(coeff.diffusion[inside] == 100) and np.all(coeff.diffusion[~inside] == 1)
    assert np.all(coeff.reaction[inside] == 0) and np.all(coeff.reaction[~inside] == 1)
    np.testing.assert_array_equal(coeff.convection, [1, 1])


def test_six_horizontal_bands():
    grid = build_grid(OMEGA_STAR, 1 / 30)
    pattern = channel_geometry("parallel")
    inside_rows = pattern.mask(grid.cell_centers).reshape(grid.ny, grid.nx)
    assert np.all(inside_rows == inside_rows[:, :1])  # bands span the full width
    rows = inside_rows[:, 0].astype(int)
    n_bands = np.count_nonzero(np.diff(np.concatenate([[0], rows])) == 1)
    assert n_bands == 6
    assert pattern.centers == CHANNEL_CENTERS and pattern.half_width == 0.04


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelPattern({"diagonal"}, (0.0,), 0.1, 2, 1)
    with pytest.raises(ValueError):
        ChannelPattern({"horizontal"}, (0.0,), 0.0, 2, 1)
    grid = build_grid(UNIT, 0.25)
    with pytest.raises(ValueError):
        sample_coefficients(grid, ChannelPattern({"horizontal"}, (0.99,), 0.05, 2, 1))


def test_coefficient_validation():
    with pytest.raises(ValueError):
        CoefficientField(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        CoefficientField(np.ones((2, 2)), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        CoefficientField(np.ones((2, 2)), np.zeros(2), np.array([0.0, np.nan]))


def test_positivity_full_cdr():
    grid = build_grid(OMEGA_STAR, 1 / 30)
    pattern = channel_geometry("parallel")
    report = check_friedrichs_positivity(sample_coefficients(grid, pattern, (1, 1), pattern.with_values(0.0, 1.0)))
    assert report.diffusion_part == pytest.approx(2e-2)
    assert report.reaction_part == 0.0
    assert report.minimum == 0.0 and report.semi_definite


def test_positivity_pure_diffusion():
    report = check_friedrichs_positivity(CoefficientField.constant(build_grid(UNIT, 0.5)))
    assert report.diffusion_part == pytest.approx(2.0)
    assert report.reaction_part == 0.0
    assert report.semi_definite


def test_positivity_strict():
    report = check_friedrichs_positivity(CoefficientField.constant(build_grid(UNIT, 0.5), 4.0, (1, 2), 3.0))
    assert report.minimum == pytest.approx(0.5)
    assert report.epsilon == pytest.approx(0.25)
    assert not report.semi_definite


def test_positivity_negative_reaction():
    grid = build_grid(UNIT, 0.5)
    reaction = np.zeros(grid.n_cells)
    reaction[2] = -1
    with pytest.raises(NegativeDefinite):
        check_friedrichs_positivity(CoefficientField(np.ones((grid.n_cells, 2)), np.zeros(2), reaction))


@pytest.mark.parametrize("b, expected", [((0, 0), 1.0), ((1, 1), 2.0), ((3, 0), 4.0)])
def test_max_coefficient_matrix_norm(b, expected):
    coeff = CoefficientField.constant(build_grid(UNIT, 0.5), convection=b)
    assert max_coefficient_matrix_norm(coeff) == expected


def test_friedrichs_symmetry():
    coeff = CoefficientField.constant(build_grid(UNIT, 0.5), convection=(2.5, -1.0))
    _, a1, a2 = friedrichs_matrices(coeff)
    np.testing.assert_array_equal(a1, a1.T)
    np.testing.assert_array_equal(a2, a2.T)
    np.testing.assert_array_equal(a1, [[0, 0, 1], [0, 0, 0], [1, 0, 2.5]])
    np.testing.assert_array_equal(a2, [[0, 0, 0], [0, 0, 1], [0, 1, -1.0]])


def test_fosls_kernel_affine():
    grid = build_grid(UNIT, 0.125)
    space = MixedSpace.on(grid)
    k = assemble_fosls(grid, CoefficientField.constant(grid))
    f = space.interpolate(lambda x, y: (-1 + 0 * x, 0 * y), lambda x, y: x)
    scale = abs(k).max()
    np.testing.assert_allclose(k @ f.vector, 0.0, atol=1e-12 * scale)
    np.testing.assert_array_equal(k @ np.zeros(space.n_dofs), 0.0)


def test_fosls_symmetric_random(rng):
    grid = build_grid(Rect(0, 0, 1.5, 1), 0.25)
    k = assemble_fosls(grid, random_field(grid, rng))
    assert abs(k - k.T).max() <= 1e-12 * abs(k).max()


def test_fosls_matches_pointwise_functional(rng):
    grid = build_grid(Rect(0, 0, 1, 0.75), 0.25)
    coeff = random_field(grid, rng)
    x = rng.standard_normal(MixedSpace.on(grid).n_dofs)
    k = assemble_fosls(grid, coeff)
    g = assemble_weighted_gram(grid, coeff)
    residual, weighted = pointwise_quadratic_forms(grid, coeff, x)
    assert x @ k @ x == pytest.approx(residual, rel=1e-12)
    assert x @ g @ x == pytest.approx(weighted, rel=1e-12)


def test_quadrature_exact(rng):
    grid = build_grid(Rect(0, 0, 1, 1), 0.25)
    coeff = random_field(grid, rng)
    k2 = assemble_fosls(grid, coeff, n_gauss=2)
    k3 = assemble_fosls(grid, coeff, n_gauss=3)
    assert abs(k2 - k3).max() <= 1e-12 * abs(k2).max()
    g2 = assemble_weighted_gram(grid, coeff, n_gauss=2)
    g3 = assemble_weighted_gram(grid, coeff, n_gauss=3)
    assert abs(g2 - g3).max() <= 1e-12 * abs(g2).max()


def test_fosls_psd_and_reduced_pd(rng):
    grid = build_grid(UNIT, 0.25)  # 4x4 cells
    for coeff in (CoefficientField.constant(grid), random_field(grid, rng)):
        k = assemble_fosls(grid, coeff).toarray()
        eig = np.linalg.eigvalsh(k)
        assert eig.min() >= -1e-12 * eig.max()
        space = MixedSpace.on(grid)
        free = np.setdiff1d(np.arange(space.n_dofs), space.scalar_offset + grid.boundary_nodes)
        reduced = np.linalg.eigvalsh(k[np.ix_(free, free)])
        assert reduced.min() > 1e-8 * reduced.max()


def test_weighted_norm_examples():
    grid = build_grid(UNIT, 0.25)
    space = MixedSpace.on(grid)
    g = assemble_weighted_gram(grid, CoefficientField.constant(grid, diffusion=2.0))
    x = space.interpolate(lambda x, y: (2 + 0 * x, 0 * y), lambda x, y: 0 * x).vector
    assert x @ g @ x == pytest.approx(1.0)
    x = space.interpolate(lambda x, y: (0 * x, 0 * y), lambda x, y: 1 + 0 * x).vector
    assert x @ g @ x == pytest.approx(1.0)


def test_identity_weight_gives_mass(rng):
    grid = build_grid(UNIT, 0.25)
    g = assemble_weighted_gram(grid, CoefficientField.constant(grid))
    m = assemble_mass(grid)
    assert abs(g - m).max() <= 1e-12
    assert abs(g - g.T).max() == 0.0
    assert np.linalg.eigvalsh(g.toarray()).min() > 0


def test_graph_norm_examples(rng):
    grid = build_grid(UNIT, 0.125)
    mats = OperatorMatrices.assemble(grid, CoefficientField.constant(grid))
    space = mats.space
    assert graph_norm(mats, space.zeros()) == 0.0
    f = space.interpolate(lambda x, y: (-1 + 0 * x, 0 * y), lambda x, y: x)
    assert graph_norm(mats, f) == pytest.approx(np.sqrt(4 / 3), rel=1e-12)
    for _ in range(5):
        f = space.element(rng.standard_normal(space.n_dofs))
        assert graph_norm(mats, f) ** 2 >= f.vector @ mats.mass @ f.vector
    with pytest.raises(SpaceMismatch):
        graph_norm(mats, MixedSpace.on(build_grid(UNIT, 0.5)).zeros())


@settings(max_examples=15, deadline=None)
@given(st.floats(-4, 4), st.floats(0, 3), st.integers(0, 2**31))
def test_load_matches_pointwise(f2, c, seed):
    r = np.random.default_rng(seed)
    grid = build_grid(UNIT, 0.25)
    coeff = CoefficientField.constant(grid, diffusion=1.5, convection=(0.5, -1.0), reaction=c)
    load = assemble_fosls_load(grid, coeff, f2)
    space = MixedSpace.on(grid)
    v = space.element(r.standard_normal(space.n_dofs))
    # (f, A v) with f = (0, f2): integrate f2 * (div tau + b.grad v + c v)
    pts, wts = np.polynomial.legendre.leggauss(3)
    pts, wts = 0.5 * (pts + 1), 0.5 * wts
    cells = np.arange(grid.n_cells)
    total = 0.0
    for a, wa in zip(pts, wts):
        for b, wb in zip(pts, wts):
            local = np.tile([a, b], (grid.n_cells, 1))
            _, div = space.flux.evaluate(cells, local, v.flux)
            u, grad = space.scalar.evaluate(cells, local, v.scalar)
            total += wa * wb * grid.h**2 * np.sum(f2 * (div + grad @ coeff.convection + c * u))
    assert load @ v.vector == pytest.approx(total, rel=1e-11, abs=1e-11)
