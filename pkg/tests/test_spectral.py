import math
import pickle

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stocheuler.errors import GridMismatchError
from stocheuler.spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    dealias_two_thirds,
    divergence,
    evaluate_at_points,
    gradient,
    inner_product,
    laplacian,
    lp_norm_physical,
    partial_derivative,
    project_zero_mean,
    random_field,
    sobolev_norm,
    to_physical,
    to_spectral,
)


def samples(grid, fn):
    x1, x2 = grid.points
    return fn(x1, x2)


# -- grid ---------------------------------------------------------------------


def test_grid_wavenumber_sets():
    g = Grid(16)
    assert g.max_wavenumber == 7
    assert g.dealias_cutoff == 4  # floor(2 * 7 / 3)
    assert g.retained_mask.sum() == 15 * 15
    assert g.dealias_mask.sum() == 9 * 9
    assert g.index(-1, 3) == (15, 3)


@pytest.mark.parametrize("n", [3, 5, 2, 0, -4])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        Grid(n)


def test_grid_rejects_non_integer():
    with pytest.raises(TypeError):
        Grid(16.0)


def test_index_outside_retained_set():
    with pytest.raises(ValueError):
        Grid(16).index(8, 0)


# -- transforms ------------------------------------------------------------------


def test_cos_mode_coefficients(grid16):
    f = to_spectral(samples(grid16, lambda x1, x2: np.cos(2 * x1 + 3 * x2)), grid16)
    assert f.coeff(2, 3) == pytest.approx(0.5, abs=1e-15)
    assert f.coeff(-2, -3) == pytest.approx(0.5, abs=1e-15)
    others = f.coeffs.copy()
    others[grid16.index(2, 3)] = 0
    others[grid16.index(-2, -3)] = 0
    assert np.abs(others).max() < 1e-15


def test_nyquist_content_dropped(grid16):
    f = to_spectral(samples(grid16, lambda x1, x2: np.cos(8 * x1)), grid16)
    assert np.abs(f.coeffs).max() == 0.0


def test_to_spectral_validates_input(grid16):
    with pytest.raises(TypeError):
        to_spectral(np.zeros((16, 16), dtype=complex), grid16)
    with pytest.raises(GridMismatchError):
        to_spectral(np.zeros((8, 8)), grid16)


@given(seed=st.integers(0, 2**32 - 1), kmax=st.integers(1, 7))
def test_round_trip_band_limited(seed, kmax):
    g = Grid(16)
    f = random_field(g, np.random.default_rng(seed), kmax=kmax)
    back = to_spectral(to_physical(f), g)
    assert np.abs(back.coeffs - f.coeffs).max() < 1e-14


@given(seed=st.integers(0, 2**32 - 1))
def test_parseval_matches_quadrature(seed):
    g = Grid(32)
    r = np.random.default_rng(seed)
    a, b = random_field(g, r, kmax=15), random_field(g, r, kmax=15)
    quad = float(np.mean(to_physical(a) * to_physical(b)))
    assert inner_product(a, b) == pytest.approx(quad, abs=1e-14)


def test_random_field_is_real_and_normalized(grid32, rng):
    f = random_field(grid32, rng, kmax=5, slope=1.0, l2_norm=2.0)
    assert f.is_hermitian()
    assert f.mean == 0.0
    assert math.sqrt(inner_product(f, f)) == pytest.approx(2.0, rel=1e-14)
    assert np.all(np.abs(f.coeffs[grid32.kmax_abs > 5]) == 0)


def test_random_field_independent_of_grid():
    a = random_field(Grid(16), np.random.default_rng(3), kmax=4)
    b = random_field(Grid(64), np.random.default_rng(3), kmax=4)
    assert np.array_equal(a.regrid(Grid(64)).coeffs, b.coeffs)


def test_random_field_kmax_too_large(grid16, rng):
    with pytest.raises(ValueError):
        random_field(grid16, rng, kmax=8)


# -- calculus --------------------------------------------------------------------


def test_derivatives_of_trig_mode(grid16):
    f = to_spectral(samples(grid16, lambda x1, x2: np.sin(2 * x1 - x2)), grid16)
    d1 = to_physical(partial_derivative(f, 1))
    d2 = to_physical(partial_derivative(f, 2))
    lap = to_physical(laplacian(f))
    np.testing.assert_allclose(d1, samples(grid16, lambda x1, x2: 2 * np.cos(2 * x1 - x2)), atol=1e-13)
    np.testing.assert_allclose(d2, samples(grid16, lambda x1, x2: -np.cos(2 * x1 - x2)), atol=1e-13)
    np.testing.assert_allclose(lap, samples(grid16, lambda x1, x2: -5 * np.sin(2 * x1 - x2)), atol=1e-13)


def test_partial_derivative_axis_validated(grid16):
    with pytest.raises(ValueError):
        partial_derivative(SpectralField.zeros(grid16), 0)


def test_divergence_of_gradient_is_laplacian(grid16, rng):
    f = random_field(grid16, rng, kmax=6)
    np.testing.assert_allclose(divergence(gradient(f)).coeffs, laplacian(f).coeffs, atol=1e-14)


# -- norms -----------------------------------------------------------------------


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0, 2.0, 2.5])
def test_sobolev_norm_of_unit_mode(grid16, s):
    # cos x1 has coefficients 1/2 at k = +-(1, 0) and |k| = 1
    f = to_spectral(samples(grid16, lambda x1, x2: np.cos(x1)), grid16)
    assert sobolev_norm(f, s) == pytest.approx(1.0, abs=1e-15)


def test_sobolev_norm_weights(grid16):
    # cos(2 x1 + x2): |k|^2 = 5, sum |c|^2 = 1/2
    f = to_spectral(samples(grid16, lambda x1, x2: np.cos(2 * x1 + x2)), grid16)
    for s in (1.0, 2.0, 1.5):
        assert sobolev_norm(f, s) == pytest.approx(math.sqrt(0.5 * (1 + 5**s)), rel=1e-14)


def test_sobolev_norm_zero_mode_and_negative_index(grid16):
    c = SpectralField.from_modes(grid16, {(0, 0): 3.0})
    assert sobolev_norm(c, 0) == pytest.approx(3 * math.sqrt(2))
    assert sobolev_norm(c, 1) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        sobolev_norm(c, -1)


def test_sobolev_norm_vector(grid16):
    v = SpectralVectorField(
        to_spectral(samples(grid16, lambda x1, x2: np.cos(x1)), grid16),
        to_spectral(samples(grid16, lambda x1, x2: np.sin(x2)), grid16),
    )
    assert sobolev_norm(v, 2) == pytest.approx(math.sqrt(2), rel=1e-14)


def test_lp_norms(grid32):
    f = to_spectral(samples(grid32, lambda x1, x2: np.cos(x1)), grid32)
    assert lp_norm_physical(f, 2) == pytest.approx(math.sqrt(0.5), rel=1e-14)
    # mean of cos^4 is 3/8
    assert lp_norm_physical(f, 4) == pytest.approx((3 / 8) ** 0.25, rel=1e-14)
    assert lp_norm_physical(f, math.inf) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        lp_norm_physical(f, 0)


# -- projections and evaluation --------------------------------------------------


def test_projections(grid16, rng):
    f = random_field(grid16, rng, kmax=7) + SpectralField.from_modes(grid16, {(0, 0): 1.5})
    assert project_zero_mean(f).mean == 0.0
    d = dealias_two_thirds(f)
    assert np.all(d.coeffs[grid16.kmax_abs > 4] == 0)
    assert np.array_equal(d.coeffs[grid16.dealias_mask], f.coeffs[grid16.dealias_mask])


def test_evaluate_at_points_matches_grid(grid16, rng):
    f = random_field(grid16, rng, kmax=7)
    x1, x2 = grid16.points
    pts = np.column_stack([x1.ravel(), x2.ravel()])
    np.testing.assert_allclose(evaluate_at_points(f, pts), to_physical(f).ravel(), atol=1e-12)


def test_evaluate_off_grid(grid16):
    f = to_spectral(samples(grid16, lambda x1, x2: np.sin(x1) * np.cos(2 * x2)), grid16)
    p = np.array([[0.3, 1.1], [5.0, 2.2]])
    np.testing.assert_allclose(evaluate_at_points(f, p), np.sin(p[:, 0]) * np.cos(2 * p[:, 1]), atol=1e-14)
    assert np.array_equal(evaluate_at_points(SpectralField.zeros(grid16), p), np.zeros(2))


# -- field objects ---------------------------------------------------------------


def test_field_immutability(grid16):
    f = SpectralField.zeros(grid16)
    with pytest.raises(AttributeError):
        f.coeffs = None
    with pytest.raises(ValueError):
        f.coeffs[0, 0] = 1.0


def test_from_modes_is_real(grid16):
    f = SpectralField.from_modes(grid16, {(1, 2): 0.5 - 0.25j})
    np.testing.assert_allclose(
        to_physical(f), samples(grid16, lambda x1, x2: np.cos(x1 + 2 * x2) + 0.5 * np.sin(x1 + 2 * x2)), atol=1e-14
    )


def test_regrid_embeds_and_truncates(rng):
    small, big = Grid(16), Grid(32)
    f = random_field(small, rng, kmax=7)
    up = f.regrid(big)
    np.testing.assert_allclose(evaluate_at_points(up, [[0.4, 0.9]]), evaluate_at_points(f, [[0.4, 0.9]]), atol=1e-14)
    assert np.array_equal(up.regrid(small).coeffs, f.coeffs)


def test_arithmetic_and_grid_mismatch(grid16, grid32):
    a = SpectralField.from_modes(grid16, {(1, 0): 1.0})
    assert np.array_equal((a + a).coeffs, (2 * a).coeffs)
    assert np.array_equal((a - a).coeffs, np.zeros((16, 16)))
    assert np.array_equal((a / 2).coeffs, (0.5 * a).coeffs)
    with pytest.raises(GridMismatchError):
        a + SpectralField.zeros(grid32)
    with pytest.raises(GridMismatchError):
        SpectralVectorField(a, SpectralField.zeros(grid32))


def test_vector_divergence_defect(grid16):
    x1, x2 = grid16.points
    free = SpectralVectorField.from_physical(grid16, [np.sin(x2), np.cos(x1)])
    assert free.is_divergence_free()
    notfree = SpectralVectorField.from_physical(grid16, [np.sin(x1), np.zeros_like(x1)])
    assert notfree.divergence_defect() == pytest.approx(1.0)
    assert SpectralVectorField.constant(grid16, (1.0, -2.0)).is_divergence_free()


def test_fields_pickle(grid16, rng):
    f = random_field(grid16, rng, kmax=5)
    back = pickle.loads(pickle.dumps(f))
    assert back.grid == f.grid and np.array_equal(back.coeffs, f.coeffs)
    v = SpectralVectorField(f, 2 * f)
    assert np.array_equal(pickle.loads(pickle.dumps(v)).stacked(), v.stacked())
