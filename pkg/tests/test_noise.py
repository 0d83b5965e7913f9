import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stocheuler.errors import GridMismatchError
from stocheuler.noise import (
    NoiseFamily,
    advect,
    dual_defect,
    ito_correction,
    lie_squared,
    make_noise_family,
    null_identity_defect,
    representative_modes,
    summability,
    sup_sobolev_norm,
    transport_constants,
)
from stocheuler.spectral import Grid, SpectralField, SpectralVectorField, random_field, to_physical, to_spectral


def vec(grid, f1, f2):
    x1, x2 = grid.points
    return SpectralVectorField.from_physical(grid, [f1(x1, x2), f2(x1, x2)])


def scal(grid, f):
    x1, x2 = grid.points
    return to_spectral(f(x1, x2), grid)


def test_representative_modes():
    assert representative_modes(1.5) == [(0, 1), (1, 0), (-1, 1), (1, 1)]
    assert len(representative_modes(2)) == 6
    assert representative_modes(0) == []


def test_advect_constant_field(grid16):
    xi = SpectralVectorField.constant(grid16, (1.0, 0.0))
    out = advect(xi, scal(grid16, lambda x1, x2: np.sin(x1)))
    np.testing.assert_allclose(to_physical(out), np.cos(grid16.points[0]), atol=1e-14)


def test_advect_matches_grid_product(grid32):
    # xi = (0, cos x1) is divergence-free; L b = cos x1 * d2 b
    xi = vec(grid32, lambda x1, x2: 0 * x1, lambda x1, x2: np.cos(x1))
    b = scal(grid32, lambda x1, x2: np.sin(2 * x2) + np.cos(x1 - x2))
    x1, x2 = grid32.points
    quad = np.cos(x1) * (2 * np.cos(2 * x2) + np.sin(x1 - x2))
    np.testing.assert_allclose(to_physical(advect(xi, b)), quad, atol=1e-13)


def test_advect_grid_mismatch(grid16, grid32):
    with pytest.raises(GridMismatchError):
        advect(SpectralVectorField.zeros(grid16), SpectralField.zeros(grid32))


def test_lie_squared_and_ito_correction_constant_noise(grid16):
    a = 0.7
    xi = SpectralVectorField.constant(grid16, (a, 0.0))
    w = scal(grid16, lambda x1, x2: np.cos(2 * x1))
    expected = -4 * a * a * np.cos(2 * grid16.points[0])
    np.testing.assert_allclose(to_physical(lie_squared(xi, w)), expected, atol=1e-13)
    fam = NoiseFamily.from_fields([xi])
    np.testing.assert_allclose(to_physical(ito_correction(fam, w)), 0.5 * expected, atol=1e-13)


def test_ito_correction_is_half_sum_of_squares(grid32, rng):
    fam = make_noise_family(grid32, 2, 5.0, 0.3, 2)
    w = random_field(grid32, rng, kmax=6)
    direct = sum((lie_squared(xi, w) for xi in fam.fields), SpectralField.zeros(grid32)) * 0.5
    np.testing.assert_allclose(ito_correction(fam, w).coeffs, direct.coeffs, atol=1e-15)


def test_family_fields_are_the_trig_basis(grid16):
    fam = make_noise_family(grid16, 1, 5.0, 0.2, 2)
    x1, x2 = grid16.points
    # first mode is k = (0, 1), k_perp/|k| = (1, 0)
    assert fam.modes[:2] == ((0, 1), (0, 1))
    np.testing.assert_allclose(fam.physical[0, 0], 0.2 * np.cos(x2), atol=1e-15)
    np.testing.assert_allclose(fam.physical[1, 0], 0.2 * np.sin(x2), atol=1e-15)
    np.testing.assert_allclose(fam.physical[0, 1], 0.0, atol=1e-15)
    # k = (1, 0): k_perp/|k| = (0, -1)
    np.testing.assert_allclose(fam.physical[2, 1], -0.2 * np.cos(x1), atol=1e-15)
    assert all(xi.is_divergence_free() for xi in fam)


def test_summability_hand_values(grid16):
    # |k| = 1 only: four fields of sup-Sobolev norm = amplitude
    assert summability(make_noise_family(grid16, 1, 5.0, 0.1, 2), 2) == pytest.approx(0.04, rel=1e-12)
    # adds |k|^2 = 2 (norm a/sqrt 2) and |k| = 2 (norm 8a) shells
    fam = make_noise_family(grid16, 2, 5.0, 0.1, 2)
    assert len(fam) == 12
    assert fam.summability_value == pytest.approx(0.043125, rel=1e-12)


def test_sup_sobolev_norm(grid16):
    v = vec(grid16, lambda x1, x2: 0 * x1, lambda x1, x2: 0.5 * np.cos(2 * x1))
    assert sup_sobolev_norm(v, 0) == pytest.approx(0.5)
    assert sup_sobolev_norm(v, 3) == pytest.approx(4.0)


def test_family_validation(grid16, grid32):
    with pytest.raises(ValueError, match="summability"):
        make_noise_family(grid16, 2, 3.0, 0.1, 2)
    with pytest.raises(ValueError):
        make_noise_family(grid16, 8, 5.0, 0.1, 2)
    with pytest.raises(ValueError):
        make_noise_family(grid16, -1, 5.0, 0.1, 2)
    with pytest.raises(ValueError, match="divergence"):
        NoiseFamily.from_fields([vec(grid16, lambda x1, x2: np.sin(x1), lambda x1, x2: 0 * x1)])
    with pytest.raises(GridMismatchError):
        NoiseFamily(grid=grid32, fields=(SpectralVectorField.zeros(grid16),))
    empty = make_noise_family(grid16, 0, math.inf, 0.0, 2)
    assert len(empty) == 0 and empty.summability_value == 0.0


def test_transport_constants_constant_noise(grid16):
    a = 0.3
    fam = NoiseFamily.from_fields([SpectralVectorField.constant(grid16, (a, 0.0))])
    c1, c2 = transport_constants(fam, scal(grid16, lambda x1, x2: np.cos(x1)))
    assert c1 == pytest.approx(a**2 / 2, rel=1e-13)
    assert c2 == pytest.approx(a**4 / 2, rel=1e-13)


@given(seed=st.integers(0, 2**32 - 1))
def test_dual_and_null_identities(seed):
    g = Grid(32)
    r = np.random.default_rng(seed)
    fam = make_noise_family(g, 2, 5.0, float(r.uniform(0.01, 1.0)), 2)
    a, b = random_field(g, r), random_field(g, r)
    for xi in fam.fields:
        la = advect(xi, a)
        scale = math.sqrt(np.sum(np.abs(la.coeffs) ** 2)) * math.sqrt(np.sum(np.abs(b.coeffs) ** 2))
        assert abs(dual_defect(xi, a, b)) <= 1e-12 * max(scale, 1e-300)
        assert abs(null_identity_defect(xi, a)) <= 1e-12 * np.sum(np.abs(la.coeffs) ** 2)


def test_regrid_preserves_family(grid16):
    fam = make_noise_family(grid16, 2, 5.0, 0.1, 2)
    big = fam.regrid(Grid(32))
    assert big.summability_value == pytest.approx(fam.summability_value, rel=1e-12)
    assert big.describe()["n_fields"] == 12
