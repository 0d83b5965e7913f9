"""Divergence-free transport-noise families and the transport operators.

``advect(a, b) = a . grad(b)`` is evaluated pseudo-spectrally: gradients are
taken spectrally, the product is formed on the grid and the result is
projected back with 2/3 dealiasing.  For band-limited inputs inside the
dealiased set (and noise modes inside it as well) the retained coefficients
of the product are exact, which is what makes the discrete antisymmetry
identities hold to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import GridMismatchError
from .spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    _rfft_full,
    _to_physical_array,
    inner_product,
    sobolev_norm,
)

__all__ = [
    "NoiseFamily",
    "make_noise_family",
    "summability",
    "sup_sobolev_norm",
    "advect",
    "lie_squared",
    "ito_correction",
    "dual_defect",
    "null_identity_defect",
    "transport_constants",
    "representative_modes",
]

DIVERGENCE_TOL = 1e-12


def _product_mask(grid: Grid, dealias: bool) -> np.ndarray:
    return grid.dealias_mask if dealias else grid.retained_mask


def _advect_array(a_phys: np.ndarray, b_hat: np.ndarray, grid: Grid, dealias: bool, mean_zero: bool) -> np.ndarray:
    """Coefficients of ``a . grad(b)``.

    ``a_phys`` has shape ``(..., 2, n, n)`` and ``b_hat`` ``(..., n, n)``;
    leading axes broadcast.
    """
    n = grid.n_modes
    d1 = _to_physical_array(1j * grid.k1 * b_hat)
    d2 = _to_physical_array(1j * grid.k2 * b_hat)
    prod = a_phys[..., 0, :, :] * d1 + a_phys[..., 1, :, :] * d2
    out = _rfft_full(prod)
    out *= _product_mask(grid, dealias) / (n * n)
    if mean_zero:
        out[..., 0, 0] = 0.0
    return out


def advect(a: SpectralVectorField, b: SpectralField, dealias: bool = True) -> SpectralField:
    """Transport operator ``L_a b = a . grad(b)``.

    The mean is projected out when ``a`` is divergence-free (the exact
    product then has zero average by integration by parts).
    """
    if a.grid != b.grid:
        raise GridMismatchError("advecting field and scalar live on different grids")
    grid = b.grid
    out = _advect_array(a.to_physical(), b.coeffs, grid, dealias, a.is_divergence_free(DIVERGENCE_TOL))
    return SpectralField._wrap(grid, out)


def lie_squared(xi: SpectralVectorField, w: SpectralField, dealias: bool = True) -> SpectralField:
    """``L_xi^2 w = xi . grad(xi . grad(w))``."""
    return advect(xi, advect(xi, w, dealias), dealias)


def dual_defect(xi: SpectralVectorField, a: SpectralField, b: SpectralField) -> float:
    """``<L_xi a, b> + <a, L_xi b>``; zero when ``L_xi`` is skew."""
    return inner_product(advect(xi, a), b) + inner_product(a, advect(xi, b))


def null_identity_defect(xi: SpectralVectorField, f: SpectralField) -> float:
    """``<f, L_xi^2 f> + <L_xi f, L_xi f>``."""
    lf = advect(xi, f)
    return inner_product(f, advect(xi, lf)) + inner_product(lf, lf)


def representative_modes(cutoff: float) -> list[tuple[int, int]]:
    """Half-lattice wavenumbers with ``0 < |k| <= cutoff``.

    One of each ``+-k`` pair is kept (``k2 > 0``, or ``k2 == 0`` and
    ``k1 > 0``).  Ordered by ``|k|^2``, then ``k1``, then ``k2``.
    """
    c = int(math.floor(cutoff))
    modes = []
    for k1, k2 in product(range(-c, c + 1), range(0, c + 1)):
        if k2 == 0 and k1 <= 0:
            continue
        if k1 * k1 + k2 * k2 <= cutoff * cutoff:
            modes.append((k1, k2))
    modes.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    return modes


def sup_sobolev_norm(v: SpectralVectorField, order: int) -> float:
    """``max`` over ``|alpha| <= order`` and components of the grid sup of ``d^alpha v``.

    Grid-sampled, hence a lower bound on the continuum norm.
    """
    g = v.grid
    coeffs = v.stacked()
    best = 0.0
    for total in range(order + 1):
        for a1 in range(total + 1):
            a2 = total - a1
            mult = (1j * g.k1) ** a1 * (1j * g.k2) ** a2
            vals = _to_physical_array(mult * coeffs)
            best = max(best, float(np.abs(vals).max()))
    return best


@dataclass(frozen=True, eq=False)
class NoiseFamily:
    """Finite family of divergence-free vector fields ``xi_i``.

    ``summability_value`` stores ``sum_i |xi_i|^2_{m+1,inf}`` for the
    family's own ``sobolev_index`` m.
    """

    grid: Grid
    fields: tuple
    modes: tuple = ()
    amplitudes: tuple = ()
    decay_exponent: float = math.nan
    base_amplitude: float = math.nan
    mode_cutoff: float = 0
    sobolev_index: int = 2
    summability_value: float = field(init=False)

    def __post_init__(self):
        fields = tuple(self.fields)
        object.__setattr__(self, "fields", fields)
        for i, xi in enumerate(fields):
            if xi.grid != self.grid:
                raise GridMismatchError(f"noise field {i} lives on a different grid")
            defect = xi.divergence_defect()
            if defect > DIVERGENCE_TOL:
                raise ValueError(f"noise field {i} is not divergence-free (relative defect {defect:.2e})")
        n = self.grid.n_modes
        if fields:
            coeffs = np.stack([xi.stacked() for xi in fields])
            phys = _to_physical_array(coeffs)
        else:
            coeffs = np.zeros((0, 2, n, n), dtype=np.complex128)
            phys = np.zeros((0, 2, n, n))
        coeffs.setflags(write=False)
        phys.setflags(write=False)
        object.__setattr__(self, "_coeffs", coeffs)
        object.__setattr__(self, "_phys", phys)
        object.__setattr__(self, "summability_value", summability(self, self.sobolev_index))

    @classmethod
    def from_fields(cls, fields, sobolev_index: int = 2) -> "NoiseFamily":
        fields = list(fields)
        if not fields:
            raise ValueError("from_fields needs at least one field (use make_noise_family(..., 0, ...) for empty)")
        return cls(grid=fields[0].grid, fields=tuple(fields), sobolev_index=sobolev_index)

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    @property
    def physical(self) -> np.ndarray:
        """``(M, 2, n, n)`` grid values of all fields."""
        return self._phys

    @property
    def coefficient_stack(self) -> np.ndarray:
        return self._coeffs

    def sup_norms(self) -> np.ndarray:
        """Grid sup of ``|xi_i|`` per field."""
        if not len(self):
            return np.zeros(0)
        return np.sqrt((self._phys**2).sum(axis=1)).reshape(len(self), -1).max(axis=1)

    def lie_all(self, b_hat: np.ndarray, dealias: bool = True) -> np.ndarray:
        """``(M, n, n)`` coefficients of ``L_i b`` for every member."""
        return _advect_array(self._phys, b_hat[None], self.grid, dealias, True)

    def lie_each(self, stack: np.ndarray, dealias: bool = True) -> np.ndarray:
        """``L_i`` applied to ``stack[i]`` for every member."""
        return _advect_array(self._phys, stack, self.grid, dealias, True)

    def regrid(self, grid: Grid) -> "NoiseFamily":
        return NoiseFamily(
            grid=grid,
            fields=tuple(xi.regrid(grid) for xi in self.fields),
            modes=self.modes,
            amplitudes=self.amplitudes,
            decay_exponent=self.decay_exponent,
            base_amplitude=self.base_amplitude,
            mode_cutoff=self.mode_cutoff,
            sobolev_index=self.sobolev_index,
        )

    def describe(self) -> dict:
        return {
            "n_fields": len(self),
            "mode_cutoff": self.mode_cutoff,
            "decay_exponent": self.decay_exponent,
            "base_amplitude": self.base_amplitude,
            "sobolev_index": self.sobolev_index,
            "summability": self.summability_value,
        }


def make_noise_family(grid: Grid, mode_cutoff: float, gamma: float, base_amplitude: float, m: int) -> NoiseFamily:
    """Trigonometric family ``a_k (k_perp/|k|) cos(k.x)``, ``a_k (k_perp/|k|) sin(k.x)``.

    ``a_k = base_amplitude * |k|^(-gamma)`` over :func:`representative_modes`,
    ``k_perp = (k2, -k1)``.  Requires ``gamma > m + 2`` so that
    ``sum_k a_k^2 |k|^(2(m+1))`` converges over the full lattice.
    """
    if m < 0:
        raise ValueError(f"sobolev index m must be nonnegative, got {m}")
    if not gamma > m + 2:
        raise ValueError(
            f"decay exponent gamma={gamma} must exceed m + 2 = {m + 2} "
            "for the noise summability condition sum_i |xi_i|^2_(m+1,inf) < inf"
        )
    if mode_cutoff < 0:
        raise ValueError(f"mode_cutoff must be nonnegative, got {mode_cutoff}")
    if mode_cutoff > grid.max_wavenumber:
        raise ValueError(f"mode_cutoff={mode_cutoff} exceeds grid max wavenumber {grid.max_wavenumber}")
    fields, modes, amps = [], [], []
    for k1, k2 in representative_modes(mode_cutoff):
        knorm = math.hypot(k1, k2)
        a = base_amplitude * knorm ** (-gamma)
        perp = (k2 / knorm, -k1 / knorm)
        # cos(k.x) = (e^{ikx} + e^{-ikx})/2 ; sin(k.x) = (e^{ikx} - e^{-ikx})/(2i)
        for coef in (0.5 + 0j, -0.5j):
            comps = [SpectralField.from_modes(grid, {(k1, k2): a * p * coef}) for p in perp]
            fields.append(SpectralVectorField(*comps))
            modes.append((k1, k2))
            amps.append(a)
    return NoiseFamily(
        grid=grid,
        fields=tuple(fields),
        modes=tuple(modes),
        amplitudes=tuple(amps),
        decay_exponent=float(gamma),
        base_amplitude=float(base_amplitude),
        mode_cutoff=mode_cutoff,
        sobolev_index=int(m),
    )


def summability(family: NoiseFamily, m: int) -> float:
    """``sum_i |xi_i|^2_{m+1, inf}`` (grid-sampled sup-Sobolev norm)."""
    return float(sum(sup_sobolev_norm(xi, m + 1) ** 2 for xi in family.fields))


def ito_correction(family: NoiseFamily, w: SpectralField, dealias: bool = True) -> SpectralField:
    """``(1/2) sum_i L_i^2 w``, summed in index order."""
    if w.grid != family.grid:
        raise GridMismatchError("vorticity and noise family live on different grids")
    if not len(family):
        return SpectralField.zeros(w.grid)
    first = family.lie_all(w.coeffs, dealias)
    second = family.lie_each(first, dealias)
    return SpectralField._wrap(w.grid, 0.5 * second.sum(axis=0))


def transport_constants(family: NoiseFamily, f: SpectralField, dealias: bool = True) -> tuple[float, float]:
    """Ratios ``sum_i |L_i f|^2 / |f|^2_{1,2}`` and ``sum_i |L_i^2 f|^2 / |f|^2_{2,2}``."""
    if not len(family):
        return 0.0, 0.0
    first = family.lie_all(f.coeffs, dealias)
    second = family.lie_each(first, dealias)
    s1 = float(np.sum(np.abs(first) ** 2))
    s2 = float(np.sum(np.abs(second) ** 2))
    return s1 / sobolev_norm(f, 1) ** 2, s2 / sobolev_norm(f, 2) ** 2
