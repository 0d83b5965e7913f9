"""Velocity reconstruction from vorticity on the torus.

Conventions: ``curl u = d1 u2 - d2 u1``, the stream function solves
``laplacian(psi) = -omega`` and ``u = grad_perp(psi) = (d2 psi, -d1 psi)``.
The defining property is ``curl(velocity_from_vorticity(w)) == w`` for every
mean-zero ``w``.
"""

from __future__ import annotations

import numpy as np

from .errors import GridMismatchError
from .spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    partial_derivative,
    sobolev_norm,
)

__all__ = [
    "BiotSavartOperator",
    "stream_function",
    "velocity_from_vorticity",
    "curl2d",
    "biot_savart_bound_ratio",
    "MEAN_TOL",
]

# Relative tolerance on the (0, 0) coefficient for "mean-zero" inputs.
MEAN_TOL = 1e-12


def _require_mean_zero(w: SpectralField):
    c = w.coeffs
    scale = float(np.abs(c).max(initial=0.0))
    if abs(c[0, 0]) > MEAN_TOL * max(scale, 1.0):
        raise ValueError(f"vorticity must have zero mean, got mean {c[0, 0].real:.3e}")


def stream_function(w: SpectralField) -> SpectralField:
    """Solve ``laplacian(psi) = -w`` with ``psi`` mean-zero."""
    _require_mean_zero(w)
    return SpectralField._wrap(w.grid, w.grid.inv_ksq * w.coeffs)


def velocity_coeffs(grid: Grid, w_hat: np.ndarray) -> np.ndarray:
    """``(2, n, n)`` velocity coefficients, multiplier ``i k_perp / |k|^2``.

    Here ``k_perp = (k2, -k1)``, i.e. ``u = grad_perp(psi)`` with
    ``psi_hat = w_hat / |k|^2``.  No input validation (hot path).
    """
    psi = grid.inv_ksq * w_hat
    return np.stack([1j * grid.k2 * psi, -1j * grid.k1 * psi])


def velocity_from_vorticity(w: SpectralField) -> SpectralVectorField:
    """Divergence-free, mean-zero velocity whose curl is ``w``."""
    _require_mean_zero(w)
    u = velocity_coeffs(w.grid, w.coeffs)
    return SpectralVectorField(SpectralField._wrap(w.grid, u[0]), SpectralField._wrap(w.grid, u[1]))


def curl2d(u: SpectralVectorField) -> SpectralField:
    """Scalar curl ``d1 u2 - d2 u1``."""
    return partial_derivative(u[1], 1) - partial_derivative(u[0], 2)


def biot_savart_bound_ratio(w: SpectralField, s: float) -> float:
    """``|u|_{s+1,2} / |w|_{s,2}`` for ``u`` reconstructed from ``w``.

    In the spectral norm this ratio never exceeds 1: per mode the velocity
    weight is ``(1 + |k|^(2s+2)) / |k|^2 <= 1 + |k|^(2s)`` for ``|k| >= 1``.
    """
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s}")
    denom = sobolev_norm(w, s)
    if denom == 0.0:
        raise ValueError("ratio undefined for the zero vorticity field")
    return sobolev_norm(velocity_from_vorticity(w), s + 1) / denom


class BiotSavartOperator:
    """Callable wrapper binding the Biot-Savart multiplier to a grid."""

    def __init__(self, grid: Grid):
        self.grid = grid

    def __call__(self, w: SpectralField) -> SpectralVectorField:
        if w.grid != self.grid:
            raise GridMismatchError("vorticity grid does not match operator grid")
        return velocity_from_vorticity(w)

    def multiplier(self) -> np.ndarray:
        """``(2, n, n)`` array of ``i k_perp / |k|^2`` (zero at ``k = 0``)."""
        g = self.grid
        return np.stack([1j * g.k2 * g.inv_ksq, -1j * g.k1 * g.inv_ksq])
