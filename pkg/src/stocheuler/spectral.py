"""Fourier representation of real periodic fields on the 2D torus.

Conventions
-----------
Points live in ``[0, 2*pi)^2`` and the basis is ``exp(i k.x)`` with ``k`` in
``Z^2``.  Integrals use the normalized measure ``dx / (2*pi)^2`` so that
Parseval reads ``<f, f> = sum_k |f_hat(k)|^2``.

Coefficient arrays are ``n x n`` complex arrays in numpy FFT index order,
axis 0 carrying ``k1`` and axis 1 carrying ``k2``.  Physical samples use
``indexing='ij'``: ``samples[i, j] = f(2*pi*i/n, 2*pi*j/n)``.  Only modes with
``|k1|, |k2| <= K = n/2 - 1`` are retained; the Nyquist row and column are
always zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatchError

__all__ = [
    "Grid",
    "SpectralField",
    "SpectralVectorField",
    "to_spectral",
    "to_physical",
    "partial_derivative",
    "laplacian",
    "gradient",
    "divergence",
    "inner_product",
    "sobolev_norm",
    "lp_norm_physical",
    "project_zero_mean",
    "dealias_two_thirds",
    "evaluate_at_points",
    "random_field",
]


def _frozen(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform ``n_modes x n_modes`` grid on the torus and its wavenumbers."""

    n_modes: int

    def __post_init__(self):
        n = self.n_modes
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
            raise TypeError(f"n_modes must be an integer, got {n!r}")
        if n < 4 or n % 2:
            raise ValueError(f"n_modes must be an even integer >= 4, got {n}")
        object.__setattr__(self, "n_modes", int(n))

    @property
    def max_wavenumber(self) -> int:
        return self.n_modes // 2 - 1

    @property
    def dealias_cutoff(self) -> int:
        """Largest ``max(|k1|, |k2|)`` kept by the 2/3 rule."""
        return (2 * self.max_wavenumber) // 3

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.n_modes

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers along one axis, in FFT order."""
        return _frozen(np.fft.fftfreq(self.n_modes, d=1.0 / self.n_modes).round().astype(np.int64))

    @cached_property
    def k1(self) -> np.ndarray:
        return _frozen(np.broadcast_to(self.wavenumbers[:, None], (self.n_modes,) * 2).astype(float))

    @cached_property
    def k2(self) -> np.ndarray:
        return _frozen(np.broadcast_to(self.wavenumbers[None, :], (self.n_modes,) * 2).astype(float))

    @cached_property
    def ksq(self) -> np.ndarray:
        return _frozen(self.k1**2 + self.k2**2)

    @cached_property
    def kmax_abs(self) -> np.ndarray:
        """``max(|k1|, |k2|)`` per coefficient."""
        return _frozen(np.maximum(np.abs(self.k1), np.abs(self.k2)))

    @cached_property
    def retained_mask(self) -> np.ndarray:
        return _frozen(self.kmax_abs <= self.max_wavenumber)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return _frozen(self.kmax_abs <= self.dealias_cutoff)

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        """``1/|k|^2`` with the zero mode mapped to 0."""
        out = np.zeros_like(self.ksq)
        nz = self.ksq > 0
        out[nz] = 1.0 / self.ksq[nz]
        return _frozen(out)

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n_modes) * self.dx
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        return _frozen(x1), _frozen(x2)

    def index(self, k1: int, k2: int) -> tuple[int, int]:
        """Array index of wavenumber ``(k1, k2)``."""
        K = self.max_wavenumber
        if abs(k1) > K or abs(k2) > K:
            raise ValueError(f"wavenumber ({k1}, {k2}) outside retained set |k| <= {K}")
        return k1 % self.n_modes, k2 % self.n_modes


class SpectralField:
    """Real scalar field stored as Fourier coefficients on a :class:`Grid`.

    Instances are immutable; every operation returns a new field.
    """

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: Grid, coeffs, *, copy: bool = True):
        arr = np.array(coeffs, dtype=np.complex128, copy=copy)
        n = grid.n_modes
        if arr.shape != (n, n):
            raise GridMismatchError(f"coefficient array has shape {arr.shape}, expected {(n, n)}")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    def __reduce__(self):
        return (SpectralField, (self.grid, self.coeffs))

    @classmethod
    def _wrap(cls, grid, arr):
        # Internal fast path: ``arr`` is freshly allocated and owned by us.
        return cls(grid, arr, copy=False)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls._wrap(grid, np.zeros((grid.n_modes,) * 2, dtype=np.complex128))

    @classmethod
    def from_modes(cls, grid: Grid, modes: dict) -> "SpectralField":
        """Build a real field from ``{(k1, k2): complex amplitude}``.

        The conjugate amplitude is placed at ``-k`` automatically; listing
        both ``k`` and ``-k`` adds the two contributions.
        """
        arr = np.zeros((grid.n_modes,) * 2, dtype=np.complex128)
        for (a, b), c in modes.items():
            i, j = grid.index(a, b)
            if a == 0 and b == 0:
                arr[i, j] += complex(c).real
                continue
            ni, nj = grid.index(-a, -b)
            arr[i, j] += c
            arr[ni, nj] += np.conj(c)
        return cls._wrap(grid, arr)

    def coeff(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[self.grid.index(k1, k2)])

    def to_physical(self) -> np.ndarray:
        return to_physical(self)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))
        scale = max(float(np.abs(c).max(initial=0.0)), 1e-300)
        return float(np.abs(c - flipped).max(initial=0.0)) <= rtol * scale

    def regrid(self, grid: Grid) -> "SpectralField":
        """Embed into (or truncate onto) another grid by copying shared modes."""
        K = min(grid.max_wavenumber, self.grid.max_wavenumber)
        out = np.zeros((grid.n_modes,) * 2, dtype=np.complex128)
        ks = np.arange(-K, K + 1)
        src = np.ix_(ks % self.grid.n_modes, ks % self.grid.n_modes)
        dst = np.ix_(ks % grid.n_modes, ks % grid.n_modes)
        out[dst] = self.coeffs[src]
        return SpectralField._wrap(grid, out)

    def _check(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid:
            raise GridMismatchError(f"grid {self.grid.n_modes} vs {other.grid.n_modes}")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralField._wrap(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralField._wrap(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField._wrap(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField._wrap(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField._wrap(self.grid, self.coeffs / float(scalar))

    def __repr__(self):
        return f"SpectralField(n_modes={self.grid.n_modes}, l2={np.sqrt(inner_product(self, self)):.6g})"


class SpectralVectorField:
    """Pair of :class:`SpectralField` components on one grid."""

    __slots__ = ("components",)

    def __init__(self, c1: SpectralField, c2: SpectralField):
        if c1.grid != c2.grid:
            raise GridMismatchError("vector components live on different grids")
        object.__setattr__(self, "components", (c1, c2))

    def __setattr__(self, name, value):
        raise AttributeError("SpectralVectorField is immutable")

    def __reduce__(self):
        return (SpectralVectorField, self.components)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralVectorField":
        return cls(SpectralField.zeros(grid), SpectralField.zeros(grid))

    @classmethod
    def constant(cls, grid: Grid, value) -> "SpectralVectorField":
        a, b = value
        return cls(SpectralField.from_modes(grid, {(0, 0): a}), SpectralField.from_modes(grid, {(0, 0): b}))

    @classmethod
    def from_physical(cls, grid: Grid, samples) -> "SpectralVectorField":
        s = np.asarray(samples, dtype=float)
        return cls(to_spectral(s[0], grid), to_spectral(s[1], grid))

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    def __getitem__(self, i) -> SpectralField:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def stacked(self) -> np.ndarray:
        """Coefficients as a ``(2, n, n)`` array."""
        return np.stack([c.coeffs for c in self.components])

    def to_physical(self) -> np.ndarray:
        return _to_physical_array(self.stacked())

    def regrid(self, grid: Grid) -> "SpectralVectorField":
        return SpectralVectorField(self[0].regrid(grid), self[1].regrid(grid))

    def divergence_defect(self) -> float:
        """``max_k |k . v_hat(k)|`` relative to the largest ``|k| |v_hat(k)|``."""
        g = self.grid
        v1, v2 = self[0].coeffs, self[1].coeffs
        div = np.abs(g.k1 * v1 + g.k2 * v2).max()
        scale = np.sqrt(g.ksq * (np.abs(v1) ** 2 + np.abs(v2) ** 2)).max()
        return float(div / scale) if scale > 0 else 0.0

    def is_divergence_free(self, rtol: float = 1e-12) -> bool:
        return self.divergence_defect() <= rtol

    def __add__(self, other):
        return SpectralVectorField(self[0] + other[0], self[1] + other[1])

    def __sub__(self, other):
        return SpectralVectorField(self[0] - other[0], self[1] - other[1])

    def __mul__(self, scalar):
        return SpectralVectorField(self[0] * scalar, self[1] * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVectorField(-self[0], -self[1])

    def __repr__(self):
        return f"SpectralVectorField(n_modes={self.grid.n_modes})"


def _check_same_grid(f: SpectralField, g: SpectralField):
    if f.grid != g.grid:
        raise GridMismatchError(f"grid {f.grid.n_modes} vs {g.grid.n_modes}")


def _to_physical_array(coeffs: np.ndarray) -> np.ndarray:
    """Inverse transform over the last two axes; assumes Hermitian input."""
    n = coeffs.shape[-1]
    return np.fft.irfft2(coeffs[..., : n // 2 + 1], s=(n, n)) * (n * n)


def _rfft_full(samples: np.ndarray) -> np.ndarray:
    """Full ``fft2`` of real data over the last two axes, via ``rfft2``."""
    n = samples.shape[-1]
    h = n // 2
    r = np.fft.rfft2(samples)
    out = np.empty(samples.shape, dtype=np.complex128)
    out[..., : h + 1] = r
    neg = (-np.arange(n)) % n
    out[..., h + 1 :] = np.conj(r[..., neg, h - 1 : 0 : -1])
    return out


def _to_spectral_array(samples: np.ndarray, grid: Grid) -> np.ndarray:
    n = grid.n_modes
    out = _rfft_full(samples)
    out *= grid.retained_mask / (n * n)
    return out


def to_spectral(samples, grid: Grid) -> SpectralField:
    """Fourier coefficients of real grid samples (Nyquist content dropped)."""
    s = np.asarray(samples)
    if np.iscomplexobj(s):
        raise TypeError("samples must be real-valued")
    if s.shape != (grid.n_modes, grid.n_modes):
        raise GridMismatchError(f"samples have shape {s.shape}, grid expects {(grid.n_modes,) * 2}")
    return SpectralField._wrap(grid, _to_spectral_array(s.astype(float, copy=False), grid))


def to_physical(f: SpectralField) -> np.ndarray:
    return _to_physical_array(f.coeffs)


def partial_derivative(f: SpectralField, axis: int) -> SpectralField:
    """Spectral derivative along ``axis`` (1 for x1, 2 for x2)."""
    if axis == 1:
        k = f.grid.k1
    elif axis == 2:
        k = f.grid.k2
    else:
        raise ValueError(f"axis must be 1 or 2, got {axis!r}")
    return SpectralField._wrap(f.grid, 1j * k * f.coeffs)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField._wrap(f.grid, -f.grid.ksq * f.coeffs)


def gradient(f: SpectralField) -> SpectralVectorField:
    return SpectralVectorField(partial_derivative(f, 1), partial_derivative(f, 2))


def divergence(v: SpectralVectorField) -> SpectralField:
    g = v.grid
    return SpectralField._wrap(g, 1j * (g.k1 * v[0].coeffs + g.k2 * v[1].coeffs))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """``<f, g>`` under the normalized measure, via Parseval."""
    _check_same_grid(f, g)
    return float(np.vdot(g.coeffs, f.coeffs).real)


def sobolev_norm(f, s: float) -> float:
    """``sqrt(sum_k (1 + |k|^(2s)) |f_hat(k)|^2)``.

    Vector fields are normed as ``sqrt(|v1|^2 + |v2|^2)`` componentwise.
    The zero mode gets weight 2 at ``s = 0`` and 1 for ``s > 0``.
    """
    if s < 0:
        raise ValueError(f"Sobolev index must be nonnegative, got {s}")
    if isinstance(f, SpectralVectorField):
        return float(np.hypot(sobolev_norm(f[0], s), sobolev_norm(f[1], s)))
    weight = 1.0 + np.power(f.grid.ksq, s)
    return float(np.sqrt(np.sum(weight * (f.coeffs.real**2 + f.coeffs.imag**2))))


def lp_norm_physical(f: SpectralField, p: float) -> float:
    """``L^p`` norm by grid quadrature; ``p = inf`` gives the grid max.

    The grid max is a lower bound on the true supremum.
    """
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    vals = np.abs(to_physical(f))
    if np.isinf(p):
        return float(vals.max())
    return float(np.mean(vals**p) ** (1.0 / p))


def project_zero_mean(f: SpectralField) -> SpectralField:
    c = f.coeffs.copy()
    c[0, 0] = 0.0
    return SpectralField._wrap(f.grid, c)


def dealias_two_thirds(f: SpectralField) -> SpectralField:
    """Zero every coefficient with ``max(|k1|, |k2|) > floor(2K/3)``."""
    return SpectralField._wrap(f.grid, f.coeffs * f.grid.dealias_mask)


def evaluate_at_points(f: SpectralField, points) -> np.ndarray:
    """Exact trigonometric evaluation ``sum_k f_hat(k) exp(i k.x)`` at points.

    ``points`` has shape ``(P, 2)``.  Only rows/columns of the coefficient
    array carrying nonzero entries are summed.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c = f.coeffs
    rows = np.flatnonzero(np.any(c != 0, axis=1))
    cols = np.flatnonzero(np.any(c != 0, axis=0))
    if rows.size == 0:
        return np.zeros(len(pts))
    kr = f.grid.wavenumbers[rows].astype(float)
    kc = f.grid.wavenumbers[cols].astype(float)
    e1 = np.exp(1j * np.outer(pts[:, 0], kr))
    e2 = np.exp(1j * np.outer(pts[:, 1], kc))
    sub = c[np.ix_(rows, cols)]
    return np.einsum("pa,ab,pb->p", e1, sub, e2, optimize=True).real


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    kmax: int | None = None,
    slope: float = 0.0,
    l2_norm: float | None = 1.0,
) -> SpectralField:
    """Random real mean-zero field band-limited to ``max(|k1|,|k2|) <= kmax``.

    Amplitudes are white noise times ``|k|^(-slope)``.  ``kmax`` defaults to
    the dealiasing cutoff, so the result is alias-free for quadratic products.
    The draw depends only on ``rng`` and ``kmax`` (not on the grid size), so
    the same generator state yields the same field on every resolution.
    """
    if kmax is None:
        kmax = grid.dealias_cutoff
    if kmax > grid.max_wavenumber:
        raise ValueError(f"kmax={kmax} exceeds grid max wavenumber {grid.max_wavenumber}")
    m = 2 * kmax + 1
    z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    ks = np.arange(-kmax, kmax + 1)
    kk1, kk2 = np.meshgrid(ks, ks, indexing="ij")
    ksq = (kk1**2 + kk2**2).astype(float)
    amp = np.zeros_like(ksq)
    amp[ksq > 0] = ksq[ksq > 0] ** (-slope / 2.0)
    z *= amp
    # Hermitian symmetrization: c(k) = (z(k) + conj(z(-k))) / 2
    z = 0.5 * (z + np.conj(z[::-1, ::-1]))
    out = np.zeros((grid.n_modes,) * 2, dtype=np.complex128)
    out[np.ix_(ks % grid.n_modes, ks % grid.n_modes)] = z
    out[0, 0] = 0.0
    f = SpectralField._wrap(grid, out)
    if l2_norm is not None:
        nrm = np.sqrt(inner_product(f, f))
        if nrm > 0:
            f = f * (l2_norm / nrm)
    return f
