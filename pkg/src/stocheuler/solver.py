"""Time integration of the truncated stochastic Euler vorticity equation.

The main scheme is Euler-Maruyama on the Ito form

    d w = ( nu lap(w) - f_R(|w|_{k-1,2}) u . grad(w) + 1/2 sum_i L_i^2 w ) dt
          - sum_i L_i w dW^i,

with ``u`` the Biot-Savart velocity of ``w``.  A Stratonovich-Heun stepper
(no Ito correction; predictor/corrector in drift and noise) is available for
cross-validation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .biot_savart import velocity_coeffs
from .errors import BlowUpError, ConfigError, GridMismatchError
from .noise import NoiseFamily, _advect_array, make_noise_family
from .spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    _to_physical_array,
    random_field,
    sobolev_norm,
)

log = logging.getLogger(__name__)

__all__ = [
    "NoiseParams",
    "InitialCondition",
    "SimConfig",
    "BrownianDriver",
    "SolverState",
    "DiagnosticsRecord",
    "Trajectory",
    "ViscousSequence",
    "Solver",
    "smoothstep",
    "truncation_factor",
    "drift",
    "diffusion_increment",
    "em_step",
    "cfl_dt",
    "diffusive_dt",
    "simulate",
    "viscous_iteration_sequence",
    "build_family",
    "initial_condition",
    "smooth_initial",
]

SCHEMES = ("euler_maruyama", "stratonovich_heun")


@dataclass(frozen=True)
class NoiseParams:
    mode_cutoff: float = 0
    decay_exponent: float = 5.0
    base_amplitude: float = 0.0
    sobolev_index: int | None = None  # defaults to the solver's sobolev_k


@dataclass(frozen=True)
class InitialCondition:
    """How to build ``w_0``.

    ``kind`` is one of ``zero``, ``modes``, ``random`` or ``snapshot``.
    ``modes`` entries are ``(k1, k2, cos_amp, sin_amp)`` and contribute
    ``cos_amp cos(k.x) + sin_amp sin(k.x)``.
    """

    kind: str = "random"
    modes: tuple = ()
    seed: int = 0
    kmax: int = 4
    slope: float = 1.0
    l2_norm: float = 1.0
    path: str = ""


@dataclass(frozen=True)
class SimConfig:
    grid: Grid
    dt: float
    t_end: float
    sobolev_k: int = 2
    truncation_R: float = math.inf
    viscosity: float = 0.0
    noise: NoiseParams = field(default_factory=NoiseParams)
    initial: InitialCondition = field(default_factory=InitialCondition)
    seed: int = 0
    dealias: bool = True
    snapshot_stride: int = 1
    scheme: str = "euler_maruyama"
    cfl_safety: float = 0.5
    bit_exact: bool = True
    mode_growth: int = 2

    def __post_init__(self):
        if not isinstance(self.sobolev_k, (int, np.integer)) or self.sobolev_k < 2:
            raise ConfigError(
                f"sobolev_k={self.sobolev_k!r}: the regularity index k must be an integer >= 2 "
                "(k = 2 is the minimal level giving strong solutions)"
            )
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise ConfigError(f"dt must be positive and finite, got {self.dt}")
        if not self.t_end >= 0 or not math.isfinite(self.t_end):
            raise ConfigError(f"t_end must be nonnegative and finite, got {self.t_end}")
        if not self.truncation_R > 0:
            raise ConfigError(f"truncation_R must be positive (or inf), got {self.truncation_R}")
        if not self.viscosity >= 0:
            raise ConfigError(f"viscosity must be nonnegative, got {self.viscosity}")
        if self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.cfl_safety > 0:
            raise ConfigError(f"cfl_safety must be positive, got {self.cfl_safety}")
        if self.mode_growth < 1:
            raise ConfigError(f"mode_growth must be >= 1, got {self.mode_growth}")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"t_end={self.t_end} is not an integer multiple of dt={self.dt}")
        m = self.noise_sobolev_index
        if self.noise.mode_cutoff > 0 and not self.noise.decay_exponent > m + 2:
            raise ConfigError(
                f"noise decay_exponent={self.noise.decay_exponent} must exceed m + 2 = {m + 2}: "
                "required by the summability assumption sum_i |xi_i|^2_(m+1,inf) < inf"
            )
        if self.noise.mode_cutoff > self.grid.max_wavenumber:
            raise ConfigError(
                f"noise mode_cutoff={self.noise.mode_cutoff} exceeds grid max wavenumber {self.grid.max_wavenumber}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def noise_sobolev_index(self) -> int:
        return self.sobolev_k if self.noise.sobolev_index is None else self.noise.sobolev_index

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


class BrownianDriver:
    """Seeded source of independent Wiener increments.

    Increments are generated on a fine time step ``dt``; a solver running at
    ``m * dt`` consumes sums of ``m`` consecutive fine increments, so runs at
    different step sizes share one Brownian path.  Values are a pure function
    of ``(seed, member, stream, fine step)``.
    """

    def __init__(self, seed: int, n_streams: int, dt: float, member: int = 0, block: int = 1024):
        if n_streams < 0:
            raise ValueError("n_streams must be nonnegative")
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.seed = int(seed)
        self.n_streams = int(n_streams)
        self.dt = float(dt)
        self.member = int(member)
        self.block = int(block)
        self._cache: dict[int, np.ndarray] = {}

    def _block(self, b: int) -> np.ndarray:
        blk = self._cache.get(b)
        if blk is None:
            out = np.empty((self.n_streams, self.block))
            for i in range(self.n_streams):
                ss = np.random.SeedSequence(self.seed, spawn_key=(self.member, i, b))
                out[i] = np.random.default_rng(ss).standard_normal(self.block)
            blk = out * math.sqrt(self.dt)
            if len(self._cache) > 8:
                self._cache.pop(next(iter(self._cache)))
            self._cache[b] = blk
        return blk

    def fine_increments(self, start: int, stop: int) -> np.ndarray:
        """``(n_streams, stop - start)`` fine increments."""
        if stop <= start:
            return np.zeros((self.n_streams, 0))
        b0, b1 = start // self.block, (stop - 1) // self.block
        parts = [self._block(b) for b in range(b0, b1 + 1)]
        arr = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        off = b0 * self.block
        return arr[:, start - off : stop - off]

    def substeps(self, dt: float) -> int:
        m = dt / self.dt
        mi = int(round(m))
        if mi < 1 or abs(m - mi) > 1e-9 * m:
            raise ValueError(f"step {dt} is not an integer multiple of the driver step {self.dt}")
        return mi

    def increment(self, step: int, dt: float | None = None) -> np.ndarray:
        """Increments ``W(t_{step+1}) - W(t_step)`` for the coarse step ``dt``."""
        m = 1 if dt is None else self.substeps(dt)
        return self.fine_increments(step * m, (step + 1) * m).sum(axis=1)

    def path(self, n_steps: int, dt: float | None = None) -> np.ndarray:
        """``(n_steps + 1, n_streams)`` values ``W(t_j)`` with ``W(0) = 0``."""
        m = 1 if dt is None else self.substeps(dt)
        fine = self.fine_increments(0, n_steps * m)
        coarse = fine.reshape(self.n_streams, n_steps, m).sum(axis=2)
        out = np.zeros((n_steps + 1, self.n_streams))
        out[1:] = np.cumsum(coarse.T, axis=0)
        return out


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    l2: float
    sobolev_k: float
    sobolev_km1: float
    mean: float
    f_R: float
    log_norm: float
    grad_u_inf: float
    tau_R_crossed: bool

    FIELDS = ("time", "l2", "sobolev_k", "sobolev_km1", "mean", "f_R", "log_norm", "grad_u_inf", "tau_R_crossed")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)


@dataclass(frozen=True)
class SolverState:
    time: float
    step: int
    omega: SpectralField
    diagnostics: DiagnosticsRecord | None = None
    _velocity: SpectralVectorField | None = field(default=None, repr=False, compare=False)

    @property
    def velocity(self) -> SpectralVectorField:
        if self._velocity is None:
            u = velocity_coeffs(self.omega.grid, self.omega.coeffs)
            g = self.omega.grid
            object.__setattr__(
                self, "_velocity", SpectralVectorField(SpectralField._wrap(g, u[0]), SpectralField._wrap(g, u[1]))
            )
        return self._velocity


@dataclass
class Trajectory:
    config: SimConfig
    snapshots: list
    diagnostics: list
    tau_R: float | None = None
    family: NoiseFamily | None = None

    @property
    def final(self) -> SolverState:
        return self.snapshots[-1]

    @property
    def initial(self) -> SolverState:
        return self.snapshots[0]

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics], dtype=float)


@dataclass
class ViscousSequence:
    trajectories: list  # iterates 1..n_max
    distances: list  # |w^(n)_T - w^(n-1)_T|_2 for n = 1..n_max
    iterate0: SpectralField


def smoothstep(t):
    """Quintic smoothstep ``6t^5 - 15t^4 + 10t^3`` clamped to ``[0, 1]``."""
    t = min(max(t, 0.0), 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _f_R(x: float, R: float) -> float:
    if math.isinf(R) or x <= R:
        return 1.0
    if x >= R + 1.0:
        return 0.0
    return 1.0 - smoothstep(x - R)


def truncation_factor(w: SpectralField, R: float, sobolev_k: int) -> float:
    """``f_R(|w|_{k-1,2})``: 1 on ``[0, R]``, 0 on ``[R+1, inf)``, C^2 in between."""
    if math.isinf(R):
        return 1.0
    return _f_R(sobolev_norm(w, sobolev_k - 1), R)


def build_family(config: SimConfig) -> NoiseFamily:
    p = config.noise
    if p.mode_cutoff <= 0:
        return make_noise_family(config.grid, 0, math.inf, 0.0, config.noise_sobolev_index)
    return make_noise_family(config.grid, p.mode_cutoff, p.decay_exponent, p.base_amplitude, config.noise_sobolev_index)


def initial_condition(config: SimConfig) -> SpectralField:
    """Mean-zero (and, if configured, dealiased) initial vorticity."""
    ic, g = config.initial, config.grid
    if ic.kind == "zero":
        w = SpectralField.zeros(g)
    elif ic.kind == "modes":
        modes = {}
        for k1, k2, ca, sa in ic.modes:
            key = (int(k1), int(k2))
            modes[key] = modes.get(key, 0) + 0.5 * ca - 0.5j * sa
        w = SpectralField.from_modes(g, modes)
    elif ic.kind == "random":
        w = random_field(g, np.random.default_rng(ic.seed), kmax=ic.kmax, slope=ic.slope, l2_norm=ic.l2_norm)
    elif ic.kind == "snapshot":
        from .io import read_snapshot

        w = read_snapshot(ic.path, expected_n_modes=g.n_modes)
    else:
        raise ConfigError(f"unknown initial condition kind {ic.kind!r}")
    c = w.coeffs * (g.dealias_mask if config.dealias else g.retained_mask)
    c[0, 0] = 0.0
    return SpectralField._wrap(g, c)


def smooth_initial(w0: SpectralField, level: int, mode_growth: int) -> SpectralField:
    """Spectral truncation of ``w0`` to ``max(|k1|,|k2|) <= level * mode_growth``."""
    g = w0.grid
    cut = min(g.max_wavenumber, max(level, 1) * mode_growth)
    return SpectralField._wrap(g, w0.coeffs * (g.kmax_abs <= cut))


def cfl_dt(u: SpectralVectorField, family: NoiseFamily, grid: Grid, safety: float = 0.5, eps: float = 1e-12) -> float:
    """Advective step bound ``safety * dx / (|u|_inf + sum_i |xi_i|_inf + eps)``."""
    up = u.to_physical()
    umax = float(np.sqrt(up[0] ** 2 + up[1] ** 2).max())
    xsum = float(family.sup_norms().sum()) if len(family) else 0.0
    return safety * grid.dx / (umax + xsum + eps)


def diffusive_dt(grid: Grid, nu: float, dealias: bool = True) -> float:
    """Forward-Euler stability limit ``2 / (nu max|k|^2)`` for the viscous term."""
    mask = grid.dealias_mask if dealias else grid.retained_mask
    kmax2 = float(grid.ksq[mask].max())
    return math.inf if nu <= 0 else 2.0 / (nu * kmax2)


def _nonlinear(w_hat, u_hat, grid, dealias):
    u_phys = _to_physical_array(u_hat)
    return _advect_array(u_phys, w_hat, grid, dealias, True)


def _mask(grid, dealias):
    return grid.dealias_mask if dealias else grid.retained_mask


class Solver:
    """Bundles a config with its noise family and Brownian driver."""

    def __init__(self, config: SimConfig, driver: BrownianDriver | None = None, family: NoiseFamily | None = None):
        self.config = config
        self.family = family if family is not None else build_family(config)
        if self.family.grid != config.grid:
            raise GridMismatchError("noise family grid does not match config grid")
        if driver is None:
            driver = BrownianDriver(config.seed, len(self.family), config.dt)
        if driver.n_streams < len(self.family):
            raise ValueError(f"driver has {driver.n_streams} streams, family needs {len(self.family)}")
        self.driver = driver
        self._tau_crossed = False
        self.tau_R: float | None = None

    # -- terms ------------------------------------------------------------
    def noise_terms(self, w_hat, need_second=True):
        fam, dealias = self.family, self.config.dealias
        if not len(fam):
            return None, None
        first = fam.lie_all(w_hat, dealias)
        second = fam.lie_each(first, dealias) if need_second else None
        return first, second

    def deterministic_drift(self, w_hat, u_hat, fR, nu):
        g = self.config.grid
        out = -fR * _nonlinear(w_hat, u_hat, g, self.config.dealias) if fR != 0.0 else np.zeros_like(w_hat)
        if nu:
            out = out - nu * g.ksq * w_hat
        return out

    def f_R(self, w_hat) -> float:
        c = self.config
        if math.isinf(c.truncation_R):
            return 1.0
        return _f_R(_sob(w_hat, c.grid, c.sobolev_k - 1), c.truncation_R)

    # -- stepping ---------------------------------------------------------
    def advance(self, w_hat, dW, *, u_hat=None, fR=None, nu=None):
        """One step from coefficients ``w_hat``; returns new coefficients.

        ``u_hat``/``fR`` default to the Biot-Savart velocity and truncation
        factor of ``w_hat`` itself; the linearized iteration passes frozen ones.
        """
        c, g = self.config, self.config.grid
        if u_hat is None:
            u_hat = velocity_coeffs(g, w_hat)
            frozen = False
        else:
            frozen = True
        if fR is None:
            fR = self.f_R(w_hat)
        if nu is None:
            nu = c.viscosity
        dt = c.dt
        with np.errstate(over="ignore", invalid="ignore"):
            if c.scheme == "euler_maruyama":
                first, second = self.noise_terms(w_hat)
                d = self.deterministic_drift(w_hat, u_hat, fR, nu)
                new = w_hat + dt * d
                if first is not None:
                    new = new + dt * 0.5 * second.sum(axis=0)
                    new = new - np.tensordot(dW, first, axes=(0, 0))
            else:
                new = self._heun(w_hat, dW, u_hat, fR, nu, frozen)
            new = new * _mask(g, c.dealias)
            new[0, 0] = 0.0
        return new

    def _heun(self, w_hat, dW, u_hat, fR, nu, frozen):
        c, g, dt = self.config, self.config.grid, self.config.dt

        def F(wh, uh, f):
            return self.deterministic_drift(wh, uh, f, nu)

        def G(wh):
            first, _ = self.noise_terms(wh, need_second=False)
            return 0.0 if first is None else -np.tensordot(dW, first, axes=(0, 0))

        f0, g0 = F(w_hat, u_hat, fR), G(w_hat)
        pred = (w_hat + dt * f0 + g0) * _mask(g, c.dealias)
        pred[0, 0] = 0.0
        if frozen:
            u1, f1 = u_hat, fR
        else:
            u1, f1 = velocity_coeffs(g, pred), self.f_R(pred)
        return w_hat + 0.5 * dt * (f0 + F(pred, u1, f1)) + 0.5 * (g0 + G(pred))

    def diagnostics(self, w_hat, time, fR=None, u_hat=None) -> DiagnosticsRecord:
        with np.errstate(over="ignore", invalid="ignore"):
            return self._diagnostics(w_hat, time, fR, u_hat)

    def _diagnostics(self, w_hat, time, fR, u_hat) -> DiagnosticsRecord:
        c, g = self.config, self.config.grid
        k = c.sobolev_k
        sk = _sob(w_hat, g, k)
        skm1 = _sob(w_hat, g, k - 1)
        if fR is None:
            fR = _f_R(skm1, c.truncation_R)
        if u_hat is None:
            u_hat = velocity_coeffs(g, w_hat)
        grads = np.stack([1j * g.k1 * u_hat, 1j * g.k2 * u_hat])  # (2 derivs, 2 comps, n, n)
        grad_u_inf = float(np.abs(_to_physical_array(grads)).max())
        if not self._tau_crossed and skm1 >= c.truncation_R:
            self._tau_crossed = True
            self.tau_R = time
        return DiagnosticsRecord(
            time=float(time),
            l2=float(np.sqrt(np.sum(np.abs(w_hat) ** 2))),
            sobolev_k=sk,
            sobolev_km1=skm1,
            mean=float(w_hat[0, 0].real),
            f_R=float(fR),
            log_norm=float(math.log(math.e + sk * sk)),
            grad_u_inf=grad_u_inf,
            tau_R_crossed=self._tau_crossed,
        )

    def initial_state(self, omega0: SpectralField | None = None) -> SolverState:
        w0 = initial_condition(self.config) if omega0 is None else omega0
        if w0.grid != self.config.grid:
            raise GridMismatchError("initial vorticity grid does not match config grid")
        self._tau_crossed = False
        self.tau_R = None
        return SolverState(0.0, 0, w0, self.diagnostics(w0.coeffs, 0.0))

    def step(self, state: SolverState) -> SolverState:
        c = self.config
        dW = self.driver.increment(state.step, c.dt)[: len(self.family)]
        new = self.advance(state.omega.coeffs, dW)
        step = state.step + 1
        t = step * c.dt
        if not np.isfinite(new).all():
            raise BlowUpError(f"non-finite vorticity at t={t:.6g} (step {step})", time=t)
        w = SpectralField._wrap(c.grid, new)
        return SolverState(t, step, w, self.diagnostics(new, t))

    def run(self, omega0: SpectralField | None = None, callback=None) -> Trajectory:
        c = self.config
        state = self.initial_state(omega0)
        if c.n_steps:
            bound = cfl_dt(state.velocity, self.family, c.grid, c.cfl_safety)
            if c.dt > bound:
                log.warning("dt=%g exceeds the advective bound %g at t=0", c.dt, bound)
            if c.dt >= diffusive_dt(c.grid, c.viscosity, c.dealias):
                log.warning("dt=%g exceeds the forward-Euler viscous limit %g", c.dt, diffusive_dt(c.grid, c.viscosity, c.dealias))
        snaps, diags = [state], [state.diagnostics]
        for _ in range(c.n_steps):
            try:
                new = self.step(state)
            except BlowUpError as exc:
                exc.diagnostics = diags
                raise
            if callback is not None:
                callback(state, new)
            state = new
            diags.append(state.diagnostics)
            if state.step % c.snapshot_stride == 0 or state.step == c.n_steps:
                snaps.append(state)
        return Trajectory(c, snaps, diags, self.tau_R, self.family)


def _sob(w_hat, grid, s):
    weight = 1.0 + np.power(grid.ksq, s)
    return float(np.sqrt(np.sum(weight * (w_hat.real**2 + w_hat.imag**2))))


def drift(w: SpectralField, config: SimConfig, family: NoiseFamily) -> SpectralField:
    """Ito drift ``nu lap(w) - f_R u.grad(w) + 1/2 sum_i L_i^2 w`` (dealiased, mean-zero)."""
    if abs(w.coeffs[0, 0]) > 1e-12 * max(1.0, float(np.abs(w.coeffs).max())):
        raise ValueError("drift requires a mean-zero vorticity")
    s = Solver(config, driver=BrownianDriver(0, len(family), config.dt), family=family)
    g = config.grid
    wh = w.coeffs
    with np.errstate(over="ignore", invalid="ignore"):
        d = s.deterministic_drift(wh, velocity_coeffs(g, wh), s.f_R(wh), config.viscosity)
        if len(family):
            _, second = s.noise_terms(wh)
            d = d + 0.5 * second.sum(axis=0)
        d = d * _mask(g, config.dealias)
        d[0, 0] = 0.0
    if not np.isfinite(d).all():
        raise BlowUpError("non-finite drift")
    return SpectralField._wrap(g, d)


def diffusion_increment(w: SpectralField, family: NoiseFamily, dW, dealias: bool = True) -> SpectralField:
    """``-sum_i L_i w dW_i``."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (len(family),):
        raise ValueError(f"expected {len(family)} increments, got shape {dW.shape}")
    if not np.isfinite(dW).all():
        raise ValueError("non-finite Brownian increments")
    if not len(family):
        return SpectralField.zeros(w.grid)
    first = family.lie_all(w.coeffs, dealias)
    return SpectralField._wrap(w.grid, -np.tensordot(dW, first, axes=(0, 0)))


def em_step(state: SolverState, config: SimConfig, driver: BrownianDriver, family: NoiseFamily | None = None) -> SolverState:
    """One Euler-Maruyama step of the Ito form."""
    solver = Solver(config.replace(scheme="euler_maruyama"), driver, family)
    solver._tau_crossed = bool(state.diagnostics and state.diagnostics.tau_R_crossed)
    return solver.step(state)


def simulate(
    config: SimConfig,
    driver: BrownianDriver | None = None,
    omega0: SpectralField | None = None,
    family: NoiseFamily | None = None,
    callback=None,
) -> Trajectory:
    """Integrate from ``omega0`` (default: the configured initial condition) to ``t_end``."""
    return Solver(config, driver, family).run(omega0, callback)


def viscous_iteration_sequence(
    config: SimConfig,
    driver: BrownianDriver | None,
    n_max: int,
    omega0: SpectralField | None = None,
    family: NoiseFamily | None = None,
) -> ViscousSequence:
    """Linearized viscous iterates ``n = 1..n_max`` advanced in lockstep.

    Iterate ``n`` has viscosity ``1/n``, starts from ``w0`` truncated to
    ``n * mode_growth`` modes, and is transported by the velocity and
    truncation factor of iterate ``n - 1`` at the same time level.  Iterate 0
    is constant in time.  All iterates share the driver's Brownian path.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    solver = Solver(config, driver, family)
    c, g = config, config.grid
    w0 = initial_condition(c) if omega0 is None else omega0
    iterate0 = smooth_initial(w0, 0, c.mode_growth)
    current = [iterate0.coeffs] + [smooth_initial(w0, n, c.mode_growth).coeffs for n in range(1, n_max + 1)]
    runs = [Solver(c, solver.driver, solver.family) for _ in range(n_max)]
    if c.n_steps and c.dt >= diffusive_dt(g, 1.0, c.dealias):
        log.warning("dt=%g exceeds the forward-Euler viscous limit %g of iterate 1", c.dt, diffusive_dt(g, 1.0, c.dealias))

    def record(n, wh, t, step, diags, snaps, fR):
        d = runs[n - 1].diagnostics(wh, t, fR=fR)
        diags.append(d)
        if step == 0 or step % c.snapshot_stride == 0 or step == c.n_steps:
            snaps.append(SolverState(t, step, SpectralField(g, wh), d))

    all_diags = [[] for _ in range(n_max)]
    all_snaps = [[] for _ in range(n_max)]
    for n in range(1, n_max + 1):
        record(n, current[n], 0.0, 0, all_diags[n - 1], all_snaps[n - 1], solver.f_R(current[n - 1]))
    for step in range(c.n_steps):
        dW = solver.driver.increment(step, c.dt)[: len(solver.family)]
        old = current
        new = [old[0]]
        t = (step + 1) * c.dt
        for n in range(1, n_max + 1):
            u_prev = velocity_coeffs(g, old[n - 1])
            fR = solver.f_R(old[n - 1])
            wn = solver.advance(old[n], dW, u_hat=u_prev, fR=fR, nu=1.0 / n)
            if not np.isfinite(wn).all():
                raise BlowUpError(f"non-finite vorticity in iterate {n} at t={t:.6g}", time=t)
            new.append(wn)
        current = new
        for n in range(1, n_max + 1):
            record(n, current[n], t, step + 1, all_diags[n - 1], all_snaps[n - 1], solver.f_R(current[n - 1]))
    trajs = []
    for n in range(n_max):
        trajs.append(Trajectory(c.replace(viscosity=1.0 / (n + 1)), all_snaps[n], all_diags[n], runs[n].tau_R, solver.family))
    dists = [float(np.sqrt(np.sum(np.abs(current[n] - current[n - 1]) ** 2))) for n in range(1, n_max + 1)]
    return ViscousSequence(trajs, dists, iterate0)
