"""Numerical audits of the conservation laws, identities and estimates.

Every audit returns an :class:`AuditReport`.  Exact identities are checked
against absolute relative tolerances; estimates with unquantified constants
are checked through the stability of an empirical constant under refinement.
All audits are deterministic given their inputs and seeds.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .biot_savart import curl2d, velocity_from_vorticity
from .errors import GridMismatchError
from .lagrangian import (
    ParticleSet,
    jacobian_determinant,
    lp_conservation_report,
    pullback_vorticity_error,
    run_coupled,
)
from .noise import NoiseFamily, _advect_array
from .solver import (
    BrownianDriver,
    InitialCondition,
    NoiseParams,
    SimConfig,
    Trajectory,
    build_family,
    initial_condition,
    simulate,
    viscous_iteration_sequence,
)
from .spectral import (
    Grid,
    SpectralField,
    SpectralVectorField,
    divergence,
    inner_product,
    lp_norm_physical,
    random_field,
    sobolev_norm,
)

__all__ = [
    "Check",
    "AuditReport",
    "biot_savart_audit",
    "energy_audit",
    "identity_suite",
    "commutator_audit",
    "truncation_audit",
    "log_norm_monitor",
    "log_norm_ensemble",
    "run_ensemble",
    "uniqueness_experiment",
    "vanishing_viscosity_report",
    "lagrangian_audit",
    "constant_noise_convergence",
    "heat_mode_convergence",
    "observed_order",
]

IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class Check:
    """One pass/fail condition ``lower <= value <= upper``."""

    name: str
    value: float
    lower: float = -math.inf
    upper: float = math.inf

    @property
    def ok(self) -> bool:
        v = self.value
        if isinstance(v, float) and math.isnan(v):
            return False
        return self.lower <= v <= self.upper

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "lower": self.lower, "upper": self.upper, "ok": self.ok}


@dataclass
class AuditReport:
    """Outcome of one audit.

    ``samples`` holds per-sample defects or ratios, ``summary`` their max and
    mean plus audit-specific statistics, ``refinement`` the series produced by
    refinement experiments.  ``passed`` is derived from ``checks`` and cannot
    be set independently.
    """

    name: str
    parameters: dict
    samples: list
    checks: list
    tolerance: float | None = None
    summary: dict = field(default_factory=dict)
    refinement: list = field(default_factory=list)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.samples = [float(s) for s in self.samples]
        base = {"count": len(self.samples)}
        if self.samples:
            arr = np.asarray(self.samples)
            base.update(max=float(arr.max()), mean=float(arr.mean()))
        self.summary = {**base, **self.summary}
        self.passed = all(c.ok for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parameters": _jsonable(self.parameters),
            "samples": self.samples,
            "summary": _jsonable(self.summary),
            "checks": [_jsonable(c.to_dict()) for c in self.checks],
            "tolerance": self.tolerance,
            "refinement": _jsonable(self.refinement),
            "passed": self.passed,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{c.name}={c.value:.4g}" for c in self.checks)
        return f"{status} {self.name}: {parts}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def _rel_stability(values, ref) -> float:
    """``max |v / ref - 1|``; 0 when everything is zero."""
    values = np.asarray(values, dtype=float)
    if ref == 0.0:
        return 0.0 if np.all(values == 0.0) else math.inf
    return float(np.max(np.abs(values / ref - 1.0)))


def _config_params(config: SimConfig) -> dict:
    return _jsonable(asdict(config))


# -- exact identities ---------------------------------------------------------


def biot_savart_audit(
    grid: Grid, n_samples: int, seed: int = 0, s_values=(0.0, 1.0, 2.0, 2.5), tol: float = 1e-12
) -> AuditReport:
    """``curl(BS(w)) = w``, ``div(BS(w)) = 0`` and the bound ratio on random fields."""
    rng = np.random.default_rng(seed)
    curl_def, div_def, ratios = [], [], []
    for _ in range(n_samples):
        w = random_field(grid, rng, kmax=grid.max_wavenumber, slope=float(rng.uniform(0.0, 2.0)))
        u = velocity_from_vorticity(w)
        scale = max(float(np.abs(w.coeffs).max()), 1e-300)
        curl_def.append(float(np.abs(curl2d(u).coeffs - w.coeffs).max()) / scale)
        div_def.append(float(np.abs(divergence(u).coeffs).max()) / scale)
        ratios.append(max(sobolev_norm(u, s + 1) / sobolev_norm(w, s) for s in s_values))
    checks = [
        Check("curl_defect", max(curl_def, default=0.0), upper=tol),
        Check("div_defect", max(div_def, default=0.0), upper=tol),
        Check("bound_ratio", max(ratios, default=0.0), upper=1.0 + 1e-10),
    ]
    return AuditReport(
        "biot_savart",
        {"n_modes": grid.n_modes, "n_samples": n_samples, "seed": seed, "s_values": list(s_values)},
        [max(a, b) for a, b in zip(curl_def, div_def)],
        checks,
        tolerance=tol,
        summary={"max_bound_ratio": max(ratios, default=0.0)},
    )


def _identity_samples(family: NoiseFamily, n_samples: int, seed: int):
    g = family.grid
    rng = np.random.default_rng(seed)
    null_d, dual_d, c1, c2 = [], [], [], []
    phys = family.physical
    for _ in range(n_samples):
        a = random_field(g, rng)
        b = random_field(g, rng)
        la = _advect_array(phys, a.coeffs[None], g, True, True)  # (M, n, n)
        lb = _advect_array(phys, b.coeffs[None], g, True, True)
        lla = _advect_array(phys, la, g, True, True)
        na = np.sqrt(np.sum(np.abs(la) ** 2, axis=(1, 2)))
        nb = np.sqrt(np.sum(np.abs(lb) ** 2, axis=(1, 2)))
        # per-field defects, normalized by the size of the terms that cancel
        dual = np.abs(np.sum(la * np.conj(b.coeffs), axis=(1, 2)) + np.sum(a.coeffs * np.conj(lb), axis=(1, 2)))
        null = np.abs(np.sum(a.coeffs * np.conj(lla), axis=(1, 2)).real + na**2)
        ref_dual = na * math.sqrt(inner_product(b, b)) + nb * math.sqrt(inner_product(a, a))
        dual_d.append(float(np.max(np.where(ref_dual > 0, dual / np.where(ref_dual > 0, ref_dual, 1.0), dual), initial=0.0)))
        null_d.append(float(np.max(np.where(na > 0, null / np.where(na > 0, na**2, 1.0), null), initial=0.0)))
        c1.append(float(np.sum(na**2)) / sobolev_norm(a, 1) ** 2)
        c2.append(float(np.sum(np.abs(lla) ** 2)) / sobolev_norm(a, 2) ** 2)
    return null_d, dual_d, c1, c2


def identity_suite(
    n_samples: int, family: NoiseFamily, seed: int = 0, fine_grid: Grid | None = None, tol: float = IDENTITY_TOL
) -> AuditReport:
    """Null and duality identities of ``L_i`` and the transport constants.

    Random fields are band-limited to each grid's dealiasing cutoff.  The
    constants ``sum_i |L_i f|^2 / |f|_{1,2}^2`` and
    ``sum_i |L_i^2 f|^2 / |f|_{2,2}^2`` must agree within 10% between the
    family's grid and ``fine_grid`` (default: twice as fine).
    """
    fine_grid = fine_grid or Grid(2 * family.grid.n_modes)
    fine = family.regrid(fine_grid)
    res = {}
    for label, fam in (("coarse", family), ("fine", fine)):
        res[label] = _identity_samples(fam, n_samples, seed)
    defects = [max(n, d) for n, d in zip(res["coarse"][0] + res["fine"][0], res["coarse"][1] + res["fine"][1])]
    summary = {}
    checks = [
        Check("null_identity_defect", max(res["coarse"][0] + res["fine"][0], default=0.0), upper=tol),
        Check("dual_defect", max(res["coarse"][1] + res["fine"][1], default=0.0), upper=tol),
    ]
    if n_samples:
        for idx, name in ((2, "first_order_constant"), (3, "second_order_constant")):
            cc, cf = max(res["coarse"][idx]), max(res["fine"][idx])
            summary[name] = {"coarse": cc, "fine": cf}
            checks.append(Check(f"{name}_spread", _rel_stability([cf], cc), upper=0.10))
    return AuditReport(
        "identity_suite",
        {
            "n_samples": n_samples,
            "seed": seed,
            "n_fields": len(family),
            "grids": [family.grid.n_modes, fine_grid.n_modes],
            "cutoffs": [family.grid.dealias_cutoff, fine_grid.dealias_cutoff],
        },
        defects,
        checks,
        tolerance=tol,
        summary=summary,
    )


def _commutator_ratio(family: NoiseFamily, w: SpectralField, sobolev_k: int) -> float:
    g = family.grid
    phys = family.physical
    first = _advect_array(phys, w.coeffs[None], g, True, True)
    second = _advect_array(phys, first, g, True, True)
    lhs = 0.0
    for kk in (g.k1, g.k2):
        D = (1j * kk) ** sobolev_k
        val = np.sum((D * w.coeffs) * np.conj(D * second)).real + np.sum(np.abs(D * first) ** 2)
        lhs += abs(float(val))
    nrm = sobolev_norm(w, sobolev_k) ** 2
    return lhs / nrm if nrm > 0 else 0.0


def _safe_band(family: NoiseFamily) -> int:
    """Bandwidth for which ``L_i^2 w`` stays inside the dealiased set."""
    reach = max((max(abs(a), abs(b)) for a, b in family.modes), default=0)
    if not family.modes and len(family):
        reach = int(np.max(family.grid.kmax_abs[np.any(np.abs(family.coefficient_stack) > 0, axis=(0, 1))]))
    band = family.grid.dealias_cutoff - 2 * reach
    if band < 1:
        raise ValueError("grid too coarse for the noise family's modes")
    return band


def commutator_audit(
    n_samples: int,
    family: NoiseFamily,
    sobolev_k: int,
    seed: int = 0,
    fine_grid: Grid | None = None,
    floor: float = 1e-12,
) -> AuditReport:
    """Top-order cancellation ``<D w, D L_i^2 w> + |D L_i w|^2`` against ``|w|_{k,2}^2``.

    ``D`` runs over the pure ``k``-th derivatives along each axis and the
    terms are summed over the family.  Two checks:

    * resolution: the same fields evaluated on both grids give max ratios
      within 25%;
    * bandwidth: fresh fields filling the fine grid's band do not raise the
      max ratio by more than 25%.

    Fields are band-limited so that ``L_i^2 w`` stays inside each grid's
    dealiased set.  A derivative loss would make the ratio grow with the
    bandwidth.  Ratios below ``floor`` count as exact cancellation.
    """
    if sobolev_k < 2:
        raise ValueError("sobolev_k must be >= 2")
    fine_grid = fine_grid or Grid(2 * family.grid.n_modes)
    fine_family = family.regrid(fine_grid)
    rng = np.random.default_rng(seed)
    band_c, band_f = _safe_band(family), _safe_band(fine_family)
    coarse, embedded, wide = [], [], []
    for _ in range(n_samples):
        w = random_field(family.grid, rng, kmax=band_c)
        coarse.append(_commutator_ratio(family, w, sobolev_k))
        embedded.append(_commutator_ratio(fine_family, w.regrid(fine_grid), sobolev_k))
        wide.append(_commutator_ratio(fine_family, random_field(fine_grid, rng, kmax=band_f), sobolev_k))
    checks = []
    summary = {}
    if n_samples:
        mc, me, mw = max(coarse), max(embedded), max(wide)
        summary = {"max_ratio_coarse": mc, "max_ratio_embedded": me, "max_ratio_wide_band": mw}
        mc, me, mw = (0.0 if v <= floor else v for v in (mc, me, mw))
        checks.append(Check("resolution_spread", _rel_stability([me], mc), upper=0.25))
        checks.append(Check("bandwidth_growth", mw / mc - 1.0 if mc > 0 else (math.inf if mw > 0 else 0.0), upper=0.25))
    return AuditReport(
        "commutator_audit",
        {
            "n_samples": n_samples,
            "seed": seed,
            "sobolev_k": sobolev_k,
            "floor": floor,
            "grids": [family.grid.n_modes, fine_grid.n_modes],
            "cutoffs": [family.grid.dealias_cutoff, fine_grid.dealias_cutoff],
        },
        coarse,
        checks,
        tolerance=0.25,
        summary=summary,
    )


# -- trajectory audits --------------------------------------------------------


def _driver(config: SimConfig, dt_fine: float, member: int = 0) -> BrownianDriver:
    return BrownianDriver(config.seed, len(build_family(config)), dt_fine, member=member)


def energy_audit(config: SimConfig, viscous_nu: float = 0.05) -> AuditReport:
    """Inviscid energy drift under dt halving and viscous monotonicity.

    The inviscid runs use ``config`` with ``nu = 0`` at ``dt`` and ``dt/2``;
    the viscous run uses ``config.viscosity`` when positive, else
    ``viscous_nu``.  All runs share one Brownian path.
    """
    dt = config.dt
    driver = _driver(config, dt / 2)
    inv = config.replace(viscosity=0.0)
    drifts = []
    for h in (dt, dt / 2):
        tr = simulate(inv.replace(dt=h), driver)
        e = tr.series("l2") ** 2
        drifts.append(abs(float(e[-1] - e[0])))
    if drifts[1] == 0.0:
        ratio = 2.0 if drifts[0] == 0.0 else math.inf  # exact conservation counts as first order
    else:
        ratio = drifts[0] / drifts[1]
    nu = config.viscosity if config.viscosity > 0 else viscous_nu
    vis = simulate(config.replace(viscosity=nu), driver)
    e = vis.series("l2") ** 2
    incr = np.diff(e)
    worst = float(incr.max()) if incr.size else 0.0
    checks = [Check("inviscid_drift_ratio", ratio, 1.5, 3.0), Check("max_viscous_energy_increase", worst, upper=0.0)]
    return AuditReport(
        "energy_audit",
        {"config": _config_params(config), "viscous_nu": nu},
        drifts,
        checks,
        tolerance=0.0,
        summary={"drift_dt": drifts[0], "drift_dt_half": drifts[1], "ratio": ratio,
                 "viscous_energy_ratio": float(e[-1] / e[0]) if e[0] else 1.0},
        refinement=[{"dt": dt, "drift": drifts[0]}, {"dt": dt / 2, "drift": drifts[1]}],
    )


def truncation_audit(config: SimConfig, margin: float = 1.5, lowered: float = 0.5) -> AuditReport:
    """Cutoff inertness above the observed sup and the tau_R crossing below it."""
    driver = _driver(config, config.dt)
    base = simulate(config.replace(truncation_R=math.inf), driver)
    sup = float(base.series("sobolev_km1").max())
    high = simulate(config.replace(truncation_R=margin * sup), driver)
    identical = all(
        np.array_equal(a.omega.coeffs, b.omega.coeffs) for a, b in zip(base.snapshots, high.snapshots)
    ) and len(base.snapshots) == len(high.snapshots)
    low = simulate(config.replace(truncation_R=lowered * sup), driver)
    checks = [
        Check("bit_identical_above_sup", float(identical), 1.0, 1.0),
        Check("tau_R_crossed_below_sup", float(low.tau_R is not None), 1.0, 1.0),
        Check("high_R_not_crossed", float(high.tau_R is None), 1.0, 1.0),
    ]
    return AuditReport(
        "truncation_audit",
        {"config": _config_params(config), "margin": margin, "lowered": lowered},
        [],
        checks,
        summary={"sup_sobolev_km1": sup, "tau_R_low": low.tau_R, "R_high": margin * sup, "R_low": lowered * sup},
    )


def _member_run(args):
    config, member = args
    return simulate(config, _driver(config, config.dt, member))


def run_ensemble(config: SimConfig, n_members: int, workers: int = 1) -> list:
    """Independent members ``0..n_members-1``; results in member order."""
    jobs = [(config, m) for m in range(n_members)]
    if workers > 1 and n_members > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_member_run, jobs))
    return [_member_run(j) for j in jobs]


def _monitor_stats(trajectories):
    sup_log, sup_grad = [], []
    for tr in trajectories:
        ln = tr.series("log_norm")
        sk = tr.series("sobolev_k")
        w0_inf = lp_norm_physical(tr.initial.omega, math.inf)
        grad = tr.series("grad_u_inf")
        sup_log.append(float(ln.max()))
        sup_grad.append(float(np.max(grad / (1.0 + np.log(math.e + sk) * w0_inf))))
    return sup_log, sup_grad


def log_norm_monitor(trajectories, raised: list | None = None, tol: float = 0.10) -> AuditReport:
    """Ensemble statistics of ``sup_t ln(e + |w_t|_{k,2}^2)`` and the gradient ratio.

    The gradient ratio is ``|grad u_t|_inf / (1 + ln(e + |w_t|_{k,2}) |w_0|_inf)``.
    With ``raised`` (the same ensemble rerun at a larger cutoff R) both
    ensemble means must agree within ``tol``.
    """
    sup_log, sup_grad = _monitor_stats(trajectories)
    n = len(sup_log)
    mean_log = float(np.mean(sup_log)) if n else 0.0
    mean_grad = float(np.mean(sup_grad)) if n else 0.0
    se = float(np.std(sup_log, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    summary = {
        "members": n,
        "mean_sup_log_norm": mean_log,
        "stderr_sup_log_norm": se,
        "max_sup_log_norm": max(sup_log, default=0.0),
        "mean_sup_grad_ratio": mean_grad,
        "max_sup_grad_ratio": max(sup_grad, default=0.0),
    }
    checks = [
        Check("max_sup_log_norm", max(sup_log, default=0.0), upper=1e300),
        Check("max_sup_grad_ratio", max(sup_grad, default=0.0), upper=1e300),
    ]
    if raised is not None:
        rl, rg = _monitor_stats(raised)
        summary.update(raised_mean_sup_log_norm=float(np.mean(rl)), raised_mean_sup_grad_ratio=float(np.mean(rg)))
        checks.append(Check("log_norm_R_sensitivity", _rel_stability([np.mean(rl)], mean_log), upper=tol))
        checks.append(Check("grad_ratio_R_sensitivity", _rel_stability([np.mean(rg)], mean_grad), upper=tol))
    return AuditReport("log_norm_monitor", {"members": n}, sup_log, checks, tolerance=tol, summary=summary)


def log_norm_ensemble(config: SimConfig, n_members: int = 16, raised_R: float = math.inf, workers: int = 1) -> AuditReport:
    """Run the ensemble at ``config.truncation_R`` and at ``raised_R``, then monitor."""
    base = run_ensemble(config, n_members, workers)
    raised = run_ensemble(config.replace(truncation_R=raised_R), n_members, workers)
    rep = log_norm_monitor(base, raised)
    crossed = sum(tr.tau_R is not None for tr in base)
    rep.parameters.update(config=_config_params(config), raised_R=raised_R)
    rep.summary["members_crossing_R"] = crossed
    return rep


def default_perturbation(config: SimConfig) -> SpectralField:
    """Unit-L2 random field with the initial condition's spectral shape."""
    ic = config.initial
    rng = np.random.default_rng([max(ic.seed, 0), 1])
    kmax = min(ic.kmax, config.grid.dealias_cutoff)
    return random_field(config.grid, rng, kmax=kmax, slope=ic.slope, l2_norm=1.0)


def _gronwall_constant(base: Trajectory, other: Trajectory, sobolev_k: int, burn_in: float) -> tuple[float, list]:
    g = base.config.grid
    times = base.series("time")
    sk = base.series("sobolev_k")
    area = np.concatenate([[0.0], np.cumsum(0.5 * (sk[1:] + sk[:-1]) * np.diff(times))])
    weight = 1.0 + np.power(g.ksq, sobolev_k)
    snaps_b = {s.step: s for s in base.snapshots}
    series = []
    d0 = None
    for s in other.snapshots:
        diff = s.omega.coeffs - snaps_b[s.step].omega.coeffs
        val = float(np.sum(weight * np.abs(diff) ** 2))
        if d0 is None:
            d0 = val
        series.append((s.time, val / d0 if d0 > 0 else math.nan, float(area[s.step])))
    c_hat = 0.0
    for t, r, a in series:
        if t > burn_in and a > 0 and r > 0:
            c_hat = max(c_hat, math.log(r) / a)
    return c_hat, series


def uniqueness_experiment(
    config: SimConfig, delta: float, perturbation: SpectralField | None = None, burn_in: float = 0.0, tol: float = 0.25
) -> AuditReport:
    """Coupled runs from ``w0`` and ``w0 + delta * perturbation``.

    For ``delta = 0`` the two trajectories must be bit-identical.  For
    ``delta > 0`` the Gronwall constant ``C`` (smallest value keeping
    ``exp(-C A_t) |wbar_t|_{k,2}^2 / |wbar_0|_{k,2}^2 <= 1`` for ``t > burn_in``,
    ``A_t = int_0^t |w_s|_{k,2} ds``) is estimated for ``delta``, ``delta/2``,
    ``delta/4`` at ``dt`` and for ``delta`` at ``dt/2``; all must agree with
    the first within ``tol``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    w0 = initial_condition(config)
    pert = default_perturbation(config) if perturbation is None else perturbation
    if pert.grid != config.grid:
        raise GridMismatchError("perturbation grid does not match config grid")
    k = config.sobolev_k
    driver = _driver(config, config.dt / 2)
    base = simulate(config, driver, w0)
    params = {"config": _config_params(config), "delta": delta, "burn_in": burn_in}
    if delta == 0:
        other = simulate(config, driver, w0 + pert * 0.0)
        same = len(other.snapshots) == len(base.snapshots) and all(
            np.array_equal(a.omega.coeffs, b.omega.coeffs) for a, b in zip(base.snapshots, other.snapshots)
        )
        return AuditReport(
            "uniqueness_experiment", params, [], [Check("bit_identical", float(same), 1.0, 1.0)],
            summary={"C_hat": None},
        )
    runs = []
    for d in (delta, delta / 2, delta / 4):
        other = simulate(config, driver, w0 + pert * d)
        c, series = _gronwall_constant(base, other, k, burn_in)
        runs.append({"delta": d, "dt": config.dt, "C_hat": c, "series": series})
    half = config.replace(dt=config.dt / 2)
    base_h = simulate(half, driver, w0)
    other = simulate(half, driver, w0 + pert * delta)
    c, series = _gronwall_constant(base_h, other, k, burn_in)
    runs.append({"delta": delta, "dt": half.dt, "C_hat": c, "series": series})
    cs = [r["C_hat"] for r in runs]
    spread = _rel_stability(cs[1:], cs[0])
    return AuditReport(
        "uniqueness_experiment",
        params,
        cs,
        [Check("C_hat_spread", spread, upper=tol)],
        tolerance=tol,
        summary={"C_hat": cs[0], "C_hat_all": cs},
        refinement=runs,
    )


def vanishing_viscosity_report(config: SimConfig, n_max: int = 8, factor: float = 4.0) -> AuditReport:
    """Gap between viscous iterates and the inviscid run on a shared path."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    driver = _driver(config, config.dt)
    seq = viscous_iteration_sequence(config, driver, n_max)
    direct = simulate(config.replace(viscosity=0.0), driver)
    wd = direct.final.omega.coeffs
    gaps = [float(np.sqrt(np.sum(np.abs(tr.final.omega.coeffs - wd) ** 2))) for tr in seq.trajectories]
    ratio = gaps[0] / gaps[-1] if gaps[-1] > 0 else (math.inf if gaps[0] > 0 else factor)
    return AuditReport(
        "vanishing_viscosity",
        {"config": _config_params(config), "n_max": n_max, "factor": factor},
        gaps,
        [Check("gap_reduction", ratio, lower=factor)],
        tolerance=factor,
        summary={"gap_first": gaps[0], "gap_last": gaps[-1], "iterate_distances": seq.distances},
        refinement=[{"n": n + 1, "viscosity": 1.0 / (n + 1), "gap": g} for n, g in enumerate(gaps)],
    )


def lagrangian_audit(
    config: SimConfig, levels: int = 3, n_side: int = 12, h: float = 1e-3, lp_tol: float = 0.01
) -> AuditReport:
    """Coupled field/particle runs under simultaneous dt halving and grid doubling.

    Level 0 uses ``config``; level ``j`` uses ``n_modes * 2^j`` and
    ``dt / 2^j``.  All levels share one Brownian path.  Pullback error and
    ``max|det J - 1|`` must decrease level to level and the final L^p ratios
    must lie within ``lp_tol`` of 1.
    """
    if config.viscosity != 0:
        raise ValueError("transport conservation needs an inviscid configuration")
    driver = _driver(config, config.dt / 2 ** (levels - 1))
    rows = []
    for j in range(levels):
        cfg = config.replace(grid=Grid(config.grid.n_modes * 2**j), dt=config.dt / 2**j)
        run = run_coupled(cfg, ParticleSet.lattice(n_side, h=h), driver)
        tr = run.trajectory
        lp = lp_conservation_report(tr)
        rows.append(
            {
                "n_modes": cfg.grid.n_modes,
                "dt": cfg.dt,
                "pullback_error": pullback_vorticity_error(tr.final.omega, run.particles, tr.initial.omega),
                "det_defect": float(np.abs(jacobian_determinant(run.particles) - 1.0).max()),
                "lp_ratio": {str(p): lp[p][-1] for p in (2, 4, math.inf)},
            }
        )
    pull = [r["pullback_error"] for r in rows]
    det = [r["det_defect"] for r in rows]
    mono = lambda xs: float(all(b < a for a, b in zip(xs, xs[1:])))  # noqa: E731
    worst_lp = max(abs(v - 1.0) for v in rows[-1]["lp_ratio"].values())
    checks = [
        Check("pullback_decreasing", mono(pull), 1.0, 1.0),
        Check("det_defect_decreasing", mono(det), 1.0, 1.0),
        Check("finest_lp_deviation", worst_lp, upper=lp_tol),
    ]
    return AuditReport(
        "lagrangian_audit",
        {"config": _config_params(config), "levels": levels, "n_side": n_side, "h": h},
        pull,
        checks,
        tolerance=lp_tol,
        summary={"pullback": pull, "det_defect": det},
        refinement=rows,
    )


# -- exact-solution convergence ------------------------------------------------


def observed_order(dts, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    return float(np.polyfit(np.log(np.asarray(dts, float)), np.log(np.asarray(errors, float)), 1)[0])


def constant_noise_convergence(
    grid: Grid,
    amplitude: float,
    modes,
    dts,
    n_paths: int = 8,
    seed: int = 0,
    t_end: float = 1.0,
    min_order: float = 0.5,
) -> AuditReport:
    """Strong error against the exact translation under ``xi = (a, 0)``.

    With ``u . grad(w) = 0`` for the chosen initial modes the exact solution
    is ``w_0(x1 - a W_t, x2)``, i.e. ``w_hat_0(k) exp(-i a k1 W_t)``.  The
    error is the L2 distance at ``t_end`` averaged over ``n_paths``.
    """
    dts = sorted(dts, reverse=True)
    fam = NoiseFamily.from_fields([SpectralVectorField.constant(grid, (amplitude, 0.0))])
    ic = InitialCondition("modes", modes=tuple(tuple(m) for m in modes))
    errs = np.zeros((n_paths, len(dts)))
    for p in range(n_paths):
        drv = BrownianDriver(seed, 1, dts[-1], member=p)
        for j, dt in enumerate(dts):
            cfg = SimConfig(grid=grid, dt=dt, t_end=t_end, initial=ic, noise=NoiseParams(), seed=seed)
            tr = simulate(cfg, drv, family=fam)
            W = drv.path(cfg.n_steps, dt)[-1, 0]
            exact = tr.initial.omega.coeffs * np.exp(-1j * amplitude * grid.k1 * W)
            errs[p, j] = np.sqrt(np.sum(np.abs(tr.final.omega.coeffs - exact) ** 2))
    mean = errs.mean(axis=0)
    order = observed_order(dts, mean)
    return AuditReport(
        "constant_noise_convergence",
        {"n_modes": grid.n_modes, "amplitude": amplitude, "modes": [list(m) for m in modes], "dts": dts,
         "n_paths": n_paths, "seed": seed, "t_end": t_end},
        list(mean),
        [Check("observed_order", order, lower=min_order)],
        tolerance=min_order,
        summary={"order": order},
        refinement=[{"dt": dt, "error": float(e)} for dt, e in zip(dts, mean)],
    )


def heat_mode_convergence(grid: Grid, nu: float, mode, dts, t_end: float = 1.0) -> AuditReport:
    """Single mode under pure viscosity against ``exp(-nu |k|^2 T)``; order 1 expected."""
    k1, k2 = mode
    ic = InitialCondition("modes", modes=((k1, k2, 1.0, 0.0),))
    dts = sorted(dts, reverse=True)
    errs = []
    for dt in dts:
        cfg = SimConfig(grid=grid, dt=dt, t_end=t_end, viscosity=nu, initial=ic)
        tr = simulate(cfg)
        exact = tr.initial.omega.coeffs * math.exp(-nu * (k1 * k1 + k2 * k2) * t_end)
        errs.append(float(np.sqrt(np.sum(np.abs(tr.final.omega.coeffs - exact) ** 2))))
    order = observed_order(dts, errs)
    return AuditReport(
        "heat_mode_convergence",
        {"n_modes": grid.n_modes, "nu": nu, "mode": list(mode), "dts": dts, "t_end": t_end},
        errs,
        [Check("observed_order", order, 0.9, 1.1)],
        summary={"order": order},
        refinement=[{"dt": dt, "error": e} for dt, e in zip(dts, errs)],
    )
