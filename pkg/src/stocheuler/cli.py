"""Command-line entry point.

Exit codes: 0 success, 1 audit failure, 2 usage or config error,
3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .errors import BlowUpError, ConfigError, SnapshotFormatError
from .io import (
    RunConfig,
    RunManifest,
    config_hash,
    config_to_dict,
    load_config,
    write_diagnostics,
    write_json,
    write_particles,
    write_snapshot,
)
from .lagrangian import ParticleSet, jacobian_determinant, lp_conservation_report, pullback_vorticity_error, run_coupled
from .solver import build_family, simulate
from .spectral import Grid
from .verification import (
    biot_savart_audit,
    commutator_audit,
    energy_audit,
    identity_suite,
    lagrangian_audit,
    log_norm_ensemble,
    truncation_audit,
    uniqueness_experiment,
    vanishing_viscosity_report,
)

log = logging.getLogger("stocheuler")

OUT_ENV = "STOCHEULER_OUT"
EXIT_OK, EXIT_AUDIT, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3
COMMANDS = ("simulate", "converge-viscosity", "verify", "lagrangian", "continuity")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stocheuler", description="Stochastic Euler simulator and audit harness")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "simulate": "integrate one trajectory, write snapshots and diagnostics",
        "converge-viscosity": "viscous iteration sequence against the inviscid run",
        "verify": "run the full audit battery",
        "lagrangian": "coupled particle run and transport-conservation audit",
        "continuity": "coupled perturbed runs and the Gronwall constant",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="path to an INI config file")
        sp.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV})")
        sp.add_argument("--seed", type=int, default=None, help="override the Brownian seed")
        sp.add_argument("--threads", type=int, default=1, help="max worker processes for ensembles")
    return p


def _with_seed(run: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return run
    return RunConfig(run.sim.replace(seed=seed), run.lagrangian, run.verify, run.source)


def _vv_config(run: RunConfig):
    v, sim = run.verify, run.sim
    changes = {}
    if v.vv_dt is not None:
        changes["dt"] = v.vv_dt
    if v.vv_t_end is not None:
        changes["t_end"] = v.vv_t_end
    return sim.replace(**changes) if changes else sim


def _lagrangian_config(run: RunConfig):
    lag, sim = run.lagrangian, run.sim
    changes = {"viscosity": 0.0}
    if lag.n_modes is not None:
        changes["grid"] = Grid(lag.n_modes)
    if lag.dt is not None:
        changes["dt"] = lag.dt
    return sim.replace(**changes)


def _report(manifest, out, rep) -> bool:
    path = write_json(rep.to_dict(), out / f"{rep.name}.json")
    manifest.add(path)
    print(rep.line())
    return rep.passed


def cmd_simulate(run: RunConfig, out: Path, manifest: RunManifest, threads: int) -> int:
    cfg = run.sim
    try:
        tr = simulate(cfg)
    except BlowUpError as exc:
        _blowup(exc, out, manifest)
        return EXIT_BLOWUP
    manifest.add(write_diagnostics(tr.diagnostics, out / "diagnostics.csv"))
    for s in tr.snapshots:
        manifest.add(write_snapshot(s.omega, out / f"omega_{s.step:06d}.seul"))
    summary = {"steps": cfg.n_steps, "tau_R": tr.tau_R, "final": dict(zip(tr.final.diagnostics.FIELDS, tr.final.diagnostics.as_tuple()))}
    manifest.add(write_json(_clean(summary), out / "summary.json"))
    return EXIT_OK


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _blowup(exc: BlowUpError, out: Path, manifest: RunManifest):
    diags = exc.diagnostics or []
    if diags:
        manifest.add(write_diagnostics(diags, out / "diagnostics.csv"))
    manifest.add(write_json({"error": str(exc), "abort_time": exc.time, "recorded_steps": len(diags)}, out / "blowup.json"))
    manifest.status = "blowup"
    print(f"BLOW-UP: {exc}", file=sys.stderr)


def cmd_converge(run: RunConfig, out: Path, manifest: RunManifest, threads: int) -> int:
    rep = vanishing_viscosity_report(_vv_config(run), run.verify.vv_n_max)
    return EXIT_OK if _report(manifest, out, rep) else EXIT_AUDIT


def cmd_continuity(run: RunConfig, out: Path, manifest: RunManifest, threads: int) -> int:
    ok = _report(manifest, out, _renamed(uniqueness_experiment(run.sim, 0.0), "continuity_identical"))
    ok &= _report(manifest, out, uniqueness_experiment(run.sim, run.verify.delta, burn_in=run.verify.burn_in))
    return EXIT_OK if ok else EXIT_AUDIT


def _renamed(rep, name):
    rep.name = name
    return rep


def cmd_lagrangian(run: RunConfig, out: Path, manifest: RunManifest, threads: int) -> int:
    lag = run.lagrangian
    cfg = _lagrangian_config(run)
    coupled = run_coupled(cfg, ParticleSet.lattice(lag.n_side, h=lag.h))
    tr = coupled.trajectory
    manifest.add(write_particles(coupled.particles, out / "particles_final.seup"))
    lp = lp_conservation_report(tr)
    table = {
        "time": lp["time"],
        "ratios": {str(p): lp[p] for p in lp if p != "time"},
        "pullback_error": pullback_vorticity_error(tr.final.omega, coupled.particles, tr.initial.omega),
        "max_det_defect": float(abs(jacobian_determinant(coupled.particles) - 1.0).max()),
    }
    manifest.add(write_json(table, out / "lp_conservation.json"))
    rep = lagrangian_audit(cfg, levels=lag.levels, n_side=lag.n_side, h=lag.h)
    return EXIT_OK if _report(manifest, out, rep) else EXIT_AUDIT


def battery(run: RunConfig, threads: int = 1):
    """Audit reports of the full battery, in a fixed order."""
    cfg, v = run.sim, run.verify
    family = build_family(cfg)
    yield biot_savart_audit(cfg.grid, v.biot_savart_samples, seed=cfg.seed)
    yield identity_suite(v.identity_samples, family, seed=cfg.seed)
    yield commutator_audit(v.commutator_samples, family, cfg.sobolev_k, seed=cfg.seed)
    yield energy_audit(cfg, viscous_nu=v.viscous_nu)
    yield truncation_audit(cfg)
    yield log_norm_ensemble(cfg, v.ensemble_members, raised_R=v.raised_R, workers=threads)
    yield _renamed(uniqueness_experiment(cfg, 0.0), "continuity_identical")
    yield uniqueness_experiment(cfg, v.delta, burn_in=v.burn_in)
    yield vanishing_viscosity_report(_vv_config(run), v.vv_n_max)
    lag = run.lagrangian
    yield lagrangian_audit(_lagrangian_config(run), levels=lag.levels, n_side=lag.n_side, h=lag.h)


def cmd_verify(run: RunConfig, out: Path, manifest: RunManifest, threads: int) -> int:
    results = {}
    for rep in battery(run, threads):
        results[rep.name] = _report(manifest, out, rep)
    manifest.add(write_json({"passed": all(results.values()), "audits": results}, out / "verify_summary.json"))
    return EXIT_OK if all(results.values()) else EXIT_AUDIT


HANDLERS = {
    "simulate": cmd_simulate,
    "converge-viscosity": cmd_converge,
    "verify": cmd_verify,
    "lagrangian": cmd_lagrangian,
    "continuity": cmd_continuity,
}


def run_cli(argv=None) -> int:
    """Parse ``argv`` and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    out_arg = args.out or os.environ.get(OUT_ENV)
    if not out_arg:
        print(f"error: no output directory (pass --out or set {OUT_ENV})", file=sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = _with_seed(load_config(args.config), args.seed)
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(out_arg)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=args.command,
        config_hash=config_hash(run),
        config=config_to_dict(run),
        version=__version__,
        seed=run.sim.seed,
        start_time=time.time(),
    )
    try:
        code = HANDLERS[args.command](run, out, manifest, args.threads)
    except BlowUpError as exc:
        _blowup(exc, out, manifest)
        code = EXIT_BLOWUP
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        manifest.status = "config_error"
        code = EXIT_USAGE
    if manifest.status == "running":
        manifest.status = {EXIT_OK: "ok", EXIT_AUDIT: "audit_failed"}.get(code, "error")
    manifest.end_time = time.time()
    manifest.write(out)
    return code


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
