"""Acceptance suite on the reference configuration.

Each test prints one ``PASS``/``FAIL`` line; the lines are collected in the
terminal summary.
"""

import json
import math
from pathlib import Path

import pytest

from stocheuler.cli import _lagrangian_config, _vv_config, run_cli
from stocheuler.io import load_config
from stocheuler.solver import build_family
from stocheuler.spectral import Grid
from stocheuler.verification import (
    biot_savart_audit,
    constant_noise_convergence,
    energy_audit,
    heat_mode_convergence,
    identity_suite,
    lagrangian_audit,
    log_norm_ensemble,
    truncation_audit,
    uniqueness_experiment,
    vanishing_viscosity_report,
)

REFERENCE = Path(__file__).resolve().parents[1] / "configs" / "reference.ini"


@pytest.fixture(scope="module")
def reference():
    return load_config(REFERENCE)


def record(log, label, reports):
    ok = all(r.passed for r in reports)
    detail = "; ".join(r.line() for r in reports)
    log(f"{'PASS' if ok else 'FAIL'} [{label}] {detail}")
    return ok


def test_01_biot_savart_exactness(reference, acceptance_log):
    rep = biot_savart_audit(reference.sim.grid, 1000, seed=reference.sim.seed)
    assert record(acceptance_log, "1 biot-savart exactness", [rep])


def test_02_operator_identities(reference, acceptance_log):
    rep = identity_suite(1000, build_family(reference.sim), seed=reference.sim.seed)
    assert rep.summary["count"] == 2000
    assert record(acceptance_log, "2 operator identities", [rep])


def test_03_energy(reference, acceptance_log):
    rep = energy_audit(reference.sim, viscous_nu=reference.verify.viscous_nu)
    assert record(acceptance_log, "3 inviscid L2 conservation", [rep])


def test_04_exact_solution_convergence(acceptance_log):
    dts = [2.0**-j for j in range(4, 11)]
    transport = constant_noise_convergence(
        Grid(16), 0.5, ((1, 3, 1.0, 0.0), (3, -1, 0.0, 0.5)), dts, n_paths=8, seed=0, t_end=1.0, min_order=0.5
    )
    heat = heat_mode_convergence(Grid(16), 1.0, (1, 0), [0.1, 0.05, 0.025, 0.0125, 0.00625], t_end=1.0)
    assert record(acceptance_log, "4 exact-solution convergence", [transport, heat])


def test_05_lagrangian_transport(reference, acceptance_log):
    lag = reference.lagrangian
    rep = lagrangian_audit(_lagrangian_config(reference), levels=lag.levels, n_side=lag.n_side, h=lag.h, lp_tol=0.01)
    assert record(acceptance_log, "5 lagrangian transport", [rep])


def test_06_truncation(reference, acceptance_log):
    rep = truncation_audit(reference.sim)
    assert record(acceptance_log, "6 truncation inertness and tau_R", [rep])


def test_07_uniqueness(reference, acceptance_log):
    same = uniqueness_experiment(reference.sim, 0.0)
    pert = uniqueness_experiment(reference.sim, reference.verify.delta, tol=0.25)
    assert record(acceptance_log, "7 uniqueness and continuity", [same, pert])


def test_08_vanishing_viscosity(reference, acceptance_log):
    rep = vanishing_viscosity_report(_vv_config(reference), n_max=8, factor=4.0)
    assert record(acceptance_log, "8 vanishing viscosity", [rep])


def test_09_log_norm_and_gradient(reference, acceptance_log):
    rep = log_norm_ensemble(reference.sim, n_members=16, raised_R=math.inf)
    assert math.isfinite(rep.summary["max_sup_log_norm"])
    assert math.isfinite(rep.summary["max_sup_grad_ratio"])
    assert record(acceptance_log, "9 log-norm and gradient bounds", [rep])


def _strip_times(path):
    man = json.loads(path.read_text())
    man.pop("start_time")
    man.pop("end_time")
    return man


def test_10_reproducibility(acceptance_log, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [run_cli(["verify", "--config", str(REFERENCE), "--out", str(d)]) for d in (a, b)]
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    differing = [n for n in names if n != "manifest.json" and (a / n).read_bytes() != (b / n).read_bytes()]
    same_manifest = _strip_times(a / "manifest.json") == _strip_times(b / "manifest.json")
    ok = codes == [0, 0] and not differing and same_manifest
    acceptance_log(
        f"{'PASS' if ok else 'FAIL'} [10 reproducibility] exit_codes={codes}, files={len(names)}, "
        f"differing={differing}, manifest_equal_without_times={same_manifest}"
    )
    assert ok
