import json
import math

import numpy as np
import pytest

from stocheuler.noise import NoiseFamily, make_noise_family
from stocheuler.solver import InitialCondition, NoiseParams, SimConfig
from stocheuler.spectral import Grid, SpectralVectorField
from stocheuler.verification import (
    AuditReport,
    Check,
    biot_savart_audit,
    commutator_audit,
    constant_noise_convergence,
    energy_audit,
    heat_mode_convergence,
    identity_suite,
    lagrangian_audit,
    log_norm_ensemble,
    observed_order,
    run_ensemble,
    truncation_audit,
    uniqueness_experiment,
    vanishing_viscosity_report,
)


def small_config(**kw):
    base = dict(
        grid=Grid(16),
        dt=0.01,
        t_end=0.1,
        noise=NoiseParams(2, 5.0, 0.05),
        initial=InitialCondition(seed=1, kmax=3),
        seed=3,
    )
    base.update(kw)
    return SimConfig(**base)


def test_check_bounds_and_nan():
    assert Check("a", 1.0, 0.0, 1.0).ok
    assert not Check("a", 1.5, upper=1.0).ok
    assert not Check("a", math.nan).ok


def test_report_passed_is_derived():
    rep = AuditReport("x", {}, [1.0, 3.0], [Check("a", 0.0, upper=1.0), Check("b", 2.0, upper=1.0)])
    assert rep.passed is False
    assert rep.summary == {"count": 2, "max": 3.0, "mean": 2.0}
    with pytest.raises(TypeError):
        AuditReport("x", {}, [], [], passed=True)
    assert rep.line().startswith("FAIL x:")


def test_report_json_round_trip():
    rep = AuditReport("x", {"R": math.inf}, [], [Check("a", 0.5, upper=1.0)], summary={"v": np.float64(2.0)})
    d = json.loads(json.dumps(rep.to_dict(), allow_nan=False))
    assert d["parameters"]["R"] == "inf" and d["passed"] is True and d["summary"]["v"] == 2.0


def test_zero_samples_vacuous(grid32):
    fam = make_noise_family(grid32, 2, 5.0, 0.1, 2)
    for rep in (biot_savart_audit(grid32, 0), identity_suite(0, fam), commutator_audit(0, fam, 2)):
        assert rep.passed
        assert rep.summary["count"] == 0


def test_biot_savart_audit_small(grid16):
    rep = biot_savart_audit(grid16, 20, seed=5)
    assert rep.passed
    assert rep.summary["max_bound_ratio"] <= 1.0


def test_identity_suite_small(grid32):
    rep = identity_suite(10, make_noise_family(grid32, 2, 5.0, 0.1, 2), seed=2)
    assert rep.passed, rep.line()
    assert rep.parameters["cutoffs"] == [10, 20]


def test_commutator_constant_noise_vanishes():
    # constant xi commutes with derivatives: the top-order terms cancel exactly
    g = Grid(32)
    fam = NoiseFamily.from_fields([SpectralVectorField.constant(g, (0.4, 0.1))])
    rep = commutator_audit(5, fam, 2, seed=1)
    assert rep.summary["max"] < 1e-12
    assert rep.passed


def test_commutator_audit_family():
    rep = commutator_audit(10, make_noise_family(Grid(32), 2, 5.0, 0.1, 2), 2, seed=4)
    assert rep.passed, rep.line()


def test_commutator_grid_too_coarse():
    with pytest.raises(ValueError):
        commutator_audit(1, make_noise_family(Grid(8), 2, 5.0, 0.1, 2), 2)
    with pytest.raises(ValueError):
        commutator_audit(1, make_noise_family(Grid(32), 2, 5.0, 0.1, 2), 1)


def test_energy_audit_zero_data():
    rep = energy_audit(small_config(initial=InitialCondition("zero")))
    assert rep.samples == [0.0, 0.0]
    assert rep.passed


def test_truncation_audit_small():
    rep = truncation_audit(small_config())
    assert rep.passed, rep.line()


def test_uniqueness_delta_zero_bit_identical():
    rep = uniqueness_experiment(small_config(), 0.0)
    assert rep.passed and rep.checks[0].name == "bit_identical"
    with pytest.raises(ValueError):
        uniqueness_experiment(small_config(), -1.0)


def test_uniqueness_small_delta():
    rep = uniqueness_experiment(small_config(t_end=0.2), 1e-3)
    assert len(rep.samples) == 4
    assert rep.passed, rep.line()


def test_vanishing_viscosity_zero_data():
    rep = vanishing_viscosity_report(small_config(initial=InitialCondition("zero"), dt=0.002, t_end=0.01), n_max=3)
    assert rep.samples == [0.0, 0.0, 0.0]
    assert rep.passed
    with pytest.raises(ValueError):
        vanishing_viscosity_report(small_config(), n_max=1)


def test_ensemble_order_and_parallel():
    c = small_config(t_end=0.05)
    serial = run_ensemble(c, 3)
    parallel = run_ensemble(c, 3, workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.final.omega.coeffs, b.final.omega.coeffs)
    assert not np.array_equal(serial[0].final.omega.coeffs, serial[1].final.omega.coeffs)


def test_log_norm_ensemble_inert_cutoff():
    rep = log_norm_ensemble(small_config(t_end=0.05), n_members=3, raised_R=math.inf)
    assert rep.checks[2].value == 0.0 and rep.checks[3].value == 0.0
    assert rep.passed


def test_lagrangian_audit_requires_inviscid():
    with pytest.raises(ValueError):
        lagrangian_audit(small_config(viscosity=0.1))


def test_observed_order_exact():
    dts = [0.1, 0.05, 0.025]
    assert observed_order(dts, [d**1.5 for d in dts]) == pytest.approx(1.5, rel=1e-12)


def test_heat_mode_first_order():
    rep = heat_mode_convergence(Grid(16), 0.5, (1, 1), [0.1, 0.05, 0.025, 0.0125])
    assert rep.passed, rep.line()


def test_constant_noise_zero_amplitude_is_exact():
    rep = constant_noise_convergence(Grid(16), 0.0, ((1, 3, 1.0, 0.0),), [0.1, 0.05], n_paths=1)
    assert max(rep.samples) < 1e-15
