"""Monte Carlo driver contracts: determinism across schedulers, abort
semantics, martingale z-tests, and moment-ratio reporting."""

import numpy as np
import pytest

from scns.diagnostics import EnergyConstants, martingale_increment
from scns.errors import ConfigInvalid, InsufficientPaths, PathFailure
from scns.grid import build_grid, scalar_field, vector_field, zero_vector_field
from scns.model import Kinetics, ModelParams, make_noise_coefficients
from scns.noise import JumpSpec, RngStream, make_noise_draw
from scns.operators import OperatorWorkspace
from scns.stepper import State, StepConfig
from scns.ensemble import (
    EnsembleResult,
    canonical_record_times,
    martingale_test,
    moment_bound_report,
    run_ensemble,
    worker_count,
)

SPEC_ATOMS = JumpSpec(small_atoms=((0.5, 2.0), (0.25, 4.0)),
                      large_atoms=((2.0, 0.5),))


def small_setup(*, jump_spec=SPEC_ATOMS, h_gain=-0.4, c_amp=0.3, eps=0.1,
                phi_amp=0.2):
    g = build_grid(2, (1.0, 1.0), (16, 16), "periodic")
    ws = OperatorWorkspace(g)
    X, Y = g.meshgrid()
    n0 = scalar_field(g, 1.0 + 0.5 * np.cos(2 * np.pi * X)
                      * np.sin(2 * np.pi * Y))
    c0 = scalar_field(g, 1.0 + c_amp * np.sin(2 * np.pi * X)
                      * np.cos(2 * np.pi * Y))
    phi = scalar_field(g, phi_amp * np.sin(2 * np.pi * Y))
    psi = vector_field(g, (np.sin(2 * np.pi * Y), np.zeros(g.resolution)))
    noise = make_noise_coefficients(psi, h_gain, 4, jump_spec, ws)
    params = ModelParams(Kinetics(), phi, eps, noise, (1.0, 1.0, 0.05))
    return params, State(0.0, n0, c0, zero_vector_field(g))


def test_canonical_record_times_cadence():
    cfg = StepConfig(dt=1e-3, record_every=4)
    times = canonical_record_times(0.0, 0.01, cfg)
    assert np.allclose(times, [0.0, 0.004, 0.008, 0.01])
    # horizon landing exactly on a cadence tick is not duplicated
    times = canonical_record_times(0.0, 0.008, cfg)
    assert np.allclose(times, [0.0, 0.004, 0.008])
    assert canonical_record_times(2.0, 0.0, cfg).tolist() == [2.0]


def test_worker_count_resolution(monkeypatch):
    monkeypatch.delenv("SCNS_THREADS", raising=False)
    assert worker_count(8, max_workers=3) == 3
    assert worker_count(2, max_workers=5) == 2
    assert worker_count(100) >= 1
    monkeypatch.setenv("SCNS_THREADS", "3")
    assert worker_count(10) == 3
    # explicit argument wins over the environment
    assert worker_count(10, max_workers=2) == 2


def test_too_few_paths_rejected():
    params, st0 = small_setup()
    with pytest.raises(ConfigInvalid, match="2 paths"):
        run_ensemble(st0, params, StepConfig(dt=5e-3), 0.02, 1, 0)


def test_noise_off_paths_identical():
    params, st0 = small_setup()
    cfg = StepConfig(dt=5e-3, record_every=2)
    out = run_ensemble(st0, params, cfg, 0.02, 2, 11, sample_noise=False)
    assert out.paths == 2
    assert np.array_equal(out.me_curves[0], out.me_curves[1])
    assert np.all(out.me_curves == 0.0)
    a, b = out.terminal_records
    assert a.as_tuple() == b.as_tuple()


def test_worker_count_does_not_change_results(monkeypatch):
    params, st0 = small_setup()
    cfg = StepConfig(dt=5e-3, record_every=2)
    serial = run_ensemble(st0, params, cfg, 0.05, 6, 42, max_workers=1)
    monkeypatch.setenv("SCNS_THREADS", "3")
    pooled = run_ensemble(st0, params, cfg, 0.05, 6, 42)
    assert np.array_equal(serial.me_curves, pooled.me_curves)
    assert np.array_equal(serial.sup_energy, pooled.sup_energy)
    assert np.array_equal(serial.diss_integral, pooled.diss_integral)
    assert serial.sup_energy_stats == pooled.sup_energy_stats
    assert serial.sup_me_stats == pooled.sup_me_stats
    for ra, rb in zip(serial.terminal_records, pooled.terminal_records):
        assert ra.as_tuple() == rb.as_tuple()


def test_pooled_statistics_permutation_invariant():
    params, st0 = small_setup()
    cfg = StepConfig(dt=5e-3, record_every=2)
    out = run_ensemble(st0, params, cfg, 0.05, 8, 3)
    rng = np.random.default_rng(0)
    perm = rng.permutation(out.paths)
    shuffled = EnsembleResult(
        paths=out.paths,
        times=out.times,
        me_curves=out.me_curves[perm],
        me_mean=out.me_curves[perm].mean(axis=0),
        me_stderr=out.me_stderr,
        sup_energy=out.sup_energy[perm],
        sup_me=out.sup_me[perm],
        diss_integral=out.diss_integral[perm],
        initial_energy=out.initial_energy[perm],
        terminal_records=tuple(out.terminal_records[i] for i in perm),
        sup_energy_stats=out.sup_energy_stats,
        sup_me_stats=out.sup_me_stats,
        constants=out.constants,
    )
    assert np.allclose(shuffled.me_mean, out.me_mean, atol=1e-15)
    assert moment_bound_report(shuffled, 1) == moment_bound_report(out, 1)
    assert moment_bound_report(shuffled, 2) == moment_bound_report(out, 2)


def test_path_failure_aborts_ensemble(monkeypatch):
    import scns.stepper as stepper_mod

    params, st0 = small_setup()
    cfg = StepConfig(dt=5e-3)
    real_run = stepper_mod.run

    def sabotaged(initial, p, c, t_final, **kwargs):
        if kwargs.get("path_index") == 2:
            raise FloatingPointError("synthetic blow-up")
        return real_run(initial, p, c, t_final, **kwargs)

    monkeypatch.setattr(stepper_mod, "run", sabotaged)
    with pytest.raises(PathFailure) as info:
        run_ensemble(st0, params, cfg, 0.02, 4, 0, max_workers=1)
    assert info.value.path_index == 2
    assert isinstance(info.value.cause, FloatingPointError)


def test_martingale_test_requires_paths():
    with pytest.raises(InsufficientPaths):
        martingale_test(np.zeros((50, 5)))


def test_martingale_test_zero_noise_all_z_zero():
    report = martingale_test(np.zeros((120, 5)))
    assert np.all(report.z_scores == 0.0)
    assert report.max_increment_corr == 0.0
    assert report.passes


def test_ensemble_martingale_passes():
    params, st0 = small_setup()
    cfg = StepConfig(dt=5e-3, record_every=4)
    out = run_ensemble(st0, params, cfg, 0.1, 150, 2026)
    report = martingale_test(out.me_curves)
    assert report.passes, (report.max_abs_z, report.max_increment_corr)
    assert report.z_scores.shape == out.times.shape
    # the pooled terminal mean is within 4 standard errors of zero
    assert abs(out.me_mean[-1]) <= 4.0 * out.me_stderr[-1]


def test_uncompensated_jump_control_fails():
    # add the small-jump compensator back onto honest increments: the
    # resulting curves drift linearly and the z-score grows in time
    params, st0 = small_setup()
    coeffs = params.noise
    dt, steps, paths = 0.05, 6, 400
    u = st0.u
    g = u.grid
    X, Y = g.meshgrid()
    u = vector_field(g, (np.sin(2 * np.pi * Y), np.cos(2 * np.pi * X)))
    norm_sq = float(sum((a * a).sum() for a in u.arrays) * g.cell_volume)
    bias = dt * sum(r * (z * z + 2.0 * z)
                    for z, r in SPEC_ATOMS.small_atoms) * norm_sq
    curves = np.zeros((paths, steps + 1))
    for i in range(paths):
        stream = RngStream(7, i)
        acc = 0.0
        for k in range(steps):
            draw = make_noise_draw(4, dt, SPEC_ATOMS, stream)
            inc = martingale_increment(u, draw, coeffs, 1.0, dt)
            acc += inc + bias
            curves[i, k + 1] = acc
    report = martingale_test(curves)
    assert not report.passes
    z = np.abs(report.z_scores)
    assert z[-1] > 4.0
    assert z[-1] > z[1]


def test_moment_bound_deterministic_prototype():
    # potential-free decaying prototype with the dissipation weights that
    # the deterministic energy audit validated
    params, st0 = small_setup(jump_spec=None, h_gain=0.0, phi_amp=0.0)
    cfg = StepConfig(dt=5e-3, record_every=2)
    out = run_ensemble(st0, params, cfg, 0.25, 2, 0, sample_noise=False,
                       constants=EnergyConstants(1.0, 0.02, 0.02, 0.0))
    r1 = moment_bound_report(out, 1)
    r2 = moment_bound_report(out, 2)
    # decaying prototype: sup is attained at t = 0 and the dissipation
    # integral stays on the scale of the initial entropy gap
    assert r1 <= 1.05
    assert np.isfinite(r2)
    override = moment_bound_report(out, 1, initial_energy=out.initial_energy)
    assert override == r1
    with pytest.raises(ValueError, match="p must be"):
        moment_bound_report(out, 3)


def test_doubling_paths_is_self_consistent():
    params, st0 = small_setup()
    cfg = StepConfig(dt=5e-3, record_every=4)
    base = run_ensemble(st0, params, cfg, 0.1, 100, 5)
    double = run_ensemble(st0, params, cfg, 0.1, 200, 5)
    # the first 100 paths coincide, so the difference is controlled by
    # the Monte Carlo error of the second hundred
    gap = abs(double.me_mean[-1] - base.me_mean[-1])
    assert gap <= 4.0 * base.me_stderr[-1] + 1e-15
    assert np.array_equal(base.me_curves, double.me_curves[:100])
