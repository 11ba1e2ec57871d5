"""Monte Carlo driver over independent noise paths.

Each path i runs with RngStream(seed, i), so the ensemble is a pure
function of (setup, paths, seed).  Workers only affect scheduling: results
are keyed by path index and reduced in that fixed order, which makes the
pooled statistics byte-identical for any worker count (including 1).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .diagnostics import EnergyConstants
from .errors import ConfigInvalid, InsufficientPaths, PathFailure

_WORKER_SETUP = None


@dataclass(frozen=True)
class PathSummary:
    """Reduced view of one path used by the pooled statistics."""

    me_curve: np.ndarray     # cumulative M_E at the canonical record times
    sup_energy: float        # sup_t of E(t)
    diss_integral: float     # int_0^T I(t) dt
    initial_energy: float
    terminal: object         # final DiagnosticsRecord


@dataclass
class EnsembleResult:
    paths: int
    times: np.ndarray
    me_curves: np.ndarray        # paths x times, cumulative per path
    me_mean: np.ndarray
    me_stderr: np.ndarray
    sup_energy: np.ndarray       # per path
    sup_me: np.ndarray           # per path, sup_t |M_E(t)|
    diss_integral: np.ndarray    # per path
    initial_energy: np.ndarray   # per path
    terminal_records: tuple
    sup_energy_stats: dict
    sup_me_stats: dict           # keyed by moment order p
    constants: EnergyConstants


def canonical_record_times(initial_t, t_final, cfg):
    """Record times of an unhalved run: initial, every record_every-th
    step, and the final time."""
    if t_final <= 0.0:
        return np.array([initial_t])
    steps = int(np.ceil(t_final / cfg.dt - 1e-9))
    ticks = [initial_t]
    for j in range(cfg.record_every, steps + 1, cfg.record_every):
        ticks.append(initial_t + j * cfg.dt)
    end = initial_t + t_final
    if abs(ticks[-1] - end) > 1e-12 * max(1.0, abs(end)):
        ticks.append(end)
    return np.array(ticks)


def _summarize_path(records, times, constants):
    rec_t = np.array([r.t for r in records])
    cumulative = np.cumsum([r.me_inc for r in records])
    me_curve = np.interp(times, rec_t, cumulative)
    energy = np.array([
        r.entropy + r.grad_psi_energy + constants.c_dagger * r.kinetic
        for r in records
    ])
    rate = np.array([
        r.diss_n + constants.d1 * r.diss_c4 + constants.d2 * r.diss_lap
        + 0.5 * constants.c_dagger * r.diss_u
        for r in records
    ])
    diss = float(trapezoid(rate, rec_t)) if len(records) > 1 else 0.0
    return PathSummary(
        me_curve=me_curve,
        sup_energy=float(energy.max()),
        diss_integral=diss,
        initial_energy=float(energy[0]),
        terminal=records[-1],
    )


def _init_worker(setup):
    global _WORKER_SETUP
    _WORKER_SETUP = setup


def _run_path(path_index):
    from .stepper import run

    (initial, params, cfg, t_final, seed, c_dagger, constants, times,
     sample_noise) = _WORKER_SETUP
    try:
        out = run(initial, params, cfg, t_final, seed=seed,
                  path_index=path_index, sample_noise=sample_noise,
                  c_dagger=c_dagger)
        return path_index, _summarize_path(out.records, times, constants)
    except Exception as exc:  # noqa: BLE001 - reported as PathFailure
        return path_index, exc


def worker_count(paths, max_workers=None):
    """Worker cap: explicit argument, else SCNS_THREADS, else the CPU
    count; never more than the number of paths."""
    if max_workers is None:
        env = os.environ.get("SCNS_THREADS", "")
        max_workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(int(max_workers), paths))


def run_ensemble(initial, params, cfg, t_final, paths, seed, *,
                 c_dagger=1.0, constants=None, max_workers=None,
                 sample_noise=True):
    """Run `paths` independent paths and pool their diagnostics.

    Any path exception aborts the whole ensemble as PathFailure (silent
    dropping or resampling would bias the martingale statistics).
    """
    if paths < 2:
        raise ConfigInvalid(f"ensemble needs at least 2 paths, got {paths}")
    constants = constants or EnergyConstants(c_dagger=c_dagger)
    times = canonical_record_times(initial.t, float(t_final), cfg)
    setup = (initial, params, cfg, float(t_final), seed, c_dagger,
             constants, times, sample_noise)
    workers = worker_count(paths, max_workers)

    summaries = [None] * paths
    if workers == 1:
        _init_worker(setup)
        results = map(_run_path, range(paths))
        _collect(results, summaries)
    else:
        chunk = max(1, paths // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers,
                                 initializer=_init_worker,
                                 initargs=(setup,)) as pool:
            results = pool.map(_run_path, range(paths), chunksize=chunk)
            _collect(results, summaries)

    me_curves = np.stack([s.me_curve for s in summaries])
    sup_energy = np.array([s.sup_energy for s in summaries])
    sup_me = np.abs(me_curves).max(axis=1)
    stderr = me_curves.std(axis=0, ddof=1) / np.sqrt(paths)
    return EnsembleResult(
        paths=paths,
        times=times,
        me_curves=me_curves,
        me_mean=me_curves.mean(axis=0),
        me_stderr=stderr,
        sup_energy=sup_energy,
        sup_me=sup_me,
        diss_integral=np.array([s.diss_integral for s in summaries]),
        initial_energy=np.array([s.initial_energy for s in summaries]),
        terminal_records=tuple(s.terminal for s in summaries),
        sup_energy_stats=_pooled_stats(sup_energy),
        sup_me_stats={p: _pooled_stats(sup_me**p) for p in (1, 2)},
        constants=constants,
    )


def _pooled_stats(samples):
    q05, q50, q95 = np.quantile(samples, (0.05, 0.5, 0.95))
    return {
        "mean": float(samples.mean()),
        "var": float(samples.var(ddof=1)),
        "q05": float(q05),
        "q50": float(q50),
        "q95": float(q95),
    }


def _collect(results, summaries):
    for index, value in results:
        if isinstance(value, Exception):
            raise PathFailure(index, value)
        summaries[index] = value


@dataclass(frozen=True)
class MartingaleReport:
    z_scores: np.ndarray
    max_abs_z: float
    max_increment_corr: float
    corr_bound: float
    passes: bool


def _safe_corr(a, b):
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def martingale_test(me_curves, min_paths=100):
    """Per-time z-scores of the pooled martingale plus the increment
    orthogonality check.

    Passes when |z(t)| <= 4 at every time and every correlation between
    M_E(s) and a later increment M_E(t) - M_E(s) stays within 4/sqrt(N).
    """
    me_curves = np.asarray(me_curves, dtype=np.float64)
    paths = me_curves.shape[0]
    if paths < min_paths:
        raise InsufficientPaths(
            f"martingale test needs >= {min_paths} paths, got {paths}"
        )
    stderr = me_curves.std(axis=0, ddof=1) / np.sqrt(paths)
    mean = me_curves.mean(axis=0)
    z = np.where(stderr > 0.0, mean / np.where(stderr > 0.0, stderr, 1.0),
                 0.0)
    worst_corr = 0.0
    m = me_curves.shape[1]
    for i in range(m - 1):
        past = me_curves[:, i]
        for j in range(i + 1, m):
            inc = me_curves[:, j] - past
            worst_corr = max(worst_corr, abs(_safe_corr(past, inc)))
    bound = float(4.0 / np.sqrt(paths))
    max_abs_z = float(np.abs(z).max())
    return MartingaleReport(
        z_scores=z,
        max_abs_z=max_abs_z,
        max_increment_corr=worst_corr,
        corr_bound=bound,
        passes=bool(max_abs_z <= 4.0 and worst_corr <= bound),
    )


def moment_bound_report(result: EnsembleResult, p, initial_energy=None):
    """Moment ratio R(p) = E[(sup_t E + int I dt)^p] / (E[E_0^p] + 1).

    The audit cares about stability of R(p) across an eps sweep and across
    doubling the path count, never about its particular value.  The
    denominator defaults to the per-path initial energies recorded by
    run_ensemble; pass initial_energy to override.
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if result.paths < 2:
        raise InsufficientPaths("need at least 2 paths")
    if initial_energy is None:
        initial_energy = result.initial_energy
    initial_energy = np.atleast_1d(np.asarray(initial_energy, dtype=float))
    total = result.sup_energy + result.diss_integral
    numerator = float(np.mean(total**p))
    denominator = float(np.mean(initial_energy**p)) + 1.0
    return numerator / denominator
