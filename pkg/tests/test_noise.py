import math

import numpy as np
import pytest
import scipy.stats

from scns.errors import AssumptionViolation
from scns.grid import VectorField, build_grid
from scns.noise import (
    JumpSpec,
    NoiseDraw,
    RngStream,
    make_noise_draw,
    sample_jumps,
    sample_wiener,
    small_jump_compensator,
)

ATOMS = JumpSpec(small_atoms=((0.5, 2.0),), large_atoms=((2.0, 1.0),))


# -- JumpSpec validation --------------------------------------------------------

def test_jump_spec_accepts_valid_atoms():
    spec = JumpSpec(small_atoms=((0.25, 4.0), (0.5, 2.0)),
                    large_atoms=((1.0, 0.5), (3.0, 0.1)))
    assert spec.small_linear_rate == 2.0
    assert spec.large_total_rate == 0.6


def test_jump_spec_rejects_misfiled_atoms():
    with pytest.raises(AssumptionViolation) as err:
        JumpSpec(small_atoms=((1.5, 1.0),))
    assert err.value.tag == "Z₀"
    with pytest.raises(AssumptionViolation):
        JumpSpec(small_atoms=((1.0, 1.0),))
    with pytest.raises(AssumptionViolation):
        JumpSpec(large_atoms=((0.5, 1.0),))
    with pytest.raises(AssumptionViolation):
        JumpSpec(small_atoms=((0.5, 0.0),))
    with pytest.raises(AssumptionViolation):
        JumpSpec(large_atoms=((2.0, -1.0),))


# -- Wiener sampling ------------------------------------------------------------

def test_wiener_moments():
    dt = 0.01
    N = 100_000
    stream = RngStream(2024)
    draws = np.array([sample_wiener(1, dt, stream)[0] for _ in range(N)])
    stderr = math.sqrt(dt / N)
    assert abs(draws.mean()) <= 4 * stderr
    assert 0.0094 <= draws.var() <= 0.0106


def test_wiener_reproducible_bitwise():
    a = sample_wiener(16, 0.05, RngStream(7, path_index=3, counter=11))
    b = sample_wiener(16, 0.05, RngStream(7, path_index=3, counter=11))
    assert np.array_equal(a, b)
    c = sample_wiener(16, 0.05, RngStream(7, path_index=4, counter=11))
    assert not np.array_equal(a, c)


def test_wiener_argument_gates():
    with pytest.raises(ValueError):
        sample_wiener(4, 0.0, RngStream(1))
    with pytest.raises(ValueError):
        sample_wiener(0, 0.1, RngStream(1))


# -- jump sampling ----------------------------------------------------------------

def test_no_atoms_no_events():
    stream = RngStream(5)
    for _ in range(50):
        small, large = sample_jumps(0.3, JumpSpec(), stream)
        assert small == () and large == ()


def test_event_times_sorted_in_step():
    stream = RngStream(11)
    spec = JumpSpec(small_atoms=((0.3, 40.0), (0.6, 20.0)))
    for _ in range(50):
        small, _ = sample_jumps(0.5, spec, stream)
        times = [t for t, _ in small]
        assert times == sorted(times)
        assert all(0.0 <= t < 0.5 for t in times)
        assert all(z in (0.3, 0.6) for _, z in small)


def test_large_atom_count_ci():
    # Poisson(2) over unit time, 10^4 paths
    spec = JumpSpec(large_atoms=((2.0, 2.0),))
    counts = []
    for path in range(10_000):
        stream = RngStream(99, path_index=path)
        _, large = sample_jumps(1.0, spec, stream)
        counts.append(len(large))
    mean = np.mean(counts)
    assert 1.92 <= mean <= 2.08


def test_interarrival_times_exponential():
    # one long path; the per-step sampler must reassemble a Poisson process
    lam, dt, steps = 1.0, 0.25, 8000
    spec = JumpSpec(large_atoms=((2.0, lam),))
    stream = RngStream(31)
    times = []
    for k in range(steps):
        _, large = sample_jumps(dt, spec, stream)
        times.extend(k * dt + t for t, _ in large)
    gaps = np.diff(times)
    stat = scipy.stats.kstest(gaps, "expon", args=(0, 1.0 / lam))
    assert stat.pvalue > 0.01


def test_window_counts_uncorrelated():
    spec = JumpSpec(small_atoms=((0.5, 4.0),))
    stream = RngStream(17)
    counts = np.array(
        [len(sample_jumps(0.25, spec, stream)[0]) for _ in range(10_000)]
    )
    corr = np.corrcoef(counts[:-1], counts[1:])[0, 1]
    assert abs(corr) <= 4 / math.sqrt(counts.size - 1)


# -- compensator -------------------------------------------------------------------

def unit_vector_field():
    g = build_grid(2, (1.0, 1.0), (4, 4), "periodic")
    return g, VectorField(g, (np.ones((4, 4)), np.zeros((4, 4))))


def test_compensator_arithmetic():
    g, u = unit_vector_field()
    zero = small_jump_compensator(JumpSpec(), u)
    assert all(np.all(a == 0.0) for a in zero.arrays)
    one = small_jump_compensator(JumpSpec(small_atoms=((0.5, 2.0),)), u)
    assert np.all(one.arrays[0] == -1.0)
    two = small_jump_compensator(
        JumpSpec(small_atoms=((0.25, 4.0), (0.5, 2.0))), u
    )
    assert np.all(two.arrays[0] == -2.0)


def compensated_totals(seed, paths, compensate=True):
    """Scalar compensated small-jump integrals sum(z_e) - T*sum(lam*z)."""
    spec = JumpSpec(small_atoms=((0.5, 2.0), (0.25, 4.0)))
    dt, steps = 0.2, 5
    drift = spec.small_linear_rate * dt * steps if compensate else 0.0
    totals = np.empty(paths)
    for path in range(paths):
        stream = RngStream(seed, path_index=path)
        acc = 0.0
        for _ in range(steps):
            small, _ = sample_jumps(dt, spec, stream)
            acc += sum(z for _, z in small)
        totals[path] = acc - drift
    return totals


def test_compensated_integral_mean_zero():
    totals = compensated_totals(2718, 10_000)
    stderr = totals.std(ddof=1) / math.sqrt(totals.size)
    assert abs(totals.mean()) <= 4 * stderr


def test_uncompensated_integral_fails_mean_zero():
    totals = compensated_totals(2718, 10_000, compensate=False)
    stderr = totals.std(ddof=1) / math.sqrt(totals.size)
    assert abs(totals.mean()) > 4 * stderr


# -- bundled draws -----------------------------------------------------------------

def test_noise_draw_pure_function_of_key():
    spec = ATOMS

    def replay(seed, path, steps):
        stream = RngStream(seed, path_index=path)
        return [make_noise_draw(8, 0.1, spec, stream) for _ in range(steps)]

    a = replay(4, 2, 20)
    b = replay(4, 2, 20)
    for da, db in zip(a, b):
        assert np.array_equal(da.dW, db.dW)
        assert da.small_jumps == db.small_jumps
        assert da.large_jumps == db.large_jumps
    c = replay(4, 3, 20)
    assert any(not np.array_equal(da.dW, dc.dW) for da, dc in zip(a, c))
