"""Counter-keyed random sampling: Wiener increments and atomic jumps.

Every sampling call derives a fresh Philox generator from the key
(seed, path_index, counter) and then advances the counter, so the sequence
of draws is a pure function of the key tuple: ensembles parallelize without
stream synchronization and any path can be replayed bit-exactly.

The jump measure is a finite list of atoms (z, rate), split by mark norm:
small atoms (0 < z < 1) feed the compensated integral and carry the exact
compensator drift -u * sum(rate * z); large atoms (z >= 1) are used raw.
Infinite-activity measures are out of scope; approximating them is the
caller's modelling decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation
from .grid import VectorField

SMALL_TAG = "Z₀"


@dataclass(frozen=True)
class JumpSpec:
    """Atomic jump intensity measure, split into mark-norm regions.

    small_atoms and large_atoms are sequences of (z_norm, rate) pairs with
    0 < z_norm < 1 on the small side and z_norm >= 1 on the large side;
    all rates are per unit time and strictly positive.
    """

    small_atoms: tuple = ()
    large_atoms: tuple = ()

    def __post_init__(self):
        small = tuple((float(z), float(lam)) for z, lam in self.small_atoms)
        large = tuple((float(z), float(lam)) for z, lam in self.large_atoms)
        for z, lam in small:
            if not 0.0 < z < 1.0:
                raise AssumptionViolation(
                    SMALL_TAG, f"small atoms need 0 < z < 1, got z = {z}"
                )
            if lam <= 0.0 or not math.isfinite(lam):
                raise AssumptionViolation(
                    SMALL_TAG, f"atom rates must be positive and finite, got {lam}"
                )
        for z, lam in large:
            if z < 1.0:
                raise AssumptionViolation(
                    SMALL_TAG, f"large atoms need z >= 1, got z = {z}"
                )
            if lam <= 0.0 or not math.isfinite(lam):
                raise AssumptionViolation(
                    SMALL_TAG, f"atom rates must be positive and finite, got {lam}"
                )
        object.__setattr__(self, "small_atoms", small)
        object.__setattr__(self, "large_atoms", large)

    @property
    def small_linear_rate(self):
        """sum(rate * z) over small atoms: the compensator drift magnitude."""
        return sum(lam * z for z, lam in self.small_atoms)

    @property
    def large_total_rate(self):
        return sum(lam for _, lam in self.large_atoms)


@dataclass
class RngStream:
    """Counter-based stream: (seed, path_index, counter) keys each draw."""

    seed: int
    path_index: int = 0
    counter: int = 0

    def generator(self):
        """Fresh generator for the current counter; advances the counter."""
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.path_index, self.counter)
        )
        self.counter += 1
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseDraw:
    """One step's worth of randomness.

    dW holds K per-mode Wiener increments (variance dt); the jump lists
    hold (time offset within the step, z_norm) pairs sorted by time.
    """

    dW: np.ndarray
    small_jumps: tuple
    large_jumps: tuple


def sample_wiener(K, dt, rng: RngStream):
    """K independent N(0, dt) increments."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if K < 1:
        raise ValueError(f"need at least one mode, got {K}")
    return rng.generator().standard_normal(K) * math.sqrt(dt)


def _atom_events(gen, atoms, dt):
    events = []
    for z, lam in atoms:
        count = int(gen.poisson(lam * dt))
        if count:
            times = gen.random(count) * dt
            events.extend((float(t), z) for t in times)
    events.sort()
    return tuple(events)


def sample_jumps(dt, spec: JumpSpec, rng: RngStream):
    """Poisson(rate*dt) events per atom with uniform times in [0, dt)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    gen = rng.generator()
    small = _atom_events(gen, spec.small_atoms, dt)
    large = _atom_events(gen, spec.large_atoms, dt)
    return small, large


def make_noise_draw(K, dt, spec: JumpSpec, rng: RngStream):
    """Bundle one step of Wiener and jump randomness (two counter draws)."""
    dW = sample_wiener(K, dt, rng)
    small, large = sample_jumps(dt, spec, rng)
    return NoiseDraw(dW, small, large)


def small_jump_compensator(spec: JumpSpec, u: VectorField):
    """Drift -(sum rate*z) * u that compensates raw small-jump sums."""
    rate = spec.small_linear_rate
    return VectorField(u.grid, tuple(-rate * a for a in u.arrays))
