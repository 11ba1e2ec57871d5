"""Entropy-energy functionals, dissipation integrals, and inequality audits.

Everything here is a pure function of states, records, or receipts; nothing
re-simulates.  Stochastic increments are reassembled from the exact draws
the stepper consumed so the pathwise bookkeeping matches the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import xlogy

from .errors import (
    MissingIncrements,
    MissingNoiseRecord,
    PeriodicDomain,
    WindowTooShort,
)
from .grid import ScalarField, inner_vector, integrate, lp_norm
from .model import (
    NoiseCoefficients,
    apply_g,
    h_eps,
    psi_values,
    rho_values,
)
from .noise import JumpSpec
from .operators import gradient_values, laplacian_values

FLOOR = 1e-12

# serialization order is frozen; cli_io writes exactly these names
FIELD_NAMES = (
    "t", "mass_n", "linf_c", "entropy", "grad_psi_energy", "kinetic",
    "diss_n", "diss_c4", "diss_lap", "diss_u", "me_inc", "ms_ratio",
    "aux_grad_sqrt_n", "aux_grad_c14", "aux_n_l53", "aux_u_l103",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of the diagnostics stream (field order is the wire order)."""

    t: float
    mass_n: float
    linf_c: float
    entropy: float
    grad_psi_energy: float
    kinetic: float
    diss_n: float
    diss_c4: float
    diss_lap: float
    diss_u: float
    me_inc: float
    ms_ratio: object      # float on box grids, None on periodic ones
    aux_grad_sqrt_n: float
    aux_grad_c14: float
    aux_n_l53: float
    aux_u_l103: float

    def as_tuple(self):
        return tuple(getattr(self, name) for name in FIELD_NAMES)


def _grad_square(values, grid, tag):
    parts = gradient_values(values, grid, tag)
    return sum(p * p for p in parts)


def diag_gradient(values, grid):
    """Gradient for integrand evaluation: centered in the interior, wrapped
    on periodic grids, one-sided two-point at walls.

    Unlike the stencil operators this makes no ghost assumption, so it is
    exact on linear profiles up to the walls and safe for fields that do
    not satisfy the variable's boundary condition.
    """
    out = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        if grid.periodic:
            hi = np.roll(values, -1, axis=axis)
            lo = np.roll(values, 1, axis=axis)
            out.append((hi - lo) / (2.0 * h))
            continue
        g = np.empty(grid.resolution)
        mid = [slice(None)] * grid.dim
        hi_sl = [slice(None)] * grid.dim
        lo_sl = [slice(None)] * grid.dim
        mid[axis], hi_sl[axis], lo_sl[axis] = slice(1, -1), slice(2, None), slice(None, -2)
        g[tuple(mid)] = (values[tuple(hi_sl)] - values[tuple(lo_sl)]) / (2.0 * h)
        first = [slice(None)] * grid.dim
        second = [slice(None)] * grid.dim
        first[axis], second[axis] = 0, 1
        g[tuple(first)] = (values[tuple(second)] - values[tuple(first)]) / h
        first[axis], second[axis] = -1, -2
        g[tuple(first)] = (values[tuple(first)] - values[tuple(second)]) / h
        out.append(g)
    return out


def _diag_grad_square(values, grid):
    return sum(p * p for p in diag_gradient(values, grid))


def entropy_part(state):
    """Integral of n ln n with the continuous extension 0 ln 0 = 0."""
    return integrate(ScalarField(state.n.grid, xlogy(state.n.values,
                                                     state.n.values)))


def grad_psi_energy(state, kin):
    """Half the squared gradient energy of Psi(c), via grad Psi = grad c /
    sqrt(theta(c))."""
    grid = state.c.grid
    theta = np.maximum(kin.theta(np.maximum(state.c.values, FLOOR)), FLOOR)
    gc2 = _grad_square(state.c.values, grid, grid.bc_c)
    return 0.5 * integrate(ScalarField(grid, gc2 / theta))


def kinetic_energy(state):
    """Integral of |u|^2 (unweighted; multiply by c_dagger downstream)."""
    grid = state.u.grid
    return integrate(ScalarField(grid, sum(a * a for a in state.u.arrays)))


def entropy_energy(state, kin, c_dagger):
    """The Lyapunov functional: entropy + Psi-gradient energy + weighted
    kinetic energy."""
    if c_dagger <= 0:
        raise ValueError(f"c_dagger must be positive, got {c_dagger}")
    return (entropy_part(state) + grad_psi_energy(state, kin)
            + c_dagger * kinetic_energy(state))


def dissipation(state, kin, n_floor=FLOOR, c_floor=FLOOR):
    """Dissipation integrals, reported unweighted so any (d1, d2, c_dagger)
    combination can be formed downstream.

    Returns
    -------
    tuple of four floats
        (1/2) int |grad n|^2/n, int |grad c|^4/c^3, int |lap c|^2/c,
        int |grad u|^2, each with the singular denominator floored.
    """
    grid = state.n.grid
    nf = np.maximum(state.n.values, n_floor)
    cf = np.maximum(state.c.values, c_floor)
    gn2 = _diag_grad_square(state.n.values, grid)
    gc2 = _diag_grad_square(state.c.values, grid)
    lap_c = laplacian_values(state.c.values, grid, grid.bc_c)
    gu2 = sum(_diag_grad_square(a, grid) for a in state.u.arrays)
    diss_n = 0.5 * integrate(ScalarField(grid, gn2 / nf))
    diss_c4 = integrate(ScalarField(grid, gc2 * gc2 / cf**3))
    diss_lap = integrate(ScalarField(grid, lap_c * lap_c / cf))
    diss_u = integrate(ScalarField(grid, gu2))
    return diss_n, diss_c4, diss_lap, diss_u


def aux_bounds(state):
    """The uniform-bound quantities: ||grad sqrt(n)||_2^2,
    ||grad c^(1/4)||_4^4, ||n||_{5/3}, ||u||_{10/3}."""
    grid = state.n.grid
    g_sqrt_n = _diag_grad_square(np.sqrt(state.n.values), grid)
    g_c14 = _diag_grad_square(np.power(state.c.values, 0.25), grid)
    speed = np.sqrt(sum(a * a for a in state.u.arrays))
    return (
        integrate(ScalarField(grid, g_sqrt_n)),
        integrate(ScalarField(grid, g_c14 * g_c14)),
        lp_norm(state.n, 5.0 / 3.0),
        lp_norm(ScalarField(grid, speed), 10.0 / 3.0),
    )


# -- martingale bookkeeping ---------------------------------------------------

def _energy_jump_weight(z, large):
    # ||K||^2 + 2<u, K> = (z^2 + 2z) ||u||^2 for K = z u; the large-mark
    # map substitutes 1/z for z
    w = 1.0 / z if large else z
    return w * w + 2.0 * w


def martingale_increment(u_pre, draw, coeffs: NoiseCoefficients, c_dagger, dt):
    """Energy-martingale increment over one step, from the exact draw.

    Accumulates 2 c_dagger <u, g(u) dW> plus the compensated small-jump and
    large-jump energy terms, all evaluated at the frozen pre-noise velocity
    so the increment is exactly conditionally mean-zero.
    """
    spec = coeffs.jump_spec or JumpSpec()
    norm_sq = inner_vector(u_pre, u_pre)
    wiener = 2.0 * c_dagger * inner_vector(u_pre, apply_g(u_pre, coeffs, draw.dW))
    small = sum(_energy_jump_weight(z, large=False)
                for _, z in draw.small_jumps)
    small -= dt * sum(rate * _energy_jump_weight(z, large=False)
                      for z, rate in spec.small_atoms)
    large = sum(_energy_jump_weight(z, large=True)
                for _, z in draw.large_jumps)
    large -= dt * sum(rate * _energy_jump_weight(z, large=True)
                      for z, rate in spec.large_atoms)
    return wiener + c_dagger * (small + large) * norm_sq


# -- entropy identity ---------------------------------------------------------

def _kin_derivatives(kin, s):
    """(theta', theta'', f') at s; closed forms for the prototype pair,
    central differences otherwise."""
    if kin.prototype:
        slope = kin.f_scale / kin.chi_value
        return (np.full_like(s, slope), np.zeros_like(s),
                np.full_like(s, kin.f_scale))
    h = 1e-5 * max(1.0, float(np.abs(s).max()))
    tp = (kin.theta(s + h) - kin.theta(s - h)) / (2.0 * h)
    tpp = (kin.theta(s + h) - 2.0 * kin.theta(s) + kin.theta(s - h)) / (h * h)
    fp = (kin.f(s + h) - kin.f(s - h)) / (2.0 * h)
    return tp, tpp, fp


def _hessian_square(values, grid, tag):
    """Sum over (i, j) of squared second differences, by differentiating
    the gradient components once more with the same ghost convention."""
    first = gradient_values(values, grid, tag)
    total = np.zeros(grid.resolution)
    for g in first:
        for h in gradient_values(g, grid, tag):
            total += h * h
    return total


def _boundary_identity_term(c_values, theta_vals, grid):
    """(1/2) boundary integral of (1/theta) d|grad c|^2/dnu by one-sided
    quotients in the first cell layer."""
    w = _grad_square(c_values, grid, grid.bc_c)
    total = 0.0
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        area = grid.cell_volume / h
        for side in (0, -1):
            edge = [slice(None)] * grid.dim
            inner_sl = [slice(None)] * grid.dim
            edge[axis] = side
            inner_sl[axis] = 1 if side == 0 else -2
            quotient = (w[tuple(edge)] - w[tuple(inner_sl)]) / h
            total += float((quotient / theta_vals[tuple(edge)]).sum()) * area
    return 0.5 * total


def entropy_identity_residual(window, kin, eps):
    """Sup over window steps of the discrete entropy-identity residual.

    For each consecutive pair the time-difference quotient of
    int n ln n + (1/2) int |grad Psi(c)|^2 is compared against the
    dissipation terms int |grad n|^2/n + int theta(c) |D^2 rho(c)|^2 and
    the right-hand side: the h_eps(n) (f theta'/(2 theta^2) - f'/theta)
    |grad c|^2 term, the two u.grad c coupling terms, the
    (1/2) theta''/theta^2 |grad c|^4 term, and, on box grids, the boundary
    integral of (1/(2 theta)) d|grad c|^2/dnu.  All spatial terms are
    evaluated at the older state, so the residual is first order in dt and
    in the mesh.
    """
    if window is None or len(window.states) < 2:
        raise WindowTooShort("need at least two consecutive states")
    if not window.receipts or len(window.receipts) != len(window.states) - 1:
        raise MissingNoiseRecord(
            "window lacks per-step receipts; rerun with keep_window=True"
        )
    states = window.states
    grid = states[0].n.grid

    def half_energy(s):
        return entropy_part(s) + grad_psi_energy(s, kin)

    worst = 0.0
    energies = [half_energy(s) for s in states]
    for k, receipt in enumerate(window.receipts):
        old = states[k]
        dt = receipt.dt
        quotient = (energies[k + 1] - energies[k]) / dt

        n = old.n.values
        c = np.maximum(old.c.values, FLOOR)
        theta = np.maximum(kin.theta(c), FLOOR)
        tp, tpp, fp = _kin_derivatives(kin, c)
        grad_c = gradient_values(old.c.values, grid, grid.bc_c)
        gc2 = sum(g * g for g in grad_c)
        lap_c = laplacian_values(old.c.values, grid, grid.bc_c)

        gn2 = _grad_square(n, grid, grid.bc_n)
        diss = integrate(ScalarField(grid, gn2 / np.maximum(n, FLOOR)))
        hess = _hessian_square(rho_values(kin, c), grid, grid.bc_c)
        diss += integrate(ScalarField(grid, theta * hess))

        coeff = kin.f(c) * tp / (2.0 * theta**2) - fp / theta
        rhs = integrate(ScalarField(grid, h_eps(n, eps) * coeff * gc2))
        u_dot_gc = sum(a * g for a, g in zip(old.u.arrays, grad_c))
        rhs += integrate(ScalarField(
            grid, (lap_c / theta - 0.5 * tp / theta**2 * gc2) * u_dot_gc
        ))
        rhs += 0.5 * integrate(ScalarField(grid, tpp / theta**2 * gc2 * gc2))
        if not grid.periodic:
            rhs += _boundary_identity_term(old.c.values, theta, grid)

        worst = max(worst, abs(quotient + diss - rhs))
    return worst


def entropy_identity_terms(state, kin, eps):
    """Sign audit helper: the dissipation and each right-hand-side term of
    the entropy identity at one state, as a dict."""
    grid = state.n.grid
    n = state.n.values
    c = np.maximum(state.c.values, FLOOR)
    theta = np.maximum(kin.theta(c), FLOOR)
    tp, tpp, fp = _kin_derivatives(kin, c)
    grad_c = gradient_values(state.c.values, grid, grid.bc_c)
    gc2 = sum(g * g for g in grad_c)
    lap_c = laplacian_values(state.c.values, grid, grid.bc_c)
    gn2 = _grad_square(n, grid, grid.bc_n)
    hess = _hessian_square(rho_values(kin, c), grid, grid.bc_c)
    coeff = kin.f(c) * tp / (2.0 * theta**2) - fp / theta
    u_dot_gc = sum(a * g for a, g in zip(state.u.arrays, grad_c))
    terms = {
        "diss_fisher": integrate(ScalarField(grid, gn2 / np.maximum(n, FLOOR))),
        "diss_hessian": integrate(ScalarField(grid, theta * hess)),
        "rhs_kinetics": integrate(ScalarField(grid, h_eps(n, eps) * coeff * gc2)),
        "rhs_transport": integrate(ScalarField(
            grid, (lap_c / theta - 0.5 * tp / theta**2 * gc2) * u_dot_gc
        )),
        "rhs_curvature": 0.5 * integrate(
            ScalarField(grid, tpp / theta**2 * gc2 * gc2)
        ),
    }
    if not grid.periodic:
        terms["rhs_boundary"] = _boundary_identity_term(
            state.c.values, theta, grid
        )
    return terms


# -- boundary-slope diagnostic --------------------------------------------------

def _wall_profiles(w, grid, axis, depth):
    """Linear interpolation of w at the given inward depth from both walls
    of one axis; returns (low-wall profile, high-wall profile)."""
    h = grid.spacing[axis]
    centers = (np.arange(grid.resolution[axis]) + 0.5) * h
    pos = np.clip(depth, centers[0], centers[-1])
    j = min(int((pos - centers[0]) // h), grid.resolution[axis] - 2)
    frac = (pos - centers[j]) / h
    lo_a = np.take(w, j, axis=axis)
    lo_b = np.take(w, j + 1, axis=axis)
    m = grid.resolution[axis] - 1 - j
    hi_a = np.take(w, m, axis=axis)
    hi_b = np.take(w, m - 1, axis=axis)
    return ((1 - frac) * lo_a + frac * lo_b,
            (1 - frac) * hi_a + frac * hi_b)


def ms_boundary_ratio(c: ScalarField):
    """Empirical boundary-slope constant: the max over wall points of
    (d|grad c|^2/dnu) / (2 |grad c|^2).

    Both quantities are sampled at fixed physical depths (extent/64 and
    extent/64 + extent/32) by linear interpolation, so the report is a
    functional of the resolved field and stays stable under refinement.
    The denominator is floored; a constant field reports 0.
    """
    grid = c.grid
    if grid.periodic:
        raise PeriodicDomain("boundary-slope ratio needs walls")
    w = _grad_square(c.values, grid, grid.bc_c)
    w_max = float(w.max())
    floor = 1e-12 + 1e-8 * w_max
    best = 0.0
    for axis in range(grid.dim):
        d0 = grid.extents[axis] / 64.0
        d1 = d0 + grid.extents[axis] / 32.0
        near = _wall_profiles(w, grid, axis, d0)
        far = _wall_profiles(w, grid, axis, d1)
        for w_near, w_far in zip(near, far):
            slope = (w_near - w_far) / (d1 - d0)
            ratio = slope / np.maximum(2.0 * w_near, floor)
            best = max(best, float(ratio.max()))
    return best


# -- records and the weighted energy inequality ---------------------------------

def make_record(state, params, receipt=None, c_dagger=1.0):
    """Assemble the diagnostics row for one state (receipt supplies the
    stochastic increment over the step that produced it)."""
    kin = params.kinetics
    diss = dissipation(state, kin)
    aux = aux_bounds(state)
    me = 0.0
    if receipt is not None:
        me = martingale_increment(receipt.u_pre_noise, receipt.draw,
                                  params.noise, c_dagger, receipt.dt)
    grid = state.n.grid
    ms = None if grid.periodic else ms_boundary_ratio(state.c)
    return DiagnosticsRecord(
        t=state.t,
        mass_n=integrate(state.n),
        linf_c=lp_norm(state.c, math.inf),
        entropy=entropy_part(state),
        grad_psi_energy=grad_psi_energy(state, kin),
        kinetic=kinetic_energy(state),
        diss_n=diss[0], diss_c4=diss[1], diss_lap=diss[2], diss_u=diss[3],
        me_inc=me,
        ms_ratio=ms,
        aux_grad_sqrt_n=aux[0], aux_grad_c14=aux[1],
        aux_n_l53=aux[2], aux_u_l103=aux[3],
    )


@dataclass(frozen=True)
class EnergyConstants:
    """Empirical constants of the weighted energy inequality; all are
    fitted or supplied, never taken from theory."""

    c_dagger: float = 1.0
    d1: float = 1.0
    d2: float = 1.0
    big_c: float = 0.0


@dataclass(frozen=True)
class EnergyAuditReport:
    defect: float
    passes: bool
    tolerance: float
    weighted_energy: float     # (1/T) int E dt
    weighted_dissipation: float
    initial_energy: float
    forcing_term: float        # C int phi (||u||^2 + 1) dt
    martingale_term: float     # int phi dM_E


def _audit_pieces(records, constants: EnergyConstants):
    if any(r.me_inc is None for r in records):
        raise MissingIncrements("records lack martingale increments")
    t = np.array([r.t for r in records])
    horizon = t[-1] - t[0]
    energy = np.array([
        r.entropy + r.grad_psi_energy + constants.c_dagger * r.kinetic
        for r in records
    ])
    if horizon <= 0.0:
        # phi(0) = phi(T) = 0: every term of the inequality vanishes
        return 0.0, 0.0, 0.0, 0.0, 0.0
    phi = np.maximum(0.0, 1.0 - (t - t[0]) / horizon)
    dissipation_rate = np.array([
        r.diss_n + constants.d1 * r.diss_c4 + constants.d2 * r.diss_lap
        + 0.5 * constants.c_dagger * r.diss_u
        for r in records
    ])
    kinetic = np.array([r.kinetic for r in records])
    weighted_energy = float(trapezoid(energy, t)) / horizon
    weighted_dissipation = float(trapezoid(phi * dissipation_rate, t))
    forcing = float(trapezoid(phi * (kinetic + 1.0), t))
    # the stochastic integral uses the left endpoint (predictable weight)
    martingale = float(sum(
        phi[k] * records[k + 1].me_inc for k in range(len(records) - 1)
    ))
    return (weighted_energy, weighted_dissipation, float(energy[0]),
            forcing, martingale)


def energy_inequality_audit(records, constants: EnergyConstants,
                            tolerance=1e-8):
    """Defect of the weighted energy inequality with the linear hat weight
    phi(t) = (1 - t/T)+; passes when defect <= tolerance."""
    we, wd, e0, forcing, mart = _audit_pieces(records, constants)
    defect = we + wd - e0 - constants.big_c * forcing - mart
    return EnergyAuditReport(
        defect=defect, passes=defect <= tolerance, tolerance=tolerance,
        weighted_energy=we, weighted_dissipation=wd, initial_energy=e0,
        forcing_term=constants.big_c * forcing, martingale_term=mart,
    )


def fit_energy_constant(record_sets, constants: EnergyConstants):
    """Smallest C >= 0 closing the inequality (defect <= 0) on every
    supplied record set, holding the other constants fixed."""
    needed = 0.0
    for records in record_sets:
        we, wd, e0, forcing, mart = _audit_pieces(records, constants)
        gap = we + wd - e0 - mart
        if gap > 0.0:
            if forcing <= 0.0:
                raise MissingIncrements(
                    "cannot close the inequality: zero forcing weight"
                )
            needed = max(needed, gap / forcing)
    return needed
