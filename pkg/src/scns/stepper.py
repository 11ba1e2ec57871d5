"""IMEX Euler-Maruyama time stepping for the regularized system.

One step advances the unknowns in a fixed order chosen to preserve the
discrete conservation and comparison structure:

1. density    n: explicit upwind advection and chemotaxis fluxes, then an
               implicit diffusion solve; fluxes telescope so the discrete
               mass integral is conserved to roundoff, and the monotone
               pieces keep n nonnegative under the advective CFL bound.
2. substrate  c: explicit upwind advection, implicit diffusion, a clip to
               the running bounds [0, max c], then consumption as the
               multiplicative factor 1/(1 + dt h_eps(n) f(c)/c), which is
               exact for linear f and keeps the maximum principle exact.
3. velocity   u: implicit viscosity, explicit advection by the mollified
               velocity, explicit buoyancy and linear drift, Wiener and
               compensator forcing evaluated at the frozen pre-noise state,
               then jump events at their sampled intra-step times.
4. Leray projection.

Each step also returns a receipt (intermediate fields plus the noise draw)
so the variational-form residual can be reassembled after the fact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CflViolation,
    ConfigInvalid,
    MissingNoiseRecord,
    NegativeDensity,
    WindowTooShort,
)
from .grid import (
    ScalarField,
    VectorField,
    inner,
    inner_vector,
    integrate,
    l2_norm_vector,
    lp_norm,
)
from .model import (
    ModelParams,
    apply_g,
    buoyancy,
    chemotactic_flux,
    h_eps,
)
from .noise import JumpSpec, NoiseDraw, RngStream, make_noise_draw, small_jump_compensator
from .operators import (
    OperatorWorkspace,
    advect_values,
    divergence_values,
    face_flux_divergence_values,
    gradient_values,
    laplacian_values,
    leray_project,
    mollify,
)

logger = logging.getLogger(__name__)

_SCHEMES = ("backward-euler", "crank-nicolson")


@dataclass
class State:
    """Unknowns at one time: density n >= 0, substrate c in [0, max c_0],
    divergence-free velocity u."""

    t: float
    n: ScalarField
    c: ScalarField
    u: VectorField

    def copy(self):
        return State(self.t, self.n.copy(), self.c.copy(), self.u.copy())


@dataclass(frozen=True)
class StepConfig:
    """Time-integration controls."""

    dt: float
    cfl_safety: float = 0.9
    diffusion_scheme: str = "backward-euler"
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigInvalid(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigInvalid(
                f"cfl_safety must lie in (0, 1], got {self.cfl_safety}"
            )
        if self.diffusion_scheme not in _SCHEMES:
            raise ConfigInvalid(
                f"diffusion_scheme must be one of {_SCHEMES}, "
                f"got {self.diffusion_scheme!r}"
            )
        if self.record_every < 1:
            raise ConfigInvalid(
                f"record_every must be >= 1, got {self.record_every}"
            )


@dataclass(frozen=True)
class StepReceipt:
    """Intermediates needed to reassemble one step's variational identity."""

    dt: float
    draw: NoiseDraw
    u_visc: VectorField        # after the implicit viscosity solve
    u_pre_noise: VectorField   # after advection; noise coefficients frozen here
    c_visc: ScalarField        # after advection+diffusion+clip, before consumption


def cfl_number(state: State, params: ModelParams, dt):
    """Advective CFL dt * max over cells of sum_a (|u_a| + |chi dc_a|)/h_a."""
    grid = state.u.grid
    chi = params.kinetics.chi(state.c.values)
    grad_c = gradient_values(state.c.values, grid, grid.bc_c)
    total = np.zeros(grid.resolution)
    for axis in range(grid.dim):
        speed = np.abs(state.u.arrays[axis]) + np.abs(chi * grad_c[axis])
        total += speed / grid.spacing[axis]
    return dt * float(total.max())


def _jump_factor(draw: NoiseDraw):
    """Scalar multiplier accumulated by applying the step's jumps in order."""
    events = [(t, 1.0 + z) for t, z in draw.small_jumps]
    events += [(t, 1.0 + 1.0 / z) for t, z in draw.large_jumps]
    events.sort()
    factor = 1.0
    for _, f in events:
        factor *= f
    return factor


def _consumption_ratio(kin, c_values):
    """f(c)/c evaluated safely (f(0) = 0 makes the sink vanish at c = 0)."""
    if kin.f_kind == "linear":
        return kin.f_scale
    safe = np.where(c_values > 0.0, c_values, 1.0)
    return np.where(c_values > 0.0, kin.f(c_values) / safe, 0.0)


def _step_full(state: State, params: ModelParams, cfg: StepConfig,
               draw: NoiseDraw, ws: OperatorWorkspace):
    """Advance one step; returns (new state, receipt)."""
    grid = state.u.grid
    dt = cfg.dt
    cfl = cfl_number(state, params, dt)
    if cfl > cfg.cfl_safety:
        raise CflViolation(
            f"advective CFL {cfl:.3g} exceeds safety factor "
            f"{cfg.cfl_safety} at t = {state.t:.6g}"
        )
    D_n, D_c, delta = params.diffusion
    scheme = cfg.diffusion_scheme
    mass_before = float(state.n.values.sum())

    # 1. density: explicit transport, implicit diffusion, roundoff clip
    adv_n = advect_values(state.u.arrays, state.n.values, grid,
                          grid.bc_u, grid.bc_n)
    chemo = chemotactic_flux(state.n, state.c, params.kinetics, params.eps)
    chemo_div = face_flux_divergence_values(chemo.arrays, grid, grid.bc_n)
    n_rhs = state.n.values - dt * (adv_n + chemo_div)
    n_vals = ws.diffusion_solve(n_rhs, dt * D_n, grid.bc_n, scheme)
    n_min = float(n_vals.min())
    if n_min < -1e-14:
        raise NegativeDensity(
            f"density fell to {n_min:.3e} at t = {state.t:.6g}; "
            f"the monotone update was violated"
        )
    if n_min < 0.0:
        logger.debug("clipping %d slightly negative density cells (min %.3e)",
                     int((n_vals < 0.0).sum()), n_min)
        n_vals = np.maximum(n_vals, 0.0)
    mass_after = float(n_vals.sum())
    assert abs(mass_after - mass_before) <= 1e-12 * abs(mass_before), (
        f"mass drift {mass_after - mass_before:.3e} exceeds tolerance"
    )
    n_new = ScalarField(grid, n_vals)

    # 2. substrate: explicit transport, implicit diffusion, exact bounds,
    #    multiplicative consumption
    c_max = float(state.c.values.max())
    adv_c = advect_values(state.u.arrays, state.c.values, grid,
                          grid.bc_u, grid.bc_c)
    c_vals = ws.diffusion_solve(state.c.values - dt * adv_c, dt * D_c,
                                grid.bc_c, scheme)
    np.clip(c_vals, 0.0, c_max, out=c_vals)
    c_visc = ScalarField(grid, c_vals.copy())
    ratio = _consumption_ratio(params.kinetics, c_vals)
    c_vals = c_vals / (1.0 + dt * h_eps(n_vals, params.eps) * ratio)
    c_new = ScalarField(grid, c_vals)

    # 3. velocity: implicit viscosity, explicit mollified advection, forcing
    u1_arrays = tuple(
        ws.diffusion_solve(comp, dt * delta, grid.bc_u, scheme)
        for comp in state.u.arrays
    )
    u_visc = VectorField(grid, u1_arrays)
    mol = mollify(u_visc, params.eps, ws=ws)
    u2_arrays = tuple(
        comp - dt * advect_values(mol.arrays, comp, grid, grid.bc_u, grid.bc_u)
        for comp in u1_arrays
    )
    u_pre = VectorField(grid, u2_arrays)

    force = buoyancy(n_new, params.phi)
    wiener = apply_g(u_pre, params.noise, draw.dW)
    spec = params.noise.jump_spec or JumpSpec()
    comp_drift = small_jump_compensator(spec, u_pre)
    gain = params.noise.h_gain
    factor = _jump_factor(draw)
    u3_arrays = tuple(
        factor * (
            u2 + dt * (f + gain * u2 + cd) + w
        )
        for u2, f, w, cd in zip(
            u2_arrays, force.arrays, wiener.arrays, comp_drift.arrays
        )
    )

    # 4. projection
    u_new, _ = leray_project(VectorField(grid, u3_arrays), ws)

    new_state = State(state.t + dt, n_new, c_new, u_new)
    receipt = StepReceipt(dt, draw, u_visc, u_pre, c_visc)
    return new_state, receipt


def step(state: State, params: ModelParams, cfg: StepConfig,
         draw: NoiseDraw, ws: OperatorWorkspace) -> State:
    """Advance one time step (see module docstring for the update order)."""
    new_state, _ = _step_full(state, params, cfg, draw, ws)
    return new_state


def zero_noise_draw(K):
    """The deterministic draw: zero Wiener increments, no jumps."""
    return NoiseDraw(np.zeros(int(K)), (), ())


@dataclass
class TrajectoryWindow:
    """Consecutive states plus the receipts linking them."""

    states: tuple
    receipts: tuple


@dataclass
class RunResult:
    records: list
    snapshots: list
    final_state: State
    window: TrajectoryWindow
    dt_used: float
    # params as the scheme saw them (noise stripped when sampling is off);
    # residual evaluations of the window must use these
    params: object = None


def _validate_initial(initial: State):
    n, c = initial.n.values, initial.c.values
    if float(n.min()) < 0.0:
        raise ConfigInvalid(f"(A1) initial density has negative cells "
                            f"(min {n.min():.3e})")
    if float(n.max()) <= 0.0:
        raise ConfigInvalid("(A1) initial density vanishes identically")
    if float(c.min()) < 0.0:
        raise ConfigInvalid(f"(A1) initial substrate has negative cells "
                            f"(min {c.min():.3e})")


def run(initial: State, params: ModelParams, cfg: StepConfig, t_final, *,
        seed=0, path_index=0, ws=None, sample_noise=True, keep_window=False,
        with_records=True, snapshot_times=(), c_dagger=1.0, max_halvings=16):
    """Integrate from `initial` over a horizon of length `t_final`.

    Emits a diagnostics record for the initial state, every
    `cfg.record_every`-th step, and the final state.  On a CFL rejection
    the step size is halved (persistently) and the step retried with fresh
    randomness; the sequence of draws remains a pure function of
    (seed, path_index) so reruns are byte-identical.

    Returns a RunResult; `window` is populated only when `keep_window` is
    true (needed by weak_form_residual).
    """
    from .diagnostics import make_record

    _validate_initial(initial)
    grid = initial.u.grid
    if ws is None:
        ws = OperatorWorkspace(grid)
    div0 = divergence_values(initial.u.arrays, grid,
                             grid.bc_u if grid.periodic else "dirichlet-zero")
    norm_u0 = l2_norm_vector(initial.u)
    if math.sqrt(float((div0**2).sum()) * grid.cell_volume) > 1e-8 * (norm_u0 + 1.0):
        raise ConfigInvalid("(A1) initial velocity is not divergence-free; "
                            "project it first")

    if not sample_noise:
        # noise off means the whole stochastic forcing is off: no Wiener
        # term, no jumps, and no jump compensator in drift or records
        params = replace(params,
                         noise=replace(params.noise, jump_spec=None))
    spec = params.noise.jump_spec or JumpSpec()
    stream = RngStream(seed, path_index)
    state = initial.copy()
    t_end = initial.t + float(t_final)
    dt = cfg.dt
    halvings = 0
    step_index = 0

    records = []
    if with_records:
        records.append(make_record(state, params, receipt=None,
                                   c_dagger=c_dagger))
    snapshots = []
    pending_snaps = sorted(float(s) for s in snapshot_times)
    while pending_snaps and pending_snaps[0] <= state.t + 1e-12:
        snapshots.append((pending_snaps.pop(0), state.copy()))

    states = [state.copy()] if keep_window else None
    receipts = [] if keep_window else None

    while t_end - state.t > 1e-12 * max(1.0, abs(t_end)):
        dt_step = min(dt, t_end - state.t)
        draw = (make_noise_draw(params.noise.wiener_modes, dt_step, spec, stream)
                if sample_noise else zero_noise_draw(params.noise.wiener_modes))
        try:
            new_state, receipt = _step_full(
                state, params, replace(cfg, dt=dt_step), draw, ws
            )
        except CflViolation:
            halvings += 1
            if halvings > max_halvings:
                raise
            dt = 0.5 * dt
            logger.info("CFL rejection at t = %.6g; halving dt to %g",
                        state.t, dt)
            continue
        state = new_state
        step_index += 1
        if keep_window:
            states.append(state.copy())
            receipts.append(receipt)
        done = t_end - state.t <= 1e-12 * max(1.0, abs(t_end))
        if with_records and (step_index % cfg.record_every == 0 or done):
            records.append(make_record(state, params, receipt=receipt,
                                       c_dagger=c_dagger))
        while pending_snaps and pending_snaps[0] <= state.t + 1e-12:
            snapshots.append((pending_snaps.pop(0), state.copy()))

    window = (TrajectoryWindow(tuple(states), tuple(receipts))
              if keep_window else None)
    return RunResult(records, snapshots, state, window, dt, params)


# -- variational-form residuals -------------------------------------------------

def _require_window(window: TrajectoryWindow):
    if window is None or len(window.states) < 2:
        raise WindowTooShort("need at least two consecutive states")
    if not window.receipts or len(window.receipts) != len(window.states) - 1:
        raise MissingNoiseRecord(
            "window lacks per-step receipts; rerun with keep_window=True"
        )


def weak_form_residual(window: TrajectoryWindow, params: ModelParams,
                       ws: OperatorWorkspace, test_function=None):
    """Residuals of the discrete variational identities over a window.

    Every spatial pairing uses the discrete operators the stepper itself
    applies; time integrals use the left-endpoint (explicit Euler)
    quadrature, while reaction and stochastic terms reuse the recorded
    receipts exactly.  The residual therefore reduces to the conservation
    defect for constant test functions and shrinks first-order in dt for
    smooth ones.

    test_function may be a ScalarField (used for the n and c equations and,
    stacked then projected, for the velocity equation) or a VectorField
    (projected; velocity equation only, constants for the scalars).
    Returns {"n": ..., "c": ..., "u": ...}.
    """
    _require_window(window)
    states = window.states
    receipts = window.receipts
    grid = states[0].u.grid
    D_n, D_c, delta = params.diffusion

    if isinstance(test_function, VectorField):
        phi = ScalarField(grid, np.ones(grid.resolution))
        v_raw = test_function
    elif test_function is not None:
        phi = test_function
        v_raw = VectorField(grid, tuple(test_function.values.copy()
                                        for _ in range(grid.dim)))
    else:
        phi = ScalarField(grid, np.ones(grid.resolution))
        v_raw = VectorField(grid, tuple(np.ones(grid.resolution)
                                        for _ in range(grid.dim)))
    v, _ = leray_project(v_raw, ws)

    acc_n = inner(ScalarField(grid, states[-1].n.values - states[0].n.values), phi)
    acc_c = inner(ScalarField(grid, states[-1].c.values - states[0].c.values), phi)
    acc_u = inner_vector(
        VectorField(grid, tuple(a - b for a, b in
                                zip(states[-1].u.arrays, states[0].u.arrays))),
        v,
    )
    spec = params.noise.jump_spec or JumpSpec()
    gain = params.noise.h_gain

    for k, receipt in enumerate(receipts):
        old, new = states[k], states[k + 1]
        dt = receipt.dt

        # density: explicit transport as stepped, diffusion at the left end
        adv_n = advect_values(old.u.arrays, old.n.values, grid,
                              grid.bc_u, grid.bc_n)
        chemo = chemotactic_flux(old.n, old.c, params.kinetics, params.eps)
        chemo_div = face_flux_divergence_values(chemo.arrays, grid, grid.bc_n)
        lap_n = laplacian_values(old.n.values, grid, grid.bc_n)
        acc_n += dt * inner(
            ScalarField(grid, adv_n + chemo_div - D_n * lap_n), phi
        )

        # substrate: transport and diffusion as above, consumption exactly
        # as applied (c_visc - c_new is the step's pointwise sink)
        adv_c = advect_values(old.u.arrays, old.c.values, grid,
                              grid.bc_u, grid.bc_c)
        lap_c = laplacian_values(old.c.values, grid, grid.bc_c)
        acc_c += dt * inner(ScalarField(grid, adv_c - D_c * lap_c), phi)
        acc_c += inner(
            ScalarField(grid, receipt.c_visc.values - new.c.values), phi
        )

        # velocity: left-endpoint advection and viscosity; forcing terms
        # reconstructed exactly from the receipt
        mol = mollify(old.u, params.eps, ws=ws)
        adv_u = tuple(
            advect_values(mol.arrays, comp, grid, grid.bc_u, grid.bc_u)
            for comp in old.u.arrays
        )
        lap_u = tuple(
            laplacian_values(comp, grid, grid.bc_u) for comp in old.u.arrays
        )
        u2 = receipt.u_pre_noise
        force = buoyancy(new.n, params.phi)
        wiener = apply_g(u2, params.noise, receipt.draw.dW)
        comp_drift = small_jump_compensator(spec, u2)
        factor = _jump_factor(receipt.draw)
        u3 = tuple(
            factor * (a + dt * (f + gain * b + cd) + w)
            for a, b, f, w, cd in zip(
                u2.arrays, u2.arrays, force.arrays, wiener.arrays,
                comp_drift.arrays
            )
        )
        jump_part = tuple((1.0 - 1.0 / factor) * a for a in u3)
        acc_u += dt * inner_vector(
            VectorField(grid, tuple(a - delta * l for a, l in zip(adv_u, lap_u))),
            v,
        )
        acc_u -= dt * inner_vector(force, v)
        acc_u -= dt * gain * inner_vector(u2, v)
        acc_u -= inner_vector(wiener, v)
        acc_u -= dt * inner_vector(comp_drift, v)
        acc_u -= inner_vector(VectorField(grid, jump_part), v)

    return {"n": abs(acc_n), "c": abs(acc_c), "u": abs(acc_u)}
