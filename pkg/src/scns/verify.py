"""Self-check suites behind `scns verify`.

Each suite is a list of cheap invariant checks built from library calls
only, so a packaged install can validate itself without the test tree.
Checks return (name, passed, detail) triples; the runner prints one
PASS/FAIL line per check.
"""

from __future__ import annotations

import numpy as np

from .diagnostics import entropy_identity_terms, martingale_increment
from .errors import AssumptionViolation
from .grid import (
    build_grid,
    l2_norm_vector,
    scalar_field,
    vector_field,
    zero_vector_field,
)
from .model import (
    Kinetics,
    ModelParams,
    buoyancy,
    h_eps,
    h_eps_prime,
    make_noise_coefficients,
    psi_values,
    validate_kinetics,
)
from .noise import JumpSpec, RngStream, make_noise_draw
from .operators import (
    OperatorWorkspace,
    advect_values,
    divergence_values,
    gradient_values,
    laplacian_values,
    leray_project,
    mollify,
)
from .stepper import State, StepConfig, run, weak_form_residual

ATOMS = JumpSpec(small_atoms=((0.5, 2.0), (0.25, 4.0)),
                 large_atoms=((2.0, 0.5),))


def _rand_scalar(grid, rng):
    return rng.standard_normal(grid.resolution)


def _rand_vector_field(grid, rng):
    return vector_field(grid, tuple(rng.standard_normal(grid.resolution)
                                    for _ in range(grid.dim)))


def _vec_norm(arrays, grid):
    return float(np.sqrt(sum((a * a).sum() for a in arrays)
                         * grid.cell_volume))


def suite_ops():
    checks = []
    rng = np.random.default_rng(7)
    for bc in ("periodic", "box"):
        grid = build_grid(2, (1.0, 1.3), (12, 10), bc)
        vol = grid.cell_volume
        a, b = _rand_scalar(grid, rng), _rand_scalar(grid, rng)
        lhs = float((laplacian_values(a, grid, grid.bc_c) * b).sum() * vol)
        rhs = float((a * laplacian_values(b, grid, grid.bc_c)).sum() * vol)
        gap = abs(lhs - rhs)
        checks.append((f"laplacian self-adjoint ({bc})", gap <= 1e-11,
                       f"defect {gap:.2e}"))
    grid = build_grid(2, (1.0, 1.0), (12, 12), "periodic")
    vol = grid.cell_volume
    f = _rand_scalar(grid, rng)
    v = [rng.standard_normal(grid.resolution) for _ in range(2)]
    grads = gradient_values(f, grid, grid.bc_c)
    duality = sum(float((g * w).sum()) for g, w in zip(grads, v)) * vol
    duality += float((f * divergence_values(v, grid, grid.bc_u)).sum() * vol)
    checks.append(("divergence-gradient duality", abs(duality) <= 1e-11,
                   f"defect {abs(duality):.2e}"))

    ws = OperatorWorkspace(grid)
    w = _rand_vector_field(grid, rng)
    pw, _ = leray_project(w, ws)
    ppw, _ = leray_project(pw, ws)
    idem = _vec_norm([x - y for x, y in zip(ppw.arrays, pw.arrays)], grid)
    checks.append(("leray idempotent", idem <= 1e-10, f"defect {idem:.2e}"))
    pure_grad = vector_field(grid, tuple(gradient_values(f, grid,
                                                         grid.bc_c)))
    pg, _ = leray_project(pure_grad, ws)
    ann = l2_norm_vector(pg)
    checks.append(("leray annihilates gradients", ann <= 1e-10,
                   f"residual {ann:.2e}"))
    div_after = divergence_values(pw.arrays, grid, grid.bc_u)
    div_norm = float(np.sqrt((div_after**2).sum() * vol))
    checks.append(("leray output solenoidal", div_norm <= 1e-10,
                   f"divergence {div_norm:.2e}"))

    alpha = 3e-3
    x = ws.diffusion_solve(f, alpha, grid.bc_c, "backward-euler")
    resid = x - alpha * laplacian_values(x, grid, grid.bc_c) - f
    rnorm = float(np.sqrt((resid**2).sum() * vol))
    checks.append(("diffusion solve residual", rnorm <= 1e-9,
                   f"residual {rnorm:.2e}"))

    # mollifier checks need the radius resolved: 32 cells per unit extent
    fine = build_grid(2, (1.0, 1.0), (32, 32), "periodic")
    fine_ws = OperatorWorkspace(fine)
    worst_expand = 0.0
    errors = {}
    for eps in (0.2, 0.1, 0.05):
        errs = []
        for _ in range(20):
            w = _rand_vector_field(fine, rng)
            mw = mollify(w, eps, ws=fine_ws)
            worst_expand = max(worst_expand,
                               l2_norm_vector(mw) - l2_norm_vector(w))
            errs.append(_vec_norm([x - y for x, y in
                                   zip(mw.arrays, w.arrays)], fine))
        errors[eps] = float(np.mean(errs))
    checks.append(("mollifier non-expansive", worst_expand <= 1e-12,
                   f"worst growth {worst_expand:.2e}"))
    monotone = errors[0.2] >= errors[0.1] >= errors[0.05] > 0.0
    checks.append(("mollifier error monotone in eps", monotone,
                   f"{errors[0.2]:.3e} >= {errors[0.1]:.3e} "
                   f">= {errors[0.05]:.3e}"))

    # conservative advection moves constants only through div(u), so the
    # velocity must be solenoidal for exact preservation
    const = np.full(grid.resolution, 1.7)
    adv = advect_values(pw.arrays, const, grid, grid.bc_u, grid.bc_c)
    drift = float(np.abs(adv).max())
    checks.append(("advection preserves constants", drift <= 1e-12,
                   f"max {drift:.2e}"))
    return checks


def suite_model():
    checks = []
    s = np.linspace(0.0, 4.0, 401)
    ok = True
    for eps in (0.2, 0.1, 0.05):
        h = h_eps(s, eps)
        ok &= bool(np.all(h >= -1e-15) and np.all(h <= s + 1e-12))
        ok &= bool(np.all(np.diff(h) >= 0.0))
    checks.append(("regularizer bounded by identity and monotone", ok, ""))
    h_order = np.all(h_eps(s[1:], 0.05) >= h_eps(s[1:], 0.2) - 1e-15)
    checks.append(("regularizer increases as eps shrinks", bool(h_order),
                   ""))
    step = 1e-6
    deriv_gap = float(np.abs(
        (h_eps(s[1:] + step, 0.1) - h_eps(s[1:] - step, 0.1)) / (2 * step)
        - h_eps_prime(s[1:], 0.1)).max())
    checks.append(("regularizer derivative consistent", deriv_gap <= 1e-6,
                   f"gap {deriv_gap:.2e}"))

    kin = Kinetics()
    try:
        validate_kinetics(kin, 4.0)
        checks.append(("prototype kinetics satisfy sign conditions", True,
                       ""))
    except AssumptionViolation as exc:
        checks.append(("prototype kinetics satisfy sign conditions", False,
                       str(exc)))
    psi_gap = float(np.abs(
        (psi_values(kin, s[1:] + step) - psi_values(kin, s[1:] - step))
        / (2 * step) - 1.0 / np.sqrt(s[1:])).max())
    checks.append(("psi antiderivative matches 1/sqrt(theta)",
                   psi_gap <= 1e-4, f"gap {psi_gap:.2e}"))

    grid = build_grid(2, (1.0, 1.0), (8, 8), "periodic")
    n = scalar_field(grid, np.ones(grid.resolution))
    phi = scalar_field(grid, np.zeros(grid.resolution))
    force = buoyancy(n, phi)
    checks.append(("buoyancy vanishes for flat potential",
                   l2_norm_vector(force) == 0.0, ""))
    try:
        JumpSpec(small_atoms=((1.5, 1.0),))
        checks.append(("jump partition rejects misfiled atom", False,
                       "no error raised"))
    except AssumptionViolation as exc:
        checks.append(("jump partition rejects misfiled atom",
                       exc.tag == "Z₀", str(exc)))
    return checks


def suite_noise():
    checks = []
    dt, modes, paths = 0.05, 4, 2000
    draws_a = make_noise_draw(modes, dt, ATOMS, RngStream(11, 3))
    draws_b = make_noise_draw(modes, dt, ATOMS, RngStream(11, 3))
    same = (np.array_equal(draws_a.dW, draws_b.dW)
            and draws_a.small_jumps == draws_b.small_jumps
            and draws_a.large_jumps == draws_b.large_jumps)
    checks.append(("draws reproducible at fixed (seed, path)", same, ""))

    acc = np.zeros(modes)
    sq = 0.0
    count_small = 0
    for i in range(paths):
        d = make_noise_draw(modes, dt, ATOMS, RngStream(17, i))
        acc += d.dW
        sq += float((d.dW**2).sum())
        count_small += len(d.small_jumps)
    mean_bound = 4.0 * np.sqrt(dt / paths)
    mean_gap = float(np.abs(acc / paths).max())
    checks.append(("wiener increments mean zero", mean_gap <= mean_bound,
                   f"|mean| {mean_gap:.2e} <= {mean_bound:.2e}"))
    var_hat = sq / (paths * modes)
    var_gap = abs(var_hat - dt)
    var_bound = 4.0 * dt * np.sqrt(2.0 / (paths * modes))
    checks.append(("wiener increment variance", var_gap <= var_bound,
                   f"|var - dt| {var_gap:.2e} <= {var_bound:.2e}"))
    lam = sum(rate for _, rate in ATOMS.small_atoms)
    expected = paths * lam * dt
    count_gap = abs(count_small - expected)
    count_bound = 4.0 * np.sqrt(expected)
    checks.append(("poisson event counts", count_gap <= count_bound,
                   f"|count - mean| {count_gap:.1f} <= {count_bound:.1f}"))

    grid = build_grid(2, (1.0, 1.0), (8, 8), "periodic")
    ws = OperatorWorkspace(grid)
    X, Y = grid.meshgrid()
    u = vector_field(grid, (np.sin(2 * np.pi * Y), np.cos(2 * np.pi * X)))
    coeffs = make_noise_coefficients(
        vector_field(grid, (np.sin(2 * np.pi * Y),
                            np.zeros(grid.resolution))),
        -0.2, modes, ATOMS, ws)
    total, total_sq = 0.0, 0.0
    for i in range(paths):
        d = make_noise_draw(modes, dt, ATOMS, RngStream(29, i))
        inc = martingale_increment(u, d, coeffs, 1.0, dt)
        total += inc
        total_sq += inc * inc
    mean = total / paths
    stderr = np.sqrt(max(total_sq / paths - mean**2, 1e-300) / paths)
    checks.append(("compensated energy increment mean zero",
                   abs(mean) <= 4.0 * stderr,
                   f"|mean| {abs(mean):.2e} <= {4 * stderr:.2e}"))
    return checks


def _demo_setup(resolution, *, jumps=ATOMS, h_gain=-0.4, phi_amp=0.2):
    grid = build_grid(2, (1.0, 1.0), resolution, "periodic")
    ws = OperatorWorkspace(grid)
    X, Y = grid.meshgrid()
    n0 = scalar_field(grid, 1.0 + 0.3 * np.cos(2 * np.pi * X)
                      * np.sin(2 * np.pi * Y))
    c0 = scalar_field(grid, 1.0 + 0.15 * np.sin(2 * np.pi * X)
                      * np.cos(2 * np.pi * Y))
    phi = scalar_field(grid, phi_amp * np.sin(2 * np.pi * Y))
    psi = vector_field(grid, (np.sin(2 * np.pi * Y),
                              np.zeros(grid.resolution)))
    coeffs = make_noise_coefficients(psi, h_gain, 4, jumps, ws)
    params = ModelParams(Kinetics(), phi, 0.1, coeffs, (1.0, 1.0, 0.05))
    return grid, ws, params, State(0.0, n0, c0, zero_vector_field(grid))


def suite_energy():
    checks = []
    grid, ws, params, st0 = _demo_setup((32, 32), jumps=None, h_gain=0.0,
                                        phi_amp=0.0)
    out = run(st0, params, StepConfig(dt=1e-3), 0.1, ws=ws,
              sample_noise=False, keep_window=True)
    energies = [rec.entropy + rec.grad_psi_energy for rec in out.records]
    rises = [b - a for a, b in zip(energies, energies[1:])]
    worst = max(rises) if rises else 0.0
    checks.append(("deterministic entropy decay", worst <= 1e-9,
                   f"worst rise {worst:.2e}"))
    terms = entropy_identity_terms(out.final_state, params.kinetics,
                                   params.eps)
    signs = (terms["diss_fisher"] >= 0.0 and terms["diss_hessian"] >= 0.0
             and terms["rhs_kinetics"] <= 0.0)
    checks.append(("identity terms have proved signs", signs,
                   f"fisher {terms['diss_fisher']:.2e}, "
                   f"kinetics {terms['rhs_kinetics']:.2e}"))

    grid, ws, params, st0 = _demo_setup((32, 32))
    out = run(st0, params, StepConfig(dt=1e-3), 0.2, ws=ws, seed=5)
    mass = [rec.mass_n for rec in out.records]
    drift = max(abs(m - mass[0]) for m in mass) / abs(mass[0])
    checks.append(("mass conserved under noise", drift <= 1e-12,
                   f"relative drift {drift:.2e}"))
    n_min = float(out.final_state.n.values.min())
    checks.append(("density nonnegative", n_min >= 0.0,
                   f"min {n_min:.2e}"))
    linf = [rec.linf_c for rec in out.records]
    monotone = all(b <= a for a, b in zip(linf, linf[1:]))
    checks.append(("substrate maximum nonincreasing", monotone, ""))
    return checks


def suite_weakform():
    checks = []
    grid, ws, params, st0 = _demo_setup((16, 16))
    out = run(st0, params, StepConfig(dt=1e-3), 0.01, ws=ws, seed=3,
              keep_window=True, with_records=False)
    resid = weak_form_residual(out.window, out.params, ws)
    worst = max(resid.values())
    checks.append(("constant test function residual", worst <= 1e-12,
                   f"max {worst:.2e}"))

    results = {}
    for dt in (2e-3, 1e-3):
        grid, ws, params, st0 = _demo_setup((32, 32), jumps=None,
                                            h_gain=0.0)
        X, Y = grid.meshgrid()
        st0 = State(0.0, st0.n, st0.c, vector_field(
            grid, (np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y),
                   -np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y))))
        out = run(st0, params, StepConfig(dt=dt), 0.04, ws=ws,
                  sample_noise=False, keep_window=True, with_records=False)
        phi_t = scalar_field(grid, 1.0 + 0.3 * np.cos(2 * np.pi * X))
        results[dt] = weak_form_residual(out.window, out.params, ws,
                                         test_function=phi_t)
    ratios = {eq: results[2e-3][eq] / results[1e-3][eq]
              for eq in ("n", "c", "u")}
    ok = all(r >= 1.8 for r in ratios.values())
    checks.append(("residual halves with the step", ok,
                   ", ".join(f"{eq} {r:.2f}" for eq, r in ratios.items())))
    return checks


SUITES = {
    "ops": suite_ops,
    "model": suite_model,
    "noise": suite_noise,
    "energy": suite_energy,
    "weakform": suite_weakform,
}


def run_suites(names, emit=print):
    """Run the named suites; prints one line per check, returns overall
    success."""
    if "all" in names:
        names = list(SUITES)
    passed_all = True
    for suite_name in names:
        for name, passed, detail in SUITES[suite_name]():
            passed_all &= passed
            tail = f"  ({detail})" if detail else ""
            emit(f"[{suite_name}] {'PASS' if passed else 'FAIL'} "
                 f"{name}{tail}")
    return passed_all
