#!/usr/bin/env python3
"""Refinement behavior of the spatial operators and the weak residual.

Three short studies on periodic boxes:

1. the centered Laplacian and gradient against analytic derivatives of
   a smooth field, halving h four times (the error should drop 4x per
   halving, i.e. second order);
2. the velocity mollifier: never norm-expanding, and converging to the
   identity as its radius shrinks;
3. the discrete weak-form residual of a noise-free run under a joint
   (dt, h) halving (the Richardson ratio should approach 2, first order
   in time dominating).

Usage: python3 demos/operator_convergence.py
"""

import numpy as np

from scns import (
    Kinetics,
    ModelParams,
    OperatorWorkspace,
    State,
    StepConfig,
    build_grid,
    l2_norm_vector,
    laplacian_values,
    make_noise_coefficients,
    mollify,
    run,
    scalar_field,
    vector_field,
    weak_form_residual,
    zero_vector_field,
)

# -- study 1: stencil order -------------------------------------------------

print("Laplacian truncation error, f = sin(2 pi x) cos(2 pi y):")
prev = None
for N in (16, 32, 64, 128):
    grid = build_grid(2, (1.0, 1.0), (N, N), "periodic")
    X, Y = grid.meshgrid()
    f = np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
    got = laplacian_values(f, grid, grid.bc_c)
    err = float(np.abs(got + 8 * np.pi**2 * f).max())
    note = "" if prev is None else f"  ratio {prev / err:5.2f}"
    print(f"  N = {N:4d}  max error {err:.4e}{note}")
    prev = err

# -- study 2: mollifier -----------------------------------------------------

print("mollifier on 64^2, smooth velocity:")
grid = build_grid(2, (1.0, 1.0), (64, 64), "periodic")
ws = OperatorWorkspace(grid)
X, Y = grid.meshgrid()
w = vector_field(grid, (np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y)
                        + 0.3 * np.sin(4 * np.pi * Y),
                        np.cos(2 * np.pi * X) + 0.2 * np.cos(4 * np.pi * X)))
base = l2_norm_vector(w)
for eps in (0.4, 0.2, 0.1, 0.05):
    mw = mollify(w, eps, ws=ws)
    dist = float(np.sqrt(sum(((a - b) ** 2).sum()
                             for a, b in zip(mw.arrays, w.arrays))
                         * grid.cell_volume))
    print(f"  eps = {eps:4.2f}  |Lw|/|w| = {l2_norm_vector(mw) / base:.4f}"
          f"  |Lw - w| = {dist:.4f}")

# -- study 3: weak-form Richardson ------------------------------------------

print("weak-form residual under (dt, h) halving, noise off:")


def _setup(N):
    grid = build_grid(2, (1.0, 1.0), (N, N), "periodic")
    ws = OperatorWorkspace(grid)
    X, Y = grid.meshgrid()
    n0 = scalar_field(grid, 1.0 + 0.5 * np.cos(2 * np.pi * X)
                      * np.sin(2 * np.pi * Y))
    c0 = scalar_field(grid, 1.0 + 0.3 * np.sin(2 * np.pi * X)
                      * np.cos(2 * np.pi * Y))
    phi = scalar_field(grid, 0.2 * np.sin(2 * np.pi * Y))
    noise = make_noise_coefficients(zero_vector_field(grid), 0.0, 1,
                                    None, ws)
    params = ModelParams(Kinetics(), phi, 0.1, noise, (1.0, 1.0, 0.05))
    u0 = vector_field(grid, (np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y),
                             -np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y)))
    test = scalar_field(grid, 1.0 + 0.3 * np.cos(2 * np.pi * X))
    return grid, ws, params, State(0.0, n0, c0, u0), test


resid = {}
for N, dt in ((32, 2e-3), (64, 1e-3)):
    grid, ws, params, state, test = _setup(N)
    out = run(state, params, StepConfig(dt=dt), 0.04, ws=ws,
              sample_noise=False, keep_window=True, with_records=False)
    resid[N] = weak_form_residual(out.window, out.params, ws,
                                  test_function=test)
for eq in ("n", "c", "u"):
    print(f"  {eq}: coarse {resid[32][eq]:.4e}  fine {resid[64][eq]:.4e}"
          f"  ratio {resid[32][eq] / resid[64][eq]:.2f}")
