"""Dense-matrix oracles for the difference stencils.

Everything here is assembled with explicit index loops, one matrix entry at
a time, so the vectorized operators in :mod:`scns.operators` are checked
against an independent statement of the same ghost-cell conventions:

* periodic      ghost(-1) = f[N-1],  ghost(N) = f[0]
* neumann-zero  ghost(-1) = f[0],    ghost(N) = f[N-1]   (mirror)
* dirichlet-zero ghost(-1) = -f[0],  ghost(N) = -f[N-1]  (antisymmetric)

Matrices act on C-order flattened fields.  Small grids only (the acceptance
suite caps them at 12 cells per axis).
"""

import math

import numpy as np

PERIODIC = "periodic"
NEUMANN = "neumann-zero"
DIRICHLET = "dirichlet-zero"


def ghost(i, N, tag):
    """Map a one-cell out-of-range index to (in-range index, sign)."""
    if 0 <= i < N:
        return i, 1.0
    if tag == PERIODIC:
        return i % N, 1.0
    if tag == NEUMANN:
        return (0, 1.0) if i < 0 else (N - 1, 1.0)
    if tag == DIRICHLET:
        return (0, -1.0) if i < 0 else (N - 1, -1.0)
    raise ValueError(tag)


def _flat(idx, shape):
    return int(np.ravel_multi_index(idx, shape))


def dense_laplacian(grid, tag):
    shape = grid.resolution
    M = int(np.prod(shape))
    A = np.zeros((M, M))
    for idx in np.ndindex(*shape):
        row = _flat(idx, shape)
        for axis in range(grid.dim):
            h2 = grid.spacing[axis] ** 2
            A[row, row] += -2.0 / h2
            for step in (-1, 1):
                nb = list(idx)
                nb[axis] += step
                j, s = ghost(nb[axis], shape[axis], tag)
                nb[axis] = j
                A[row, _flat(nb, shape)] += s / h2
    return A


def dense_gradient(grid, tag):
    """One centered-difference matrix per axis."""
    shape = grid.resolution
    M = int(np.prod(shape))
    mats = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        G = np.zeros((M, M))
        for idx in np.ndindex(*shape):
            row = _flat(idx, shape)
            for step, coef in ((1, 0.5 / h), (-1, -0.5 / h)):
                nb = list(idx)
                nb[axis] += step
                j, s = ghost(nb[axis], shape[axis], tag)
                nb[axis] = j
                G[row, _flat(nb, shape)] += coef * s
        mats.append(G)
    return mats


def dense_divergence_apply(arrays, grid, tag):
    """divergence(v) via the per-axis gradient matrices."""
    mats = dense_gradient(grid, tag)
    out = np.zeros(grid.resolution)
    for G, a in zip(mats, arrays):
        out += (G @ a.ravel()).reshape(grid.resolution)
    return out


def _ghost_value(values, idx, axis, shape, tag):
    nb = list(idx)
    j, s = ghost(nb[axis], shape[axis], tag)
    nb[axis] = j
    return s * values[tuple(nb)]


def dense_advect(u_arrays, values, grid, u_tag, f_tag, scheme="upwind"):
    """div(u f) with face-by-face loops (donor-cell or centered faces)."""
    shape = grid.resolution
    out = np.zeros(shape)
    for idx in np.ndindex(*shape):
        for axis in range(grid.dim):
            h = grid.spacing[axis]
            N = shape[axis]
            acc = 0.0
            for side in (+1, -1):
                lo = list(idx)
                hi = list(idx)
                if side == +1:
                    hi[axis] += 1
                else:
                    lo[axis] -= 1
                ul = _ghost_value(u_arrays[axis], lo, axis, shape, u_tag)
                ur = _ghost_value(u_arrays[axis], hi, axis, shape, u_tag)
                fl = _ghost_value(values, lo, axis, shape, f_tag)
                fr = _ghost_value(values, hi, axis, shape, f_tag)
                vel = 0.5 * (ul + ur)
                if scheme == "upwind":
                    flux = max(vel, 0.0) * fl + min(vel, 0.0) * fr
                else:
                    flux = vel * 0.5 * (fl + fr)
                acc += side * flux
            out[idx] += acc / h
    return out


def _fold(i, N, mode):
    """ndimage-style index folding: wrap, reflect (repeat edge), or None."""
    if mode == "wrap":
        return i % N
    if mode == "reflect":
        while i < 0 or i >= N:
            if i < 0:
                i = -1 - i
            else:
                i = 2 * N - 1 - i
        return i
    # zero extension
    return i if 0 <= i < N else None


_MODES = {PERIODIC: "wrap", NEUMANN: "reflect", DIRICHLET: "constant"}


def dense_mollifier(grid, eps, bc):
    """Dense matrix of the bump-kernel convolution, or None if degenerate."""
    shape = grid.resolution
    radii = [int(math.floor(eps / h)) for h in grid.spacing]
    if max(radii) < 1:
        return None
    offsets, weights = [], []
    for off in np.ndindex(*[2 * m + 1 for m in radii]):
        o = [off[a] - radii[a] for a in range(grid.dim)]
        r2 = sum((o[a] * grid.spacing[a]) ** 2 for a in range(grid.dim)) / eps**2
        if r2 < 1.0:
            offsets.append(o)
            weights.append((1.0 - r2) ** 2)
    wsum = sum(weights)
    mode = _MODES[bc]
    M = int(np.prod(shape))
    A = np.zeros((M, M))
    for idx in np.ndindex(*shape):
        row = _flat(idx, shape)
        for o, w in zip(offsets, weights):
            col = []
            for a in range(grid.dim):
                j = _fold(idx[a] + o[a], shape[a], mode)
                if j is None:
                    break
                col.append(j)
            else:
                A[row, _flat(tuple(col), shape)] += w / wsum
    return A


def dense_velocity_divergence(grid):
    """Stacked divergence matrix acting on (dim*M,) velocity vectors."""
    tag = PERIODIC if grid.bc_u == PERIODIC else DIRICHLET
    return np.hstack(dense_gradient(grid, tag))


def dense_leray_apply(arrays, grid):
    """Orthogonal projection onto the nullspace of the divergence matrix."""
    D = dense_velocity_divergence(grid)
    v = np.concatenate([a.ravel() for a in arrays])
    out = v - np.linalg.pinv(D, rcond=1e-12) @ (D @ v)
    M = int(np.prod(grid.resolution))
    return tuple(
        out[k * M : (k + 1) * M].reshape(grid.resolution)
        for k in range(grid.dim)
    )
