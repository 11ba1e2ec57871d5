"""Finite-difference operators, the discrete Leray projection, and the
velocity mollifier.

Stencil conventions
-------------------
All operators act on cell-centered values with one layer of ghost cells
synthesized per boundary tag:

* ``periodic``       wraparound,
* ``neumann-zero``   mirror ghost (ghost equals the adjacent interior cell,
  so the face-normal derivative vanishes),
* ``dirichlet-zero`` antisymmetric ghost (ghost equals minus the adjacent
  interior cell, so the value at the wall face vanishes).

The divergence of a gradient composed through these ghosts is the wide
(spacing 2h) Laplacian; the pressure Poisson solve in `leray_project` uses
exactly that composition so the projected field is discretely
divergence-free to solver tolerance, idempotently.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.fft
from scipy.sparse.linalg import LinearOperator, cg

from .errors import BoundaryMismatch, SolverDivergence
from .grid import (
    DIRICHLET,
    NEUMANN,
    PERIODIC,
    _ALL_TAGS,
    Grid,
    ScalarField,
    VectorField,
)

logger = logging.getLogger(__name__)

_KERNEL_WARNED = set()


def _check_tag(grid, tag):
    if tag not in _ALL_TAGS:
        raise BoundaryMismatch(f"unknown boundary tag {tag!r}")
    if (tag == PERIODIC) != grid.periodic:
        raise BoundaryMismatch(
            f"tag {tag!r} incompatible with a "
            f"{'periodic' if grid.periodic else 'walled'} grid"
        )


def _slice_axis(a, axis, start, stop):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return a[tuple(idx)]


def _pad1(a, axis, tag):
    """Return `a` extended by one ghost layer on both ends of `axis`."""
    lo = _slice_axis(a, axis, 0, 1)
    hi = _slice_axis(a, axis, -1, None)
    if tag == PERIODIC:
        first, last = hi, lo
    elif tag == NEUMANN:
        first, last = lo, hi
    elif tag == DIRICHLET:
        first, last = -lo, -hi
    else:  # pragma: no cover - guarded by _check_tag
        raise BoundaryMismatch(tag)
    return np.concatenate([first, a, last], axis=axis)


def _lo(pad, axis):
    return _slice_axis(pad, axis, 0, -2)


def _hi(pad, axis):
    return _slice_axis(pad, axis, 2, None)


def laplacian_values(values, grid, tag):
    """Compact 5/7-point Laplacian on a raw array."""
    out = np.zeros_like(values)
    for axis in range(grid.dim):
        h2 = grid.spacing[axis] ** 2
        pad = _pad1(values, axis, tag)
        out += (_lo(pad, axis) - 2.0 * values + _hi(pad, axis)) / h2
    return out


def laplacian(f, bc):
    """Second-order compact Laplacian of a ScalarField under tag `bc`."""
    _check_tag(f.grid, bc)
    return ScalarField(f.grid, laplacian_values(f.values, f.grid, bc))


def gradient_values(values, grid, tag):
    """Centered gradient on a raw array; returns a list of arrays."""
    comps = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        pad = _pad1(values, axis, tag)
        comps.append((_hi(pad, axis) - _lo(pad, axis)) / (2.0 * h))
    return comps


def gradient(f, bc):
    """Centered-difference gradient of a ScalarField under tag `bc`."""
    _check_tag(f.grid, bc)
    return VectorField(f.grid, tuple(gradient_values(f.values, f.grid, bc)))


def divergence_values(arrays, grid, tag):
    out = np.zeros(grid.resolution)
    for axis, comp in enumerate(arrays):
        h = grid.spacing[axis]
        pad = _pad1(comp, axis, tag)
        out += (_hi(pad, axis) - _lo(pad, axis)) / (2.0 * h)
    return out


def divergence(v, bc):
    """Centered-difference divergence of a VectorField under tag `bc`."""
    _check_tag(v.grid, bc)
    return ScalarField(v.grid, divergence_values(v.arrays, v.grid, bc))


def face_flux_divergence_values(flux_arrays, grid, tag):
    """Conservative divergence of plus-face fluxes.

    `flux_arrays[a][i]` holds the flux through the face between cell `i` and
    cell `i+1` along axis `a` (the top entry is the wall face under wall
    tags, the wraparound face under periodic).  The result telescopes to
    zero over the domain whenever wall fluxes vanish.
    """
    out = np.zeros(grid.resolution)
    for axis, flux in enumerate(flux_arrays):
        h = grid.spacing[axis]
        if tag == PERIODIC:
            minus = np.roll(flux, 1, axis=axis)
        else:
            # wall closure: flux through the bottom wall face is zero
            first = np.zeros_like(np.take(flux, [0], axis=axis))
            minus = np.concatenate(
                [first, _slice_axis(flux, axis, 0, -1)], axis=axis
            )
        out += (flux - minus) / h
    return out


def upwind_face_flux(face_vel, pad, axis):
    """Donor-cell flux through faces given face-normal velocity.

    `pad` is the advected quantity with one ghost layer; `face_vel[j]` sits
    between `pad[j]` and `pad[j+1]`.
    """
    left = _slice_axis(pad, axis, 0, -1)
    right = _slice_axis(pad, axis, 1, None)
    return np.maximum(face_vel, 0.0) * left + np.minimum(face_vel, 0.0) * right


def advect_values(u_arrays, values, grid, u_tag, f_tag, scheme="upwind"):
    """div(u f) on raw arrays via face fluxes; see `advect_conservative`."""
    out = np.zeros(grid.resolution)
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        upad = _pad1(u_arrays[axis], axis, u_tag)
        fpad = _pad1(values, axis, f_tag)
        # faces j+1/2 for j = -1 .. N-1 (N+1 faces including both walls)
        face_vel = 0.5 * (
            _slice_axis(upad, axis, 0, -1) + _slice_axis(upad, axis, 1, None)
        )
        if scheme == "upwind":
            flux = upwind_face_flux(face_vel, fpad, axis)
        elif scheme == "centered":
            flux = face_vel * 0.5 * (
                _slice_axis(fpad, axis, 0, -1) + _slice_axis(fpad, axis, 1, None)
            )
        else:
            raise ValueError(f"unknown advection scheme {scheme!r}")
        out += (
            _slice_axis(flux, axis, 1, None) - _slice_axis(flux, axis, 0, -1)
        ) / h
    return out


def advect_conservative(u, f, u_bc, f_bc, scheme="upwind"):
    """Discrete div(u f) with first-order upwind (or centered) face fluxes.

    Face-normal velocities are averages of the two adjacent cell-centered
    values; under `dirichlet-zero` the antisymmetric ghost makes every wall
    face velocity exactly zero, so the total integral telescopes to zero
    under both closures.
    """
    _check_tag(u.grid, u_bc)
    _check_tag(f.grid, f_bc)
    return ScalarField(
        f.grid, advect_values(u.arrays, f.values, f.grid, u_bc, f_bc, scheme)
    )


class OperatorWorkspace:
    """Per-grid solver scratch: transform symbols, CG settings, kernel cache.

    Bound to exactly one grid.  Not safe to share between concurrent calls;
    use one workspace per worker.
    """

    def __init__(self, grid: Grid, tol=1e-10, maxiter=None):
        self.grid = grid
        self.tol = float(tol)
        self.maxiter = int(maxiter) if maxiter is not None else 10 * grid.num_cells
        self._symbols = {}
        self._kernels = {}

    # -- transform symbols -------------------------------------------------

    def _axis_freqs(self, axis, rfft_last):
        N = self.grid.resolution[axis]
        if rfft_last and axis == self.grid.dim - 1:
            return np.arange(N // 2 + 1)
        return np.fft.fftfreq(N, d=1.0 / N)

    def _broadcast(self, axis, arr):
        shape = [1] * self.grid.dim
        shape[axis] = arr.shape[0]
        return arr.reshape(shape)

    def symbol(self, kind, tag):
        """Cached eigenvalue array of a stencil under its diagonalizing
        transform: `compact` is the 5/7-point Laplacian, `wide` the composed
        divergence-of-gradient operator used by the projection."""
        key = (kind, tag)
        if key in self._symbols:
            return self._symbols[key]
        g = self.grid
        total = None
        for axis in range(g.dim):
            h = g.spacing[axis]
            N = g.resolution[axis]
            if tag == PERIODIC:
                k = self._axis_freqs(axis, rfft_last=True)
                ang = 2.0 * math.pi * k / N
                # sine vanishes exactly at the mean and Nyquist modes; the
                # floating-point values there are ~1e-16 and would otherwise
                # amplify transform roundoff by ~1e30 in the null space
                null = (k == 0) | (2 * np.abs(k) == N)
            elif tag == NEUMANN:
                ang = math.pi * np.arange(N) / N
                null = np.arange(N) == 0
            elif tag == DIRICHLET:
                ang = math.pi * np.arange(1, N + 1) / N
                null = np.zeros(N, dtype=bool)
            else:
                raise BoundaryMismatch(tag)
            if kind == "compact":
                # cos(0) = 1 exactly, so the mean-mode zero needs no help
                lam = (2.0 * np.cos(ang) - 2.0) / h**2
            elif kind == "wide":
                s = np.sin(ang)
                s[null] = 0.0
                lam = -(s**2) / h**2
            else:
                raise ValueError(kind)
            lam = self._broadcast(axis, lam)
            total = lam if total is None else total + lam
        self._symbols[key] = total
        return total

    def _forward(self, values, tag):
        if tag == PERIODIC:
            return scipy.fft.rfftn(values)
        if tag == NEUMANN:
            return scipy.fft.dctn(values, type=2, norm="ortho")
        if tag == DIRICHLET:
            return scipy.fft.dstn(values, type=2, norm="ortho")
        raise BoundaryMismatch(tag)

    def _inverse(self, coeffs, tag):
        if tag == PERIODIC:
            return scipy.fft.irfftn(coeffs, s=self.grid.resolution)
        if tag == NEUMANN:
            return scipy.fft.idctn(coeffs, type=2, norm="ortho")
        if tag == DIRICHLET:
            return scipy.fft.idstn(coeffs, type=2, norm="ortho")
        raise BoundaryMismatch(tag)

    def helmholtz_solve(self, values, alpha, tag):
        """Solve (I - alpha * Laplacian_compact) x = values exactly in the
        stencil's eigenbasis (alpha = dt * diffusivity >= 0)."""
        lam = self.symbol("compact", tag)
        coeffs = self._forward(values, tag)
        coeffs = coeffs / (1.0 - alpha * lam)
        return self._inverse(coeffs, tag)

    def diffusion_solve(self, values, alpha, tag, scheme="backward-euler"):
        """One implicit diffusion update with weight alpha = dt * diffusivity.

        backward-euler solves (I - alpha L) x = values; crank-nicolson
        solves (I - alpha/2 L) x = (I + alpha/2 L) values.  Both preserve
        the field mean exactly (the mean-mode eigenvalue is zero).
        """
        lam = self.symbol("compact", tag)
        coeffs = self._forward(values, tag)
        if scheme == "backward-euler":
            coeffs = coeffs / (1.0 - alpha * lam)
        elif scheme == "crank-nicolson":
            coeffs = coeffs * (1.0 + 0.5 * alpha * lam) / (1.0 - 0.5 * alpha * lam)
        else:
            raise ValueError(f"unknown diffusion scheme {scheme!r}")
        return self._inverse(coeffs, tag)


def leray_project(v, ws: OperatorWorkspace):
    """Project a VectorField onto the discretely divergence-free subspace.

    Solves the pressure Poisson problem with the wide operator
    div(grad(p)) so that `divergence(v - grad p)` equals the solve residual
    exactly: spectrally (machine precision) under periodic tags, by
    conjugate gradients on walled grids (neumann pressure, velocity-style
    divergence).  Returns `(projected, pressure)` with mean-zero pressure.
    """
    grid = v.grid
    if grid is not ws.grid and grid != ws.grid:
        raise BoundaryMismatch("workspace bound to a different grid")
    if grid.periodic:
        div = divergence_values(v.arrays, grid, PERIODIC)
        sym = ws.symbol("wide", PERIODIC)
        rhs = scipy.fft.rfftn(div)
        # sym has exact zeros on the null modes (mean, Nyquist); divide only
        # where it is nonzero and drop the null components of the rhs
        safe = np.where(sym != 0.0, sym, 1.0)
        phat = np.where(sym != 0.0, rhs / safe, 0.0)
        p = scipy.fft.irfftn(phat, s=grid.resolution)
        gp = gradient_values(p, grid, PERIODIC)
    else:
        div = divergence_values(v.arrays, grid, DIRICHLET)
        p = _pressure_cg(div, grid, ws)
        gp = gradient_values(p, grid, NEUMANN)
    p = p - p.mean()
    out = tuple(a - g for a, g in zip(v.arrays, gp))
    return VectorField(grid, out), ScalarField(grid, p)


def _neg_div_grad(p, grid):
    """-div(grad p) with neumann pressure ghosts and velocity-style
    (dirichlet) divergence ghosts; symmetric positive semidefinite."""
    return -divergence_values(gradient_values(p, grid, NEUMANN), grid, DIRICHLET)


def _pressure_cg(div, grid, ws):
    shape = grid.resolution
    b = -(div - div.mean()).ravel()

    def apply(x):
        return _neg_div_grad(x.reshape(shape), grid).ravel()

    A = LinearOperator((b.size, b.size), matvec=apply, dtype=np.float64)
    x, info = cg(A, b, rtol=ws.tol, atol=0.0, maxiter=ws.maxiter)
    if info != 0:
        raise SolverDivergence(
            f"pressure CG failed to reach rtol={ws.tol} in {ws.maxiter} iterations"
        )
    return x.reshape(shape)


def _bump_kernel(grid, eps, dim):
    """Normalized polynomial bump (1 - (r/eps)^2)^2 sampled on cell offsets."""
    radii = [int(math.floor(eps / h)) for h in grid.spacing]
    if max(radii) < 1:
        return None
    slices = [np.arange(-m, m + 1) * h for m, h in zip(radii, grid.spacing)]
    mesh = np.meshgrid(*slices, indexing="ij")
    r2 = sum(x**2 for x in mesh) / eps**2
    kern = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** 2, 0.0)
    return kern / kern.sum()


_MOLLIFY_MODES = {PERIODIC: "wrap", NEUMANN: "reflect", DIRICHLET: "constant"}


def mollify(v, eps, bc=None, ws: OperatorWorkspace = None):
    """Convolve each component with a compact bump kernel of radius `eps`.

    The kernel is (1 - (r/eps)^2)^2 truncated to the lattice and normalized
    to unit mass, so constants are preserved under wrap/reflect closures and
    the L^2 norm never grows (Young's inequality; the dirichlet closure
    extends by zero, matching convolution of the zero-extended field).
    Radii below one cell fall back to the identity with a logged warning.
    """
    import scipy.ndimage

    grid = v.grid
    if bc is None:
        bc = grid.bc_u
    _check_tag(grid, bc)
    if eps <= 0:
        raise ValueError(f"mollifier radius must be positive, got {eps}")
    cache = ws._kernels if ws is not None else {}
    key = (eps, bc)
    kern = cache.get(key)
    if kern is None:
        kern = _bump_kernel(grid, eps, grid.dim)
        cache[key] = kern
    if kern is None:
        warn_key = (grid.resolution, grid.extents, eps)
        if warn_key not in _KERNEL_WARNED:
            _KERNEL_WARNED.add(warn_key)
            logger.warning(
                "mollifier radius %g below grid spacing %s; using identity",
                eps,
                grid.spacing,
            )
        return v.copy()
    mode = _MOLLIFY_MODES[bc]
    out = tuple(
        scipy.ndimage.convolve(a, kern, mode=mode, cval=0.0) for a in v.arrays
    )
    return VectorField(grid, out)
