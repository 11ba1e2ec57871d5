"""Rectangular grids, cell-centered fields, and midpoint quadrature.

All fields live at cell centers; the quadrature is the midpoint rule, which
is exact for constants, second-order for smooth integrands, and matches the
inner product under which the difference stencils in :mod:`scns.operators`
are (anti)symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    IncompatibleBoundaryConditions,
    InvalidDimension,
    InvalidExponent,
    InvalidResolution,
)

PERIODIC = "periodic"
NEUMANN = "neumann-zero"
DIRICHLET = "dirichlet-zero"

_SCALAR_TAGS = (NEUMANN, PERIODIC)
_VELOCITY_TAGS = (DIRICHLET, PERIODIC)
_ALL_TAGS = (PERIODIC, NEUMANN, DIRICHLET)


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular lattice with per-variable boundary tags.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    extents : tuple of float
        Physical box size per axis.
    resolution : tuple of int
        Cells per axis (at least 4 each).
    bc_n, bc_c, bc_u : str
        Boundary tags for the density, substrate, and velocity variables.
    """

    dim: int
    extents: tuple
    resolution: tuple
    bc_n: str
    bc_c: str
    bc_u: str

    @property
    def spacing(self):
        return tuple(L / N for L, N in zip(self.extents, self.resolution))

    @property
    def cell_volume(self):
        return math.prod(self.spacing)

    @property
    def num_cells(self):
        return math.prod(self.resolution)

    @property
    def periodic(self):
        return self.bc_u == PERIODIC

    def bc_of(self, var):
        return {"n": self.bc_n, "c": self.bc_c, "u": self.bc_u}[var]

    def axis_centers(self, axis):
        """Cell-center coordinates along one axis."""
        h = self.spacing[axis]
        return (np.arange(self.resolution[axis]) + 0.5) * h

    def meshgrid(self):
        """Cell-center coordinate arrays, one per axis, each of full shape."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")


def build_grid(dim, extents, resolution, bc_spec):
    """Construct a validated :class:`Grid`.

    Parameters
    ----------
    dim : int
        2 or 3.
    extents, resolution : sequences of length `dim`
        Box size and cell count per axis.
    bc_spec : str or mapping
        Either the shorthand ``"periodic"`` / ``"box"`` (no-flux scalars,
        no-slip velocity) or a mapping with keys ``n``, ``c``, ``u``.
    """
    if dim not in (2, 3):
        raise InvalidDimension(f"dim must be 2 or 3, got {dim!r}")
    extents = tuple(float(L) for L in extents)
    resolution = tuple(int(N) for N in resolution)
    if len(extents) != dim or len(resolution) != dim:
        raise InvalidDimension(
            f"extents/resolution must have length {dim}, "
            f"got {len(extents)}/{len(resolution)}"
        )
    if any(L <= 0 for L in extents):
        raise InvalidResolution(f"extents must be positive, got {extents}")
    if any(N < 4 for N in resolution):
        raise InvalidResolution(f"resolution must be >= 4 per axis, got {resolution}")

    if bc_spec == "periodic":
        tags = {"n": PERIODIC, "c": PERIODIC, "u": PERIODIC}
    elif bc_spec == "box":
        tags = {"n": NEUMANN, "c": NEUMANN, "u": DIRICHLET}
    else:
        try:
            tags = {v: bc_spec[v] for v in ("n", "c", "u")}
        except (KeyError, TypeError):
            raise IncompatibleBoundaryConditions(
                f"bc_spec must be 'periodic', 'box', or a mapping with keys "
                f"n, c, u; got {bc_spec!r}"
            ) from None

    for var, allowed in (("n", _SCALAR_TAGS), ("c", _SCALAR_TAGS), ("u", _VELOCITY_TAGS)):
        if tags[var] not in allowed:
            raise IncompatibleBoundaryConditions(
                f"variable {var!r} admits {allowed}, got {tags[var]!r}"
            )
    periodic_flags = {tag == PERIODIC for tag in tags.values()}
    if len(periodic_flags) != 1:
        raise IncompatibleBoundaryConditions(
            f"periodic and wall conditions cannot be mixed on one box: {tags}"
        )

    return Grid(dim, extents, resolution, tags["n"], tags["c"], tags["u"])


def _as_values(grid, values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != grid.resolution:
        raise InvalidResolution(
            f"values shape {arr.shape} does not match grid {grid.resolution}"
        )
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError("field values must be finite")
    return arr


@dataclass
class ScalarField:
    """One real value per cell, stored axis-major (C order)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.grid, self.values)

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """`dim` scalar components on a shared grid."""

    grid: Grid
    components: tuple

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, ScalarField) else ScalarField(self.grid, c)
            for c in self.components
        )
        if len(comps) != self.grid.dim:
            raise InvalidDimension(
                f"need {self.grid.dim} components, got {len(comps)}"
            )
        for c in comps:
            if c.grid is not self.grid and c.grid != self.grid:
                raise IncompatibleBoundaryConditions(
                    "vector components must share one grid"
                )
        self.components = comps

    @property
    def arrays(self):
        return tuple(c.values for c in self.components)

    def copy(self):
        return VectorField(self.grid, tuple(c.values.copy() for c in self.components))


def scalar_field(grid, values):
    """Wrap an array (or broadcastable constant) as a ScalarField."""
    arr = np.broadcast_to(np.asarray(values, dtype=np.float64), grid.resolution)
    return ScalarField(grid, np.array(arr))


def vector_field(grid, arrays):
    return VectorField(grid, tuple(arrays))


def zero_vector_field(grid):
    return VectorField(
        grid, tuple(np.zeros(grid.resolution) for _ in range(grid.dim))
    )


def integrate(f):
    """Midpoint-rule integral of a ScalarField over the box."""
    return float(f.values.sum() * f.grid.cell_volume)


def lp_norm(f, p):
    """L^p norm under the midpoint quadrature; `p = math.inf` gives max |f|."""
    if p == math.inf or p == np.inf:
        return float(np.abs(f.values).max())
    p = float(p)
    if p < 1.0:
        raise InvalidExponent(f"p must be >= 1 or inf, got {p}")
    vol = f.grid.cell_volume
    return float((np.abs(f.values) ** p).sum() * vol) ** (1.0 / p)


def l2_norm_vector(v):
    """L^2 norm of a VectorField under the midpoint quadrature."""
    total = sum(float((a * a).sum()) for a in v.arrays)
    return math.sqrt(total * v.grid.cell_volume)


def inner(f, g):
    """Midpoint L^2 inner product of two ScalarFields."""
    return float((f.values * g.values).sum() * f.grid.cell_volume)


def inner_vector(v, w):
    """Midpoint L^2 inner product of two VectorFields."""
    total = sum(float((a * b).sum()) for a, b in zip(v.arrays, w.arrays))
    return total * v.grid.cell_volume
