"""Kinetics, regularization maps, and coefficient operators.

The consumption/sensitivity pair (f, chi) enters everywhere through the
derived functions

    theta(s) = f(s) / chi(s)
    psi(s)   = integral_1^s theta(r)^(-1/2) dr
    rho(s)   = integral_1^s theta(r)^(-1)   dr

For the prototype pair (f(s) = a*s, chi = kappa) these have closed forms;
anything else falls back to adaptive quadrature.  The regularization map
h_eps(s) = log(1 + eps*s)/eps tempers the density nonlinearity with
0 <= h_eps(s) <= s and 0 < h_eps'(s) <= 1.

The stochastic forcing coefficients are the concrete rank-one family: a
linear drift h_gain*u, the Wiener operator g(u) dW = sum_l <u, e_l> psi dW^l
over a fixed orthonormal velocity basis, and scalar jump maps z*u (small
marks, compensated) and u/z (large marks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from .errors import (
    AssumptionViolation,
    MarkOutOfRegion,
    ModeCountMismatch,
    NegativeDensity,
    SingularKinetics,
)
from .grid import (
    NEUMANN,
    PERIODIC,
    ScalarField,
    VectorField,
    inner_vector,
    l2_norm_vector,
)
from .operators import gradient_values

_QUAD_TOL = 1e-10


def _as_table(table):
    xs, ys = table
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise AssumptionViolation("(A2)", "tabulated kinetics need matching 1D tables")
    if np.any(np.diff(xs) <= 0):
        raise AssumptionViolation("(A2)", "tabulated abscissae must increase")
    return xs, ys


@dataclass(frozen=True)
class Kinetics:
    """Consumption rate f and chemotactic sensitivity chi.

    Parameters
    ----------
    chi_kind : {"constant", "tabulated"}
    chi_value : float
        The constant kappa_chi (ignored for tabulated chi).
    f_kind : {"linear", "tabulated"}
    f_scale : float
        Slope of the linear prototype f(s) = f_scale * s.
    chi_table, f_table : pair of sequences, optional
        (abscissae, values) sampled on an increasing grid; evaluated by
        linear interpolation.
    """

    chi_kind: str = "constant"
    chi_value: float = 1.0
    f_kind: str = "linear"
    f_scale: float = 1.0
    chi_table: tuple = None
    f_table: tuple = None

    def __post_init__(self):
        if self.chi_kind not in ("constant", "tabulated"):
            raise AssumptionViolation("(A2)", f"unknown chi kind {self.chi_kind!r}")
        if self.f_kind not in ("linear", "tabulated"):
            raise AssumptionViolation("(A2)", f"unknown f kind {self.f_kind!r}")
        if self.chi_kind == "tabulated":
            object.__setattr__(self, "chi_table", _as_table(self.chi_table))
        elif self.chi_value <= 0:
            raise AssumptionViolation("(A2)", "chi must be positive")
        if self.f_kind == "tabulated":
            object.__setattr__(self, "f_table", _as_table(self.f_table))
        elif self.f_scale <= 0:
            raise AssumptionViolation("(A2)", "linear f needs a positive slope")

    @property
    def prototype(self):
        """True when (f, chi) is the closed-form linear/constant pair."""
        return self.chi_kind == "constant" and self.f_kind == "linear"

    def chi(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.chi_kind == "constant":
            return np.full_like(s, self.chi_value)
        xs, ys = self.chi_table
        return np.interp(s, xs, ys)

    def f(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.f_kind == "linear":
            return self.f_scale * s
        xs, ys = self.f_table
        return np.interp(s, xs, ys)

    def theta(self, s):
        return self.f(s) / self.chi(s)


def h_eps(s, eps):
    """Regularized identity log(1 + eps*s)/eps; 0 <= h_eps(s) <= s."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise NegativeDensity(f"h_eps needs s >= 0, got min {s.min()}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return np.log1p(eps * s) / eps


def h_eps_prime(s, eps):
    """Derivative 1/(1 + eps*s) of h_eps; lies in (0, 1] for s >= 0."""
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise NegativeDensity(f"h_eps_prime needs s >= 0, got min {s.min()}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return 1.0 / (1.0 + eps * s)


def _quad(func, a, b):
    val, _ = scipy.integrate.quad(func, a, b, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL)
    return val


def eval_theta_psi_rho(kin: Kinetics, s):
    """Evaluate (theta, psi, rho) at a scalar s > 0."""
    s = float(s)
    if s <= 0:
        raise SingularKinetics(f"theta/psi/rho need s > 0, got {s}")
    theta = float(kin.theta(s))
    if theta <= 0:
        raise SingularKinetics(f"theta({s}) = {theta} <= 0")
    if kin.prototype:
        # theta = a s / kappa; psi = 2 sqrt(kappa/a) (sqrt(s) - 1);
        # rho = (kappa/a) log s
        r = kin.chi_value / kin.f_scale
        psi = 2.0 * math.sqrt(r) * (math.sqrt(s) - 1.0)
        rho = r * math.log(s)
        return theta, psi, rho

    def theta_at(sigma):
        t = float(kin.theta(sigma))
        if t <= 0:
            raise SingularKinetics(f"theta({sigma}) = {t} <= 0")
        return t

    psi = _quad(lambda sigma: theta_at(sigma) ** -0.5, 1.0, s)
    rho = _quad(lambda sigma: 1.0 / theta_at(sigma), 1.0, s)
    return theta, psi, rho


def psi_values(kin: Kinetics, values):
    """Vectorized psi over an array of positive entries."""
    return _antiderivative_values(kin, values, -0.5, "psi")


def rho_values(kin: Kinetics, values):
    """Vectorized rho over an array of positive entries."""
    return _antiderivative_values(kin, values, -1.0, "rho")


def _antiderivative_values(kin, values, power, name):
    # psi and rho are the antiderivatives of theta^-1/2 and theta^-1
    # anchored at 1
    values = np.asarray(values, dtype=np.float64)
    if np.any(values <= 0):
        raise SingularKinetics(f"{name} needs strictly positive arguments")
    if kin.prototype:
        r = kin.chi_value / kin.f_scale
        if power == -0.5:
            return 2.0 * math.sqrt(r) * (np.sqrt(values) - 1.0)
        return r * np.log(values)
    # cumulative table spanning the data and the anchor point 1
    lo = min(float(values.min()), 1.0)
    hi = max(float(values.max()), 1.0)
    grid = np.linspace(lo, hi, 4097)
    theta = kin.theta(grid)
    if np.any(theta <= 0):
        raise SingularKinetics(f"theta <= 0 inside the {name} table range")
    integrand = theta**power
    cumulative = scipy.integrate.cumulative_trapezoid(integrand, grid, initial=0.0)
    anchor = np.interp(1.0, grid, cumulative)
    return np.interp(values, grid, cumulative) - anchor


def validate_kinetics(kin: Kinetics, c_max, samples=1024):
    """Numerically check the structural assumptions on (f, chi).

    Sampled on [0, 1.5*c_max]: f(0) = 0 and f > 0 beyond; f/chi strictly
    increasing with nonincreasing increments (concavity); f*chi
    nondecreasing.  Raises AssumptionViolation tagged "(A2)" on failure.
    """
    hi = 1.5 * float(c_max)
    if hi <= 0:
        raise AssumptionViolation("(A2)", "kinetics range needs c_max > 0")
    s = np.linspace(0.0, hi, samples)
    f = kin.f(s)
    chi = kin.chi(s)
    if abs(float(f[0])) > 1e-14:
        raise AssumptionViolation("(A2)", f"f(0) = {f[0]} != 0")
    if np.any(f[1:] <= 0):
        raise AssumptionViolation("(A2)", "f must be positive away from 0")
    if np.any(chi <= 0):
        raise AssumptionViolation("(A2)", "chi must be positive")
    ratio = f / chi
    d1 = np.diff(ratio)
    if np.any(d1 <= 0):
        raise AssumptionViolation("(A2)", "f/chi must be strictly increasing")
    if np.any(np.diff(d1) > 1e-12 * np.abs(d1[:-1]).max()):
        raise AssumptionViolation("(A2)", "f/chi must be concave")
    if np.any(np.diff(f * chi) < -1e-12 * np.abs(f * chi).max()):
        raise AssumptionViolation("(A2)", "f*chi must be nondecreasing")


# -- coupling terms -----------------------------------------------------------

def chemotactic_flux(n: ScalarField, c: ScalarField, kin: Kinetics, eps):
    """Plus-face fluxes of the drift term n h_eps'(n) chi(c) grad(c).

    Component a of the result holds the flux through the face between cells
    i and i+1 along axis a (see face_flux_divergence_values).  The mobility
    n h_eps'(n) is donor-cell upwinded by the sign of the face drift
    chi(c) dc, which keeps the explicit chemotaxis update monotone; no-flux
    walls get exactly zero flux because the mirrored face gradient vanishes.
    """
    grid = n.grid
    tag = grid.bc_n
    mobility = n.values * h_eps_prime(n.values, eps)
    chi = kin.chi(c.values)
    fluxes = []
    for axis in range(grid.dim):
        h = grid.spacing[axis]
        if tag == PERIODIC:
            c_hi = np.roll(c.values, -1, axis=axis)
            m_hi = np.roll(mobility, -1, axis=axis)
            chi_hi = np.roll(chi, -1, axis=axis)
        else:
            # mirror ghost: top wall face sees dc = 0
            c_hi = np.concatenate(
                [_shift_lo(c.values, axis), _edge_hi(c.values, axis)], axis=axis
            )
            m_hi = np.concatenate(
                [_shift_lo(mobility, axis), _edge_hi(mobility, axis)], axis=axis
            )
            chi_hi = np.concatenate(
                [_shift_lo(chi, axis), _edge_hi(chi, axis)], axis=axis
            )
        dc = (c_hi - c.values) / h
        drift = 0.5 * (chi + chi_hi) * dc
        donor = np.where(drift > 0.0, mobility, m_hi)
        fluxes.append(drift * donor)
    return VectorField(grid, tuple(fluxes))


def _shift_lo(a, axis):
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(1, None)
    return a[tuple(sl)]


def _edge_hi(a, axis):
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(-1, None)
    return a[tuple(sl)]


def consumption(n: ScalarField, c: ScalarField, kin: Kinetics, eps):
    """Pointwise sink h_eps(n) * f(c) of the substrate equation."""
    return ScalarField(n.grid, h_eps(n.values, eps) * kin.f(c.values))


def buoyancy(n: ScalarField, phi: ScalarField):
    """Pointwise forcing n * grad(phi) on the fluid."""
    grid = n.grid
    tag = PERIODIC if grid.periodic else NEUMANN
    gp = gradient_values(phi.values, grid, tag)
    return VectorField(grid, tuple(n.values * comp for comp in gp))


# -- stochastic coefficients ---------------------------------------------------

def _axis_modes_periodic(x, L, order):
    """1D real Fourier family: 1, cos, sin, cos, sin, ... of rising frequency."""
    if order == 0:
        return np.ones_like(x)
    m = (order + 1) // 2
    arg = 2.0 * np.pi * m * x / L
    return np.cos(arg) if order % 2 == 1 else np.sin(arg)


def _axis_modes_cosine(x, L, order):
    """1D cosine family: 1, cos(pi x/L), cos(2 pi x/L), ..."""
    if order == 0:
        return np.ones_like(x)
    return np.cos(np.pi * order * x / L)


def velocity_basis(grid, count):
    """First `count` members of the fixed orthonormal velocity basis.

    Scalar modes are tensor products of 1D families (real Fourier under
    periodic tags, cosine under walls), enumerated by rising total order and
    normalized to unit discrete L2 norm; mode l occupies velocity component
    l mod dim.  The families are exactly orthogonal under the midpoint
    quadrature, so the basis is orthonormal to machine precision.
    """
    dim = grid.dim
    scalar_count = -(-count // dim)  # ceil
    axis_fn = _axis_modes_periodic if grid.periodic else _axis_modes_cosine
    orders = []
    shell = 0
    while len(orders) < scalar_count:
        members = [
            combo
            for combo in np.ndindex(*(shell + 1,) * dim)
            if max(combo) == shell
        ]
        members.sort()
        orders.extend(members)
        shell += 1
    centers = [grid.axis_centers(a) for a in range(dim)]
    scalars = []
    for combo in orders[:scalar_count]:
        vals = np.ones(grid.resolution)
        for a in range(dim):
            shape = [1] * dim
            shape[a] = grid.resolution[a]
            axis_vals = axis_fn(centers[a], grid.extents[a], combo[a])
            vals = vals * axis_vals.reshape(shape)
        norm = math.sqrt(float((vals * vals).sum()) * grid.cell_volume)
        scalars.append(vals / norm)
    basis = []
    for l in range(count):
        comps = [np.zeros(grid.resolution) for _ in range(dim)]
        comps[l % dim] = scalars[l // dim]
        basis.append(VectorField(grid, tuple(comps)))
    return tuple(basis)


@dataclass(frozen=True)
class NoiseCoefficients:
    """Concrete stochastic coefficients of the velocity equation.

    psi_field is the fixed (pre-projected, divergence-free) direction of
    the rank-one Wiener operator; h_gain scales the linear drift; basis
    holds the first wiener_modes elements of the orthonormal velocity
    basis; jump_spec carries the mark/intensity lists.
    """

    psi_field: VectorField
    h_gain: float
    wiener_modes: int
    jump_spec: object
    basis: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.wiener_modes < 1:
            raise ModeCountMismatch(
                f"need at least one Wiener mode, got {self.wiener_modes}"
            )
        if self.basis is None:
            object.__setattr__(
                self,
                "basis",
                velocity_basis(self.psi_field.grid, self.wiener_modes),
            )


def make_noise_coefficients(psi_raw, h_gain, wiener_modes, jump_spec, ws):
    """Project psi divergence-free and bundle the noise coefficients."""
    from .operators import leray_project

    psi, _ = leray_project(psi_raw, ws)
    return NoiseCoefficients(psi, float(h_gain), int(wiener_modes), jump_spec)


def g_coefficients(u: VectorField, coeffs: NoiseCoefficients):
    """Per-mode loadings <u, e_l> of the rank-one Wiener operator."""
    return np.array([inner_vector(u, e) for e in coeffs.basis])


def apply_g(u: VectorField, coeffs: NoiseCoefficients, dW):
    """g(u) dW = sum_l <u, e_l> dW^l * psi; linear in u and in dW."""
    dW = np.asarray(dW, dtype=np.float64)
    if dW.shape != (coeffs.wiener_modes,):
        raise ModeCountMismatch(
            f"need {coeffs.wiener_modes} increments, got shape {dW.shape}"
        )
    scale = float(g_coefficients(u, coeffs) @ dW)
    return VectorField(
        u.grid, tuple(scale * comp for comp in coeffs.psi_field.arrays)
    )


def jump_K(u: VectorField, z_norm):
    """Small-mark jump map K(u, z) = z*u on 0 < z < 1 (compensated side)."""
    z = float(z_norm)
    if not 0.0 < z < 1.0:
        raise MarkOutOfRegion(f"small marks need 0 < z < 1, got {z}")
    return VectorField(u.grid, tuple(z * comp for comp in u.arrays))


def jump_G(u: VectorField, z_norm):
    """Large-mark jump map G(u, z) = u/z on z >= 1 (uncompensated side)."""
    z = float(z_norm)
    if z < 1.0:
        raise MarkOutOfRegion(f"large marks need z >= 1, got {z}")
    return VectorField(u.grid, tuple(comp / z for comp in u.arrays))


@dataclass(frozen=True)
class ModelParams:
    """Physical setup: kinetics, potential, regularization, diffusivities."""

    kinetics: Kinetics
    phi: ScalarField
    eps: float
    noise: NoiseCoefficients
    diffusion: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if len(self.diffusion) != 3 or any(d <= 0 for d in self.diffusion):
            raise ValueError(f"diffusion needs three positive entries, got "
                             f"{self.diffusion}")
        if not np.all(np.isfinite(self.phi.values)):
            raise FloatingPointError("potential must be finite")
