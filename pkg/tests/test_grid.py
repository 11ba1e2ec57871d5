import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scns.errors import (
    IncompatibleBoundaryConditions,
    InvalidDimension,
    InvalidExponent,
    InvalidResolution,
)
from scns.grid import (
    ScalarField,
    VectorField,
    build_grid,
    integrate,
    lp_norm,
    scalar_field,
)


def test_spacing_unit_square():
    g = build_grid(2, (1.0, 1.0), (8, 8), "periodic")
    assert g.spacing == (0.125, 0.125)


def test_minimal_3d_box():
    g = build_grid(3, (1.0, 1.0, 1.0), (4, 4, 4), "box")
    assert g.dim == 3
    assert g.bc_n == "neumann-zero"
    assert g.bc_u == "dirichlet-zero"


def test_resolution_floor():
    with pytest.raises(InvalidResolution):
        build_grid(2, (1.0, 1.0), (2, 2), "periodic")


def test_dimension_gate():
    with pytest.raises(InvalidDimension):
        build_grid(1, (1.0,), (8,), "periodic")
    with pytest.raises(InvalidDimension):
        build_grid(4, (1.0,) * 4, (8,) * 4, "periodic")


def test_bad_extent():
    with pytest.raises(InvalidResolution):
        build_grid(2, (1.0, -1.0), (8, 8), "periodic")


def test_variable_tag_gates():
    # dirichlet is a velocity-only tag, neumann a scalar-only tag
    with pytest.raises(IncompatibleBoundaryConditions):
        build_grid(2, (1, 1), (8, 8), {"n": "dirichlet-zero",
                                       "c": "neumann-zero",
                                       "u": "dirichlet-zero"})
    with pytest.raises(IncompatibleBoundaryConditions):
        build_grid(2, (1, 1), (8, 8), {"n": "neumann-zero",
                                       "c": "neumann-zero",
                                       "u": "neumann-zero"})
    # mixing periodic with walls is rejected
    with pytest.raises(IncompatibleBoundaryConditions):
        build_grid(2, (1, 1), (8, 8), {"n": "periodic",
                                       "c": "neumann-zero",
                                       "u": "dirichlet-zero"})


def test_integrate_constants():
    g = build_grid(2, (1.0, 1.0), (8, 8), "periodic")
    assert integrate(scalar_field(g, 1.0)) == 1.0
    g2 = build_grid(2, (2.0, 2.0), (8, 8), "periodic")
    assert integrate(scalar_field(g2, 3.0)) == 12.0


def test_integrate_sine_cancels():
    g = build_grid(2, (1.0, 1.0), (64, 64), "periodic")
    x, _ = g.meshgrid()
    assert abs(integrate(ScalarField(g, np.sin(2 * np.pi * x)))) <= 1e-12


def test_lp_norm_examples():
    g = build_grid(2, (1.0, 1.0), (8, 8), "periodic")
    f = scalar_field(g, 2.0)
    assert lp_norm(f, 2) == pytest.approx(2.0, abs=1e-14)
    assert lp_norm(f, math.inf) == 2.0
    vals = np.zeros((8, 8))
    vals[3, 5] = 5.0
    assert lp_norm(ScalarField(g, vals), math.inf) == 5.0
    with pytest.raises(InvalidExponent):
        lp_norm(f, 0.5)


def test_field_shape_and_finiteness():
    g = build_grid(2, (1.0, 1.0), (8, 8), "periodic")
    with pytest.raises(InvalidResolution):
        ScalarField(g, np.zeros((8, 4)))
    bad = np.zeros((8, 8))
    bad[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        ScalarField(g, bad)
    with pytest.raises(InvalidDimension):
        VectorField(g, (np.zeros((8, 8)),))


@st.composite
def field_pair(draw):
    n = draw(st.integers(min_value=4, max_value=10))
    g = build_grid(2, (1.0, 1.0), (n, n), "periodic")
    elems = st.floats(min_value=-10, max_value=10, allow_nan=False)
    f = draw(st.lists(elems, min_size=n * n, max_size=n * n))
    h = draw(st.lists(elems, min_size=n * n, max_size=n * n))
    return (
        g,
        np.array(f).reshape(n, n),
        np.array(h).reshape(n, n),
    )


@given(field_pair(),
       st.floats(min_value=-5, max_value=5),
       st.floats(min_value=-5, max_value=5))
@settings(max_examples=25, deadline=None)
def test_integrate_linearity(pair, a, b):
    g, f, h = pair
    lhs = integrate(ScalarField(g, a * f + b * h))
    rhs = a * integrate(ScalarField(g, f)) + b * integrate(ScalarField(g, h))
    scale = abs(rhs) + 1.0
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(field_pair(), st.integers(min_value=1, max_value=4),
       st.integers(min_value=0, max_value=4))
@settings(max_examples=25, deadline=None)
def test_lp_monotone_on_unit_domain(pair, p, dq):
    # Jensen: on a probability space the L^p norms increase with p
    g, f, _ = pair
    fld = ScalarField(g, f)
    assert lp_norm(fld, p) <= lp_norm(fld, p + dq) + 1e-12


@given(field_pair())
@settings(max_examples=25, deadline=None)
def test_linf_is_exact_max(pair):
    g, f, _ = pair
    assert lp_norm(ScalarField(g, f), math.inf) == np.abs(f).max()
