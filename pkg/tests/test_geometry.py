import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motsflow.geometry import (
    NoSignChange,
    find_mots_radius_bruteforce,
    gradient_function,
    mean_curvature,
    sphere_geometry,
    theta_plus,
)
from motsflow.grid import Field, RadialGrid
from motsflow.initial_data import DataFamily, apply_interior_modification, make_dataset
from scipy.optimize import brentq

# outermost root of 2/r - 6 exp(-(r - 0.7)^2 / 0.04), 30-digit findroot
GAUSSIAN_OUTER_ROOT = 0.8992391561312086
GAUSSIAN_INNER_ROOT = 0.5567545483728371


def test_flat_sphere(flat):
    g = sphere_geometry(flat, 0.5)
    assert g.H == 4.0 and g.P == 0.0 and g.theta_plus == 4.0
    assert g.area_radius == 0.5


def test_schwarzschild_horizon_is_marginal(schwarzschild):
    assert abs(sphere_geometry(schwarzschild, 0.5).theta_plus) < 1e-15


@pytest.mark.parametrize("c", [-0.7, 0.0, 0.3, 2.0])
def test_constant_trace_expansion(c):
    data = make_dataset(DataFamily("constant_trace", c=c))
    for r in (0.1, 0.37, 0.9):
        g = sphere_geometry(data, r)
        assert g.theta_plus == pytest.approx(2 / r + 2 * c, rel=1e-14)
        assert g.theta_plus == g.H + g.P


def test_sphere_geometry_outside_domain(flat):
    with pytest.raises(ValueError):
        sphere_geometry(flat, 2.0)


def test_bruteforce_schwarzschild(schwarzschild):
    est = find_mots_radius_bruteforce(schwarzschild)
    assert est.found and est.method == "bisection"
    assert est.oracle_radius == pytest.approx(0.5, abs=1e-9)


def test_bruteforce_flat_reports_no_mots(flat):
    est = find_mots_radius_bruteforce(flat)
    assert not est.found and est.method == "no_mots"


def test_bruteforce_gaussian_outermost(gaussian):
    est = find_mots_radius_bruteforce(gaussian)
    assert est.oracle_radius == pytest.approx(GAUSSIAN_OUTER_ROOT, abs=1e-9)
    # the inner root exists but is not the answer
    inner = brentq(lambda r: float(theta_plus(gaussian, r)), 0.3, 0.7, xtol=1e-14)
    assert inner == pytest.approx(GAUSSIAN_INNER_ROOT, abs=1e-12)
    assert abs(est.oracle_radius - inner) > 0.3
    assert abs(theta_plus(gaussian, est.oracle_radius)) < 1e-8
    r = np.linspace(est.oracle_radius + 1e-6, gaussian.r_out, 2000)
    assert np.all(theta_plus(gaussian, r) > 0)


def test_bruteforce_trapped_outer_end(gaussian):
    with pytest.raises(NoSignChange):
        find_mots_radius_bruteforce(gaussian, (0.3, 0.8))


def test_gradient_function_constant(schwarzschild):
    grid = RadialGrid(0.3, 1.5, 101)
    v = gradient_function(schwarzschild, Field.constant(grid, 4.2))
    assert np.all(v.values == 1.0)


def test_gradient_function_linear_exact(flat):
    grid = RadialGrid(0.05, 1.0, 77)
    v = gradient_function(flat, Field.from_function(grid, lambda r: r))
    assert np.allclose(v.values, np.sqrt(2.0), rtol=0, atol=1e-13)


def test_gradient_function_quadratic_exact(flat):
    # centered and second-order one-sided stencils difference r^2 exactly
    grid = RadialGrid(0.05, 1.0, 101)
    v = gradient_function(flat, Field.from_function(grid, lambda r: r**2))
    assert np.allclose(v.values, np.sqrt(1 + 4 * grid.r**2), rtol=0, atol=1e-12)


def test_gradient_function_second_order(flat):
    errs = []
    for N in (101, 201, 401):
        grid = RadialGrid(0.05, 1.0, N)
        v = gradient_function(flat, Field.from_function(grid, lambda r: r**3))
        errs.append(np.max(np.abs(v.values - np.sqrt(1 + 9 * grid.r**4))[1:-1]))
    for coarse, fine in zip(errs, errs[1:]):
        assert coarse / fine == pytest.approx(4.0, rel=0.1)


def test_flat_always_untrapped():
    data = make_dataset(DataFamily("flat", r_domain=(1e-3, 50.0)))
    assert np.all(theta_plus(data, data.dense_radii()) > 0)


def test_schwarzschild_sign(schwarzschild):
    r = schwarzschild.dense_radii()
    th = theta_plus(schwarzschild, r)
    assert np.all(th[r > 0.5 + 1e-9] > 0)
    assert np.all(th[r < 0.5 - 1e-9] < 0)


@pytest.mark.parametrize("fam", [
    DataFamily("flat"),
    DataFamily("schwarzschild_isotropic", mass=1.0),
    DataFamily("schwarzschild_isotropic", mass=0.7, n=3),
    DataFamily("gaussian_pinch", c=3.0),
])
def test_mean_curvature_matches_area_variation(fam):
    data = make_dataset(fam)
    d = 1e-4
    for r in np.linspace(data.r_in * 1.1, data.r_out * 0.95, 9):
        A = data.area
        dA = (8 * (A(r + d) - A(r - d)) - (A(r + 2 * d) - A(r - 2 * d))) / (12 * d)
        H_fd = dA / (data.phi(r) ** 2 * data.area(r))
        assert float(mean_curvature(data, r)) == pytest.approx(float(H_fd), rel=1e-8, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(amp=st.floats(-3, 3), r_max=st.floats(0.3, 1.5), r=st.floats(0.1, 1.9))
def test_theta_shift_law(amp, r_max, r):
    base = make_dataset(DataFamily("schwarzschild_isotropic", mass=1.0))

    def phi(x):
        return amp * np.clip(1 - np.asarray(x, float) / r_max, 0, None) ** 2

    mod = apply_interior_modification(base, phi, support=(0.0, r_max))
    assert float(theta_plus(mod, r)) == pytest.approx(float(theta_plus(base, r) - phi(r)), abs=1e-12)
