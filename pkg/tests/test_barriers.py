import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motsflow.barriers import (
    delta_for_floor,
    lower_barrier_coordinate,
    make_psi_boundary,
    make_psi_lower,
    make_zeta,
    measure_C0,
    psi_boundary_bounds,
    psi_lower_slope_bound,
    verify_lower_barrier,
    verify_supersolution,
    zeta_at_two,
    zeta_constants,
    zeta_slope_bounds,
)
from motsflow.grid import Field, RadialGrid
from motsflow.pde_core import operator_M_eps

ZETA2_DELTA1 = 0.922313847226611976  # log 2 + 1/4 - 1/48


def test_zeta_at_junction_delta_one():
    z = make_zeta(1.0)
    c0, c1 = zeta_constants(1.0)
    assert c0 == 0.5 and c1 == pytest.approx(math.log(2), rel=1e-15)
    assert z.value(1.0) == pytest.approx(math.log(2), rel=1e-15)
    assert z.first_derivative(1.0) == pytest.approx(0.5, rel=1e-15)
    assert z.second_derivative(1.0) == pytest.approx(-0.25, rel=1e-15)
    left = z.pieces[0]
    x = np.array([1.0])
    assert left.f(x)[0] == pytest.approx(math.log(2), rel=1e-15)
    assert left.f1(x)[0] == 0.5 and left.f2(x)[0] == -0.25


def test_zeta_at_two():
    z = make_zeta(1.0)
    assert z.value(2.0) == pytest.approx(ZETA2_DELTA1, rel=1e-15)
    assert zeta_at_two(1.0) == pytest.approx(ZETA2_DELTA1, rel=1e-15)
    assert abs(z.first_derivative(2.0)) < 1e-14
    assert abs(z.second_derivative(2.0)) < 1e-14


@pytest.mark.parametrize("delta", [1.0, 0.5, 0.1, 0.01, 1e-4])
def test_zeta_structure(delta):
    z = make_zeta(delta)
    assert z.value(0.0) == 0.0
    c0, c1 = zeta_constants(delta)
    assert z.value(2.0) == pytest.approx(zeta_at_two(delta), rel=1e-13)
    assert zeta_at_two(delta) >= c1
    for _, *jumps in z.junction_residuals():
        assert max(jumps) <= 1e-10
    t = np.linspace(0, 2, 2001)
    assert np.all(np.diff(z.value(t)) >= 0)


def test_zeta2_decreasing_in_delta():
    vals = [zeta_at_two(d) for d in (1.0, 0.5, 0.1, 0.01)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("bad", [0.0, -0.5, 1.5])
def test_zeta_rejects_delta(bad):
    with pytest.raises(ValueError):
        make_zeta(bad)
    with pytest.raises(ValueError):
        make_psi_lower(bad, 0.1)


@pytest.mark.parametrize("delta", [1.0, 0.3, 0.01])
def test_zeta_slope_bounds(delta):
    checks = zeta_slope_bounds(delta)
    assert checks["log_piece"].ok and checks["quartic_piece"].ok


@pytest.mark.parametrize("delta,tau", [(1.0, 0.1), (0.05, 0.3), (0.5, 2.0)])
def test_psi_lower_profile(delta, tau):
    psi = make_psi_lower(delta, tau)
    assert psi.value(tau) == 0.0
    assert psi.value(0.0) >= zeta_constants(delta)[1]
    assert psi.value(0.0) == pytest.approx(zeta_at_two(delta), rel=1e-14)
    assert abs(psi.first_derivative(0.0)) < 1e-12 / tau
    assert abs(psi.second_derivative(0.0)) < 1e-12 / tau**2
    for _, *jumps in psi.junction_residuals():
        assert max(jumps) <= 1e-10 * max(1.0, tau**-2)
    # constant inside the trapped leaf
    assert psi.value(-1.0) == pytest.approx(psi.value(0.0), rel=1e-14)


def test_delta_replacement_rule():
    for level in (0.5, 1.0, 5.0, 40.0):
        d = delta_for_floor(level)
        assert zeta_constants(d)[1] == pytest.approx(level, rel=1e-13)
    assert delta_for_floor(1.0) == pytest.approx(1 / (math.e - 1), rel=1e-15)
    with pytest.raises(ValueError):
        delta_for_floor(0.0)


def test_psi_boundary_examples():
    psi = make_psi_boundary(0.4)
    assert psi.value(0.2) == pytest.approx(2.9, rel=1e-14)
    assert psi.value(0.0) == 0.0
    for tau in (0.05, 0.25, 0.49):
        assert make_psi_boundary(tau).first_derivative(0.0) == pytest.approx(2 + tau**-2, rel=1e-14)
    assert psi.value(0.4 - 1e-9) > 1e8


@pytest.mark.parametrize("bad", [0.0, 0.5, 0.7, -0.1])
def test_psi_boundary_rejects_tau(bad):
    with pytest.raises(ValueError):
        make_psi_boundary(bad)


@pytest.mark.parametrize("tau", [0.01, 0.1, 0.3, 0.49])
def test_psi_boundary_inequalities(tau):
    checks = psi_boundary_bounds(make_psi_boundary(tau), samples=10_000)
    assert checks["curvature_ratio"].ok and checks["inverse_slope"].ok


@pytest.mark.parametrize("make,t_range", [
    (lambda: make_zeta(0.2), (0.05, 1.95)),
    (lambda: make_psi_lower(0.2, 0.3), (0.01, 0.29)),
    (lambda: make_psi_boundary(0.3), (0.01, 0.25)),
])
def test_derivatives_match_finite_differences(make, t_range):
    prof = make()
    t = np.linspace(*t_range, 37)
    # keep the stencil off the junctions, where the profiles are only C2
    t = t[np.min(np.abs(t[:, None] - np.array(prof.junctions or [np.inf])[None, :]), axis=1) > 1e-2]
    errs = []
    for h in (1e-3, 5e-4):
        d1 = (prof.value(t + h) - prof.value(t - h)) / (2 * h)
        d2 = (prof.value(t + h) - 2 * prof.value(t) + prof.value(t - h)) / h**2
        errs.append((np.max(np.abs(d1 - prof.first_derivative(t))), np.max(np.abs(d2 - prof.second_derivative(t)))))
    for k in range(2):
        assert errs[0][k] / errs[1][k] == pytest.approx(4.0, rel=0.15)


@settings(max_examples=40, deadline=None)
@given(delta=st.floats(1e-3, 1.0), tau=st.floats(0.01, 1.0), C0=st.floats(1.0, 10.0))
def test_psi_lower_slope_property(delta, tau, C0):
    assert psi_lower_slope_bound(make_psi_lower(delta, tau), C0, samples=2000).ok


def test_measure_C0_on_linear_field(flat):
    grid = RadialGrid(0.2, 1.0, 201)
    u = Field.from_function(grid, lambda r: 3 * (1 - r))
    # |grad u| = 3; tangential Hessian (2/r)/2 * 3 = 3/r peaks at 15 on the mask
    mask = np.ones(grid.N, bool)
    assert measure_C0(u, flat, mask) == pytest.approx(3 / grid.r[2], rel=1e-12)


def test_supersolution_flat(flat):
    grid = RadialGrid(flat.r_in, flat.r_out, 2001)
    report = verify_supersolution(0.1, flat, grid, 1.0 / 16)
    assert report.passed, report.to_dict()
    sup = report.checks["supersolution"]
    assert sup.details["checked_nodes"] > 0.5 * sup.details["foliated_nodes"]
    assert report.checks["precondition"].details["k_term_bound"] == 0.0
    assert report.checks["boundary_gradient"].details["gradient"] <= (2 + 0.1**-2) * report.parameters["C0"]


def test_supersolution_constant_trace_k_term_equality(const_trace):
    grid = RadialGrid(const_trace.r_in, const_trace.r_out, 2001)
    lam, n = 0.3, const_trace.n
    eps = 1.0 / (4 * (n + 1) * lam)
    report = verify_supersolution(0.1, const_trace, grid, eps, u_eps=Field.constant(grid, 0.0))
    assert report.checks["precondition"].details["k_term_bound"] == pytest.approx(0.5, rel=1e-14)


def test_supersolution_constant_trace(const_trace):
    grid = RadialGrid(const_trace.r_in, const_trace.r_out, 2001)
    report = verify_supersolution(0.1, const_trace, grid, 1.0 / 16)
    assert report.passed, report.to_dict()
    assert report.checks["comparison"].margin >= -1e-8


def test_supersolution_value_is_strictly_negative(flat):
    # M_eps(psi(u)) <= -1/(tau - u)^2 means the supersolution margin is below -1/tau^2
    tau, eps = 0.1, 1.0 / 16
    grid = RadialGrid(flat.r_in, flat.r_out, 2001)
    from motsflow.barriers import flow_coordinate

    u, mask = flow_coordinate(flat, grid, tau)
    v = Field(grid, np.where(mask, make_psi_boundary(tau).value(np.minimum(u.values, tau * (1 - 1e-15))), 0.0))
    M = operator_M_eps(v, eps, flat, mode="boundary").values
    inner = np.nonzero(mask)[0][3:-3]
    inner = inner[u.values[inner] < 0.5 * tau]
    assert np.all(M[inner] <= -1.0 / (tau - u.values[inner]) ** 2)


def test_supersolution_reports_violation(flat):
    grid = RadialGrid(flat.r_in, flat.r_out, 801)
    # a large eps breaks the precondition eps <= C0^-2
    report = verify_supersolution(0.1, flat, grid, 0.45, u_eps=Field.constant(grid, 0.0))
    assert not report.checks["precondition"].ok
    assert not report.passed


@pytest.mark.parametrize("r_minus,tau,fixture", [(0.6, 0.05, "flat"), (0.7, 0.05, "gaussian")])
def test_lower_barrier(r_minus, tau, fixture, request):
    data = request.getfixturevalue(fixture)
    grid = RadialGrid(data.r_in, data.r_out, 2001)
    u_minus, inside = lower_barrier_coordinate(data, grid, r_minus, tau)
    assert inside.sum() > 20
    report = verify_lower_barrier(make_psi_lower(1.0, tau), u_minus, data, 1e-5)
    assert report.passed, report.to_dict()
    assert report.checks["M_eps_nonnegative"].details["min_M"] > 0


def test_lower_barrier_coordinate_orientation(flat, gaussian):
    grid = RadialGrid(0.05, 1.0, 401)
    # untrapped leaf at 0.6 on flat data: leaves move inward
    u, inside = lower_barrier_coordinate(flat, grid, 0.6, 0.05)
    assert np.all(u.values[grid.r > 0.6] == 0.0)
    assert np.all(np.diff(u.values[(grid.r < 0.6) & inside]) < 0)
    # trapped leaf at 0.7 on gaussian data: leaves move outward
    g = RadialGrid(gaussian.r_in, gaussian.r_out, 401)
    u, inside = lower_barrier_coordinate(gaussian, g, 0.7, 0.05)
    assert np.all(u.values[g.r < 0.7] == 0.0)
    assert np.all(np.diff(u.values[(g.r > 0.7) & inside]) > 0)
    with pytest.raises(ValueError):
        lower_barrier_coordinate(flat, grid, 2.0, 0.05)


def test_supersolution_unresolved_grid_fails(flat):
    for N in (21, 201):
        grid = RadialGrid(flat.r_in, flat.r_out, N)
        report = verify_supersolution(0.1, flat, grid, 1.0 / 16, u_eps=Field.constant(grid, 0.0))
        sup = report.checks["supersolution"]
        assert not sup.ok and sup.details["checked_nodes"] == 0
        assert not report.passed


def test_measure_C0_needs_stencil(flat):
    grid = RadialGrid(0.2, 1.0, 21)
    mask = np.zeros(grid.N, bool)
    mask[5:8] = True
    with pytest.raises(ValueError, match="stencil"):
        measure_C0(Field.from_function(grid, lambda r: r), flat, mask)
