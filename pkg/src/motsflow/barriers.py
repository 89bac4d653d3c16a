"""Explicit barrier profiles and numerical checks of their inequalities.

Two barriers are built by bending a smooth foliation coordinate ``u``
through a one-variable profile:

* the lower barrier ``psi_lower(u_minus)``, with ``psi_lower(t) =
  zeta(2 (tau - t) / tau)``, which is large inside a trapped leaf and zero
  on the outer leaf;
* the boundary supersolution ``psi_boundary(u)`` with ``psi_boundary(t) =
  2 t + 1/(tau - t) - 1/tau``, where ``u`` is the arrival time of the flow
  started at the outer boundary.

Differential inequalities are checked on the grid with a slack
``slack_C * h**2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .geometry import mean_curvature, tangential_trace, theta_plus
from .grid import Field, RadialGrid
from .initial_data import InitialDataSet, eigen_bound
from .pde_core import operator_M_eps

SLACK_C = 10.0


@dataclass
class Piece:
    lo: float
    hi: float
    f: Callable
    f1: Callable
    f2: Callable


@dataclass
class BarrierProfile:
    kind: str
    parameters: dict
    interval: tuple[float, float]
    pieces: list = field(repr=False)
    junctions: list = field(default_factory=list)

    def _eval(self, t, which):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, np.nan)
        for k, pc in enumerate(self.pieces):
            last = k == len(self.pieces) - 1
            sel = (t >= pc.lo) & ((t <= pc.hi) if last else (t < pc.hi))
            if sel.any():
                out[sel] = getattr(pc, which)(t[sel])
        return out if out.ndim else float(out)

    def value(self, t):
        return self._eval(t, "f")

    def first_derivative(self, t):
        return self._eval(t, "f1")

    def second_derivative(self, t):
        return self._eval(t, "f2")

    def junction_residuals(self) -> list[tuple[float, float, float, float]]:
        """``(t, |jump f|, |jump f'|, |jump f''|)`` at every internal junction."""
        out = []
        for t in self.junctions:
            left = next(p for p in self.pieces if p.hi == t)
            right = next(p for p in self.pieces if p.lo == t)
            x = np.array([t])
            out.append((t,) + tuple(
                float(abs(getattr(left, w)(x)[0] - getattr(right, w)(x)[0])) for w in ("f", "f1", "f2")
            ))
        return out


def _check_delta(delta):
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")


def zeta_constants(delta: float) -> tuple[float, float]:
    """``(c0, c1) = (1/(1+delta), log(1/delta + 1))``."""
    return 1.0 / (1.0 + delta), math.log1p(1.0 / delta)


def make_zeta(delta: float) -> BarrierProfile:
    """``log(t/delta + 1)`` on [0, 1] continued by a quartic to [1, 2].

    The quartic matches value, slope and curvature at t = 1 and has zero
    slope and curvature at t = 2.
    """
    _check_delta(delta)
    c0, c1 = zeta_constants(delta)
    a3 = (2 * c0**2 - 3 * c0) / 3
    a4 = (-(c0**2) + 2 * c0) / 4
    log_piece = Piece(
        0.0, 1.0,
        lambda t: np.log1p(t / delta),
        lambda t: 1.0 / (t + delta),
        lambda t: -1.0 / (t + delta) ** 2,
    )
    quartic = Piece(
        1.0, 2.0,
        lambda t: c1 + c0 * (t - 1) - c0**2 / 2 * (t - 1) ** 2 + a3 * (t - 1) ** 3 + a4 * (t - 1) ** 4,
        lambda t: c0 - c0**2 * (t - 1) + 3 * a3 * (t - 1) ** 2 + 4 * a4 * (t - 1) ** 3,
        lambda t: -(c0**2) + 6 * a3 * (t - 1) + 12 * a4 * (t - 1) ** 2,
    )
    return BarrierProfile("zeta", {"delta": delta, "c0": c0, "c1": c1}, (0.0, 2.0),
                          [log_piece, quartic], [1.0])


def zeta_at_two(delta: float) -> float:
    c0, c1 = zeta_constants(delta)
    return c1 + c0 / 2 - c0**2 / 12


def delta_for_floor(level: float) -> float:
    """The delta whose ``log(1/delta + 1)`` equals ``level``, i.e.
    ``(e^level - 1)^-1``, written to avoid overflow."""
    if level <= 0:
        raise ValueError("floor level must be positive")
    return math.exp(-level) / -math.expm1(-level)


def make_psi_lower(delta: float, tau: float) -> BarrierProfile:
    """``psi(t) = zeta(2 (tau - t) / tau)`` on [0, tau], constant for t < 0.

    The constant piece stands for the region inside the trapped leaf,
    where the foliation coordinate is extended by zero.
    """
    _check_delta(delta)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = make_zeta(delta)
    zlog, zquart = z.pieces
    s = 2.0 / tau
    top = zeta_at_two(delta)

    def compose(pc, lo, hi):
        return Piece(
            lo, hi,
            lambda t: pc.f(s * (tau - t)),
            lambda t: -s * pc.f1(s * (tau - t)),
            lambda t: s**2 * pc.f2(s * (tau - t)),
        )

    flat = Piece(-math.inf, 0.0, lambda t: np.full_like(t, top), np.zeros_like, np.zeros_like)
    pieces = [flat, compose(zquart, 0.0, tau / 2), compose(zlog, tau / 2, tau)]
    return BarrierProfile("psi_lower", {"delta": delta, "tau": tau}, (0.0, tau), pieces, [0.0, tau / 2])


def make_psi_boundary(tau: float) -> BarrierProfile:
    """``psi(t) = 2 t + 1/(tau - t) - 1/tau`` on [0, tau)."""
    if not 0 < tau < 0.5:
        raise ValueError(f"tau must lie in (0, 1/2), got {tau}")
    with np.errstate(divide="ignore"):
        pc = Piece(
            0.0, tau,
            lambda t: 2 * t + 1.0 / (tau - t) - 1.0 / tau,
            lambda t: 2 + 1.0 / (tau - t) ** 2,
            lambda t: 2.0 / (tau - t) ** 3,
        )
    return BarrierProfile("psi_boundary", {"tau": tau}, (0.0, tau), [pc])


# sampled inequalities -------------------------------------------------------


@dataclass
class Check:
    ok: bool
    margin: float
    worst_node: int | None = None
    worst_radius: float | None = None
    details: dict = field(default_factory=dict)


@dataclass
class BarrierReport:
    kind: str
    parameters: dict
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters, "passed": self.passed,
                "checks": {k: asdict(v) for k, v in self.checks.items()}}


def _check_ge(values, bound, where=None, r=None) -> Check:
    """Check ``values >= bound`` and report the worst entry."""
    gap = np.asarray(values - bound, dtype=float)
    i = int(np.argmin(gap))
    idx = int(where[i]) if where is not None else i
    return Check(bool(gap[i] >= 0), float(gap[i]), idx, None if r is None else float(r[i]))


def zeta_slope_bounds(delta: float, samples: int = 10_000) -> dict[str, Check]:
    """``zeta' - |zeta''|/zeta'^2 >= -1`` on (0, 1] and ``zeta' - |zeta''| >= -20 c0`` on [1, 2]."""
    z = make_zeta(delta)
    c0 = z.parameters["c0"]
    t1 = np.linspace(0, 1, samples + 1)[1:]
    t2 = np.linspace(1, 2, samples)
    d1, dd1 = z.first_derivative(t1), z.second_derivative(t1)
    d2, dd2 = z.first_derivative(t2), z.second_derivative(t2)
    return {
        "log_piece": _check_ge(d1 - np.abs(dd1) / d1**2, -1.0),
        "quartic_piece": _check_ge(d2 - np.abs(dd2), -20 * c0),
    }


def psi_lower_slope_bound(profile: BarrierProfile, C0: float, samples: int = 10_000) -> Check:
    """``-psi' - min(C0^2 |psi''|, |psi''|/psi'^2) >= -80 C0^2 / tau^2`` on [0, tau)."""
    tau = profile.parameters["tau"]
    t = np.linspace(0, tau, samples, endpoint=False)
    d1, d2 = profile.first_derivative(t), profile.second_derivative(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d1 != 0, np.abs(d2) / d1**2, np.inf)
    lhs = -d1 - np.minimum(C0**2 * np.abs(d2), ratio)
    return _check_ge(lhs, -80 * C0**2 / tau**2)


def psi_boundary_bounds(profile: BarrierProfile, samples: int = 10_000) -> dict[str, Check]:
    """``psi''/psi'^2 <= 2 (tau - t)`` and ``1/psi' <= (tau - t)^2`` on [0, tau)."""
    tau = profile.parameters["tau"]
    t = np.linspace(0, tau, samples, endpoint=False)
    d1, d2 = profile.first_derivative(t), profile.second_derivative(t)
    return {
        "curvature_ratio": _check_ge(2 * (tau - t) * (1 + 1e-12), d2 / d1**2),
        "inverse_slope": _check_ge((tau - t) ** 2 * (1 + 1e-12), 1.0 / d1),
    }


# foliation coordinates ------------------------------------------------------


def _leaf_times(data, pts, speed, tau):
    """``int phi^2 / speed`` from pts[0] to each later point, cell by cell.

    Integration stops once the time reaches tau or the speed is no longer
    positive; later points get ``tau``.
    """
    out = np.full(pts.size, float(tau))
    out[0] = 0.0
    for i in range(1, pts.size):
        if out[i - 1] >= tau or float(speed(pts[i])) <= 0:
            break
        lo, hi = sorted((pts[i - 1], pts[i]))
        val, _ = quad(lambda x: float(data.phi(x)) ** 2 / float(speed(x)), lo, hi,
                      epsabs=1e-14, epsrel=1e-12)
        out[i] = out[i - 1] + val
    return np.minimum(out, tau)


def flow_coordinate(data: InitialDataSet, grid: RadialGrid, tau: float):
    """Arrival time of the flow started at the outer boundary, capped at ``tau``.

    Returns ``(u, mask)`` with mask marking the nodes where ``u < tau``.
    """
    vals = _leaf_times(data, grid.r[::-1], lambda x: theta_plus(data, x), tau)[::-1]
    return Field(grid, vals), vals < tau


def lower_barrier_coordinate(data: InitialDataSet, grid: RadialGrid, r_minus: float, tau: float):
    """Foliation coordinate ``u_minus`` of the leaves emanating from ``r_minus``.

    When the sphere at ``r_minus`` is outer trapped the leaves move outward
    with speed ``-(H + P)``; otherwise they move inward with speed
    ``H - P``. ``u_minus`` is 0 on the far side of ``r_minus`` and is capped
    at ``tau`` beyond the last leaf, where the barrier vanishes. Returns
    ``(u_minus, inside)`` with ``inside`` marking ``u_minus < tau``.
    """
    r = grid.r
    if not r[0] < r_minus < r[-1]:
        raise ValueError("r_minus must lie inside the grid")
    outward = float(theta_plus(data, r_minus)) < 0

    def speed(x):
        H, P = mean_curvature(data, x), tangential_trace(data, x)
        return -(H + P) if outward else H - P

    order = np.nonzero(r > r_minus if outward else r < r_minus)[0]
    if not outward:
        order = order[::-1]
    times = _leaf_times(data, np.concatenate([[r_minus], r[order]]), speed, tau)
    vals = np.zeros(r.size)
    vals[order] = times[1:]
    return Field(grid, vals), vals < tau


def measure_C0(u: Field, data: InitialDataSet, mask: np.ndarray) -> float:
    """``max(|grad u|, 1/|grad u|, |Hess u|)`` over the masked nodes.

    The Hessian of a radial function has eigenvalue ``u_rr`` (proper second
    derivative) in the normal direction and ``H/n * u_r`` on the sphere.
    """
    h = u.grid.h
    phi2 = data.phi(u.r) ** 2
    du = np.gradient(u.values, h, edge_order=2) / phi2
    d2u = np.gradient(du, h, edge_order=2) / phi2
    tang = mean_curvature(data, u.r) / data.n * du
    # nested differences reach two nodes out
    mask = _stencil_inside(_stencil_inside(mask))
    if not mask.any():
        raise ValueError("no node has a full stencil inside the mask")
    grad = np.abs(du[mask])
    hess = np.maximum(np.abs(d2u[mask]), np.abs(tang[mask]))
    return float(max(grad.max(), (1.0 / grad).max(), hess.max()))


def _stencil_inside(mask: np.ndarray) -> np.ndarray:
    ok = np.zeros_like(mask)
    ok[1:-1] = mask[:-2] & mask[1:-1] & mask[2:]
    return ok


def verify_lower_barrier(
    profile: BarrierProfile,
    u_minus: Field,
    data: InitialDataSet,
    eps: float,
    region: np.ndarray | None = None,
    slack_C: float = SLACK_C,
) -> BarrierReport:
    """Check ``M_eps(psi(u_minus)) >= -slack_C h^2`` (barrier form, data as given).

    ``region`` marks the nodes where the coordinate is valid (default:
    ``u_minus < tau``). Also reports the sampled slope bound of the profile
    with C0 measured from ``u_minus`` on the foliated part.
    """
    tau = profile.parameters["tau"]
    vals = u_minus.values
    region = vals < tau if region is None else region
    foliated = region & (vals > 0)
    C0 = measure_C0(u_minus, data, _stencil_inside(foliated)) if foliated.any() else 1.0
    C0 = max(C0, 1.0)
    v = Field(u_minus.grid, np.where(region, profile.value(np.clip(vals, None, tau)), 0.0))
    M = operator_M_eps(v, eps, data, mode="barrier").values
    nodes = np.nonzero(_stencil_inside(region))[0]
    h = u_minus.grid.h
    sign = _check_ge(M[nodes], -slack_C * h**2, nodes, u_minus.r[nodes])
    sign.details = {"min_M": float(M[nodes].min()), "inv_eps": 1.0 / eps, "C0": C0}
    slope = psi_lower_slope_bound(profile, C0)
    slope.details = {"C0": C0, "bound": -80 * C0**2 / tau**2}
    eps1 = 1.0 / (C0 + 80 * C0**2 / tau**2)
    return BarrierReport(
        "psi_lower",
        dict(profile.parameters, eps=eps, C0=C0, eps1=eps1, slack_C=slack_C),
        {"M_eps_nonnegative": sign, "slope_bound": slope},
    )


def verify_supersolution(
    tau: float,
    data: InitialDataSet,
    grid: RadialGrid,
    eps: float,
    u_eps: Field | None = None,
    slack_C: float = SLACK_C,
    resolution: float = 0.2,
    comparison_tol: float = 1e-8,
) -> BarrierReport:
    """Check that ``psi_boundary(u)`` is a supersolution near the outer boundary.

    ``u`` is the arrival time from the outer boundary, restricted to
    ``u < tau``. ``M_eps(v) <= -1/(tau - u)^2 + slack_C h^2`` is checked at
    nodes where the grid resolves the pole of psi, i.e. where the change of
    u across the stencil is at most ``resolution * (tau - u)^2``. If
    ``u_eps`` (a solution of the eps-regularized problem) is given, or can
    be computed, ``u_eps <= v`` is checked on the foliated nodes and its
    outer-boundary gradient against ``(2 + 1/tau^2) C0``.
    """
    profile = make_psi_boundary(tau)
    u, mask = flow_coordinate(data, grid, tau)
    stencil = _stencil_inside(mask)
    try:
        C0 = max(measure_C0(u, data, stencil), 1.0)
    except ValueError:
        # layer too thin for the grid; no eps can be certified
        C0 = math.inf
    lam = eigen_bound(data)
    n = data.n
    eps0 = min(1.0 / (4 * (n + 1) * lam) if lam > 0 else math.inf, C0**-2)
    vals = u.values
    v = Field(grid, np.where(mask, profile.value(np.minimum(vals, tau * (1 - 1e-15))), 0.0))
    M = operator_M_eps(v, eps, data, mode="boundary").values
    du = np.zeros_like(vals)
    du[1:-1] = np.abs(vals[2:] - vals[:-2])
    resolved = stencil & (du <= resolution * (tau - vals) ** 2)
    nodes = np.nonzero(resolved)[0]
    h = grid.h
    if nodes.size:
        bound = -1.0 / (tau - vals[nodes]) ** 2 + slack_C * h**2
        sup = _check_ge(bound, M[nodes], nodes, grid.r[nodes])
        excess = float(np.max(M[nodes] + 1.0 / (tau - vals[nodes]) ** 2))
    else:
        # the grid resolves no node of the layer: nothing is certified
        sup, excess = Check(False, -math.inf), math.inf
    sup.details = {"max_excess": excess, "checked_nodes": int(nodes.size), "foliated_nodes": int(mask.sum())}
    checks = {
        "precondition": Check(bool(eps <= eps0 * (1 + 1e-12)), float(eps0 - eps),
                              details={"eps0": eps0, "C0": C0, "k_term_bound": 2 * eps * (n + 1) * lam}),
        "supersolution": sup,
    }
    if u_eps is None:
        u_eps = _solve_u_eps(data, grid, eps)
    if u_eps is not None:
        idx = np.nonzero(mask)[0]
        cmp = _check_ge(v.values[idx] + comparison_tol, u_eps.values[idx], idx, grid.r[idx])
        checks["comparison"] = cmp
        g = np.abs(np.gradient(u_eps.values, h, edge_order=2) / data.phi(grid.r) ** 2)
        limit = (2 + tau**-2) * C0
        checks["boundary_gradient"] = Check(bool(g[-1] <= limit), float(limit - g[-1]), grid.N - 1,
                                            float(grid.r[-1]), {"gradient": float(g[-1]), "limit": limit})
    return BarrierReport("psi_boundary",
                         dict(profile.parameters, eps=eps, C0=C0, eps0=eps0, slack_C=slack_C), checks)


def _solve_u_eps(data, grid, eps):
    from .solver import Schedules, kappa_continuation

    bundles, _ = kappa_continuation(data, grid, eps, Schedules().kappa_sequence())
    return Field(grid, eps * bundles[-1].u_hat.values)
