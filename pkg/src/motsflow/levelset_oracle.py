"""Reference solutions in spherical symmetry.

Coordinate spheres move inward with normal speed ``theta_plus``; in the
coordinate r this is ``dr/dt = -theta_plus(r) / phi(r)^2``. The arrival time
at r of the sphere that starts at R is therefore

    u*(r) = int_r^R phi^2 / theta_plus d rho.

Two independent evaluations are provided: adaptive quadrature of this
integral and RK4 integration of the sphere ODE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .geometry import mean_curvature, theta_plus
from .grid import Field
from .initial_data import InitialDataSet

GUARD = 1e-6
BELOW_RANGE = "below range"
ABOVE_RANGE = "above range"


class QueryInsideHorizon(ValueError):
    """theta_plus <= 0 somewhere between the query radius and the start."""


class GuardBand(ValueError):
    """The query is so close to a MOTS that the arrival time is unresolvable."""


class NonMonotone(ValueError):
    def __init__(self, interval):
        super().__init__(f"field increases with r on {interval}")
        self.interval = interval


def _speed_profile(data: InitialDataSet, r0: float, r1: float, samples: int = 4001):
    rr = np.linspace(r0, r1, samples)
    return rr, theta_plus(data, rr)


def arrival_oracle(
    data: InitialDataSet,
    R: float,
    r: float,
    tol: float = 1e-10,
    guard: float = GUARD,
    full_output: bool = False,
):
    """Arrival time u*(r) of the flow started at the sphere of radius R.

    With ``full_output`` the quadrature error estimate is returned as well.
    """
    if r > R:
        raise ValueError(f"query radius {r} lies outside the start radius {R}")
    if r == R:
        return (0.0, 0.0) if full_output else 0.0
    _, th = _speed_profile(data, r, R)
    th_min = float(min(th.min(), theta_plus(data, r)))
    if th_min <= 0:
        raise QueryInsideHorizon(f"theta_plus <= 0 on [{r}, {R}]")
    if th_min < guard:
        raise GuardBand(f"theta_plus = {th_min:.3g} < {guard:g} on [{r}, {R}]")

    def integrand(rho):
        return float(data.phi(rho)) ** 2 / float(theta_plus(data, rho))

    val, err = quad(integrand, r, R, epsabs=tol * 1e-2, epsrel=tol, limit=500)
    return (val, err) if full_output else val


@dataclass
class FlowTrajectory:
    times: np.ndarray
    radii: np.ndarray
    areas: np.ndarray
    bulk_energies: np.ndarray
    dissipation: np.ndarray
    stop_reason: str
    dt: float
    n: int = 2
    speeds: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return self.times.size

    def time_at_radius(self, r: float) -> float:
        """Time at which the flow reaches radius r (cubic Hermite inversion).

        Uses ``dt/dr = 1/speed`` at the samples, so the interpolant carries
        the ODE's own derivative information.
        """
        radii, times = self.radii[::-1], self.times[::-1]
        if not radii[0] <= r <= radii[-1]:
            raise ValueError(f"radius {r} not reached by the trajectory")
        spline = CubicHermiteSpline(radii, times, 1.0 / self.speeds[::-1])
        return float(spline(r))

    def radius_at_time(self, t: float) -> float:
        if not self.times[0] <= t <= self.times[-1]:
            raise ValueError(f"time {t} outside the trajectory")
        return float(CubicHermiteSpline(self.times, self.radii, self.speeds)(t))


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def flow_spheres(
    data: InitialDataSet,
    r0: float,
    dt: float | None = None,
    t_max: float = math.inf,
    guard: float = GUARD,
    stop_radius: float | None = None,
    max_steps: int = 2_000_000,
) -> FlowTrajectory:
    """Integrate ``dr/dt = -theta_plus/phi^2`` from r0 with fixed-step RK4.

    The bulk energy ``int_{r(t)}^{r0} -n b dV`` is integrated alongside the
    radius, so that ``area + bulk`` decreases at the rate ``dissipation =
    theta_plus^2 * area``. The run ends at ``t_max`` or at the first of the
    events: theta_plus drops to ``guard`` ("guard_band"), the radius reaches
    the inner domain end ("extinction") or ``stop_radius``
    ("reached_radius"). Events are located by bisecting a partial RK4 step.
    """
    th0 = float(theta_plus(data, r0))
    if th0 <= 0:
        raise QueryInsideHorizon(f"theta_plus({r0}) = {th0:.3g} <= 0")
    dt = 1e-4 * r0 if dt is None else dt
    n, omega = data.n, data.sphere_area_constant
    r_floor = data.r_in if stop_radius is None else max(stop_radius, data.r_in)

    def rhs(y):
        r = y[0]
        drdt = -float(theta_plus(data, r)) / float(data.phi(r)) ** 2
        dBdt = n * float(data.b(r)) * omega * float(data.phi(r)) ** (2 * n + 2) * r**n * drdt
        return np.array([drdt, dBdt])

    def event(y):
        r = y[0]
        if not math.isfinite(r) or r <= r_floor:
            return -1.0
        return min(r - r_floor, float(theta_plus(data, r)) - guard)

    def label(y):
        r = y[0]
        if math.isfinite(r) and r > r_floor:
            return "guard_band"
        if stop_radius is not None and r_floor == stop_radius:
            return "reached_radius"
        return "extinction"

    times, states = [0.0], [np.array([r0, 0.0])]
    reason = "t_max"
    y, t = states[0], 0.0
    for k in range(1, max_steps + 1):
        # times from the step count, so no rounding drift piles up near t_max
        t_next = k * dt
        if t_next >= t_max - 1e-9 * dt:
            t_next = t_max
        h = t_next - t
        if h <= 0:
            break
        with np.errstate(all="ignore"):
            y_new = _rk4(rhs, y, h)
        if event(y_new) > 0:
            y, t = y_new, t_next
            times.append(t)
            states.append(y)
            continue
        reason = label(y_new)
        lo, hi = 0.0, h
        target = r_floor if reason != "guard_band" else None
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            with np.errstate(all="ignore"):
                ym = _rk4(rhs, y, mid)
            if event(ym) > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * max(1.0, t):
                break
        y_end = _rk4(rhs, y, lo)
        if target is not None:
            y_end = np.array([target, y_end[1]])
        t = t + lo
        times.append(t)
        states.append(y_end)
        break
    else:
        if t < t_max:
            reason = "max_steps"

    radii = np.array([s[0] for s in states])
    bulk = np.array([s[1] for s in states])
    areas = data.area(radii)
    th = theta_plus(data, radii)
    return FlowTrajectory(
        times=np.array(times),
        radii=radii,
        areas=np.asarray(areas, dtype=float),
        bulk_energies=bulk,
        dissipation=np.asarray(th**2 * areas, dtype=float),
        stop_reason=reason,
        dt=dt,
        n=n,
        speeds=-np.asarray(th / data.phi(radii) ** 2, dtype=float),
    )


def flow_arrival_time(data: InitialDataSet, R: float, r: float, dt: float | None = None) -> float:
    """Arrival time at r from the ODE flow, event-located at r itself."""
    if r == R:
        return 0.0
    traj = flow_spheres(data, R, dt=dt, stop_radius=r)
    if traj.stop_reason != "reached_radius":
        raise GuardBand(f"flow stopped ({traj.stop_reason}) before reaching r = {r}")
    return float(traj.times[-1])


def energy_monotonicity_check(traj: FlowTrajectory, skip_tail: int = 2) -> float:
    """Max relative deviation of ``d/dt (area + bulk) = -dissipation``.

    Central differences on the uniformly spaced samples; the last
    ``skip_tail`` samples (partial event step, steep end) are left out.
    """
    if len(traj) < 10:
        raise ValueError("energy check needs at least 10 samples")
    E = traj.areas + traj.bulk_energies
    t = traj.times
    m = len(t) - skip_tail
    dEdt = (E[2:m] - E[: m - 2]) / (t[2:m] - t[: m - 2])
    D = traj.dissipation[1 : m - 1]
    return float(np.max(np.abs(dEdt + D) / D))


def extract_level_set(u: Field, t: float, exterior: np.ndarray | None = None, rtol: float = 1e-12):
    """Radius of the level set ``{u = t}`` on the exterior region.

    Returns BELOW_RANGE / ABOVE_RANGE when t lies outside the range of u
    there. Raises NonMonotone if u increases with r anywhere on the region.
    """
    r, vals = u.r, u.values
    if exterior is not None:
        r, vals = r[exterior], vals[exterior]
    scale = max(1.0, float(np.max(np.abs(vals))))
    d = np.diff(vals)
    bad = np.nonzero(d > rtol * scale)[0]
    if bad.size:
        i = bad[0]
        raise NonMonotone((float(r[i]), float(r[i + 1])))
    if t < vals[-1]:
        return BELOW_RANGE
    if t > vals[0]:
        return ABOVE_RANGE
    if t == vals[-1]:
        return float(r[-1])
    # vals is nonincreasing; first index where vals <= t
    j = int(np.argmax(vals <= t))
    if vals[j] == t or j == 0:
        return float(r[j])
    return float(r[j - 1] + (t - vals[j - 1]) * (r[j] - r[j - 1]) / (vals[j] - vals[j - 1]))


def oracle_table(data: InitialDataSet, R: float | None = None, samples: int = 201, guard: float = GUARD):
    """Rows ``(r, H, P, theta_plus, u*)`` over the domain; u* is NaN where refused."""
    R = data.r_out if R is None else R
    rows = []
    for r in np.linspace(data.r_in, R, samples):
        H = float(mean_curvature(data, r))
        P = data.n * float(data.b(r))
        try:
            u = arrival_oracle(data, R, float(r), guard=guard)
        except (QueryInsideHorizon, GuardBand):
            u = math.nan
        rows.append((float(r), H, P, H + P, u))
    return rows
