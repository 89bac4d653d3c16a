"""Closed-form geometry of coordinate spheres and the brute-force MOTS oracle.

Sign convention: the unit normal of a coordinate sphere points towards
increasing r, so round spheres in flat space have ``H = n / r > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field
from .initial_data import InitialDataSet


@dataclass(frozen=True)
class SphereGeometry:
    r: float
    area_radius: float
    H: float
    P: float
    theta_plus: float


@dataclass(frozen=True)
class MotsEstimate:
    """Outcome of the brute-force scan.

    ``method`` is ``"bisection"`` when a root was found and ``"no_mots"`` when
    theta_plus stays positive on the bracket (``oracle_radius`` is then None).
    """

    oracle_radius: float | None
    bracket: tuple[float, float]
    method: str

    @property
    def found(self) -> bool:
        return self.oracle_radius is not None


class NoSignChange(ValueError):
    """theta_plus is not positive at the outer end of the bracket."""


def mean_curvature(data: InitialDataSet, r):
    """H of coordinate spheres, ``n/(phi^2 r) (1 + 2 r phi'/phi)``."""
    r = np.asarray(r, dtype=float)
    phi = data.phi(r)
    return data.n / (phi**2 * r) * (1.0 + 2.0 * r * data.dphi(r) / phi)


def tangential_trace(data: InitialDataSet, r):
    """P = tr_Sigma K = n b(r)."""
    return data.n * np.asarray(data.b(r), dtype=float)


def theta_plus(data: InitialDataSet, r):
    return mean_curvature(data, r) + tangential_trace(data, r)


def sphere_geometry(data: InitialDataSet, r: float) -> SphereGeometry:
    lo, hi = data.r_domain
    if not lo <= r <= hi:
        raise ValueError(f"radius {r} outside domain {data.r_domain}")
    H = float(mean_curvature(data, r))
    P = float(tangential_trace(data, r))
    area_radius = float(data.phi(r)) ** 2 * r
    return SphereGeometry(float(r), area_radius, H, P, H + P)


def find_mots_radius_bruteforce(
    data: InitialDataSet,
    bracket: tuple[float, float] | None = None,
    samples: int = 10_001,
    xtol: float = 1e-10,
) -> MotsEstimate:
    """Locate the outermost zero of theta_plus by dense scan plus bisection.

    The scan walks inward from the outer end and stops at the first sign
    change; a profile that never changes sign gives ``method="no_mots"``.
    """
    lo, hi = bracket if bracket is not None else data.r_domain
    r = np.linspace(lo, hi, samples)
    th = theta_plus(data, r)
    if not np.all(np.isfinite(th)):
        raise FloatingPointError("theta_plus not finite on bracket")
    if th[-1] <= 0:
        raise NoSignChange(f"theta_plus({hi}) = {th[-1]:.3g} <= 0: bracket end is trapped")
    nonpos = np.nonzero(th <= 0)[0]
    if nonpos.size == 0:
        return MotsEstimate(None, (lo, hi), "no_mots")
    k = nonpos[-1]
    a, b = r[k], r[k + 1]
    fa = th[k]
    if fa == 0:
        return MotsEstimate(float(a), (lo, hi), "bisection")
    while b - a > xtol:
        m = 0.5 * (a + b)
        fm = float(theta_plus(data, m))
        if fm <= 0:
            a = m
        else:
            b = m
    return MotsEstimate(0.5 * (a + b), (lo, hi), "bisection")


def gradient_function(data: InitialDataSet, u: Field) -> Field:
    """``v = sqrt(1 + |grad u|^2)`` with ``|grad u| = |u'| / phi^2``.

    Centered differences inside, second-order one-sided at the ends.
    """
    r = u.r
    du = np.gradient(u.values, u.grid.h, edge_order=2)
    return Field(u.grid, np.sqrt(1.0 + (du / data.phi(r) ** 2) ** 2))
