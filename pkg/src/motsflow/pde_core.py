"""Discrete radial operators and their exact Jacobians.

For a radial function ``w(r)`` the proper gradient is ``p = w' / phi^2`` and
the divergence of a radial vector field with proper component ``f`` is
``(A f)' / (phi^2 A)`` where ``A = phi^(2n) r^n`` is the sphere area density.
All operators share one kernel::

    div(grad w / sqrt(p^2 + mu^2)) + k_sign * s * T(p) + coef / sqrt(p^2 + mu^2) - kappa w

with the projected trace ``T(p) = (g^ij - w^i w^j / (p^2 + mu^2)) K_ij``.
In spherical symmetry ``T(p) = a mu^2 / (p^2 + mu^2) + n b``: the full trace
``a + n b`` at zero gradient and the tangential trace ``n b`` as p grows.

The flux ``f = p / sqrt(p^2 + mu^2)`` lives on cell midpoints (conservative
form); ``p`` in the zero-order terms is a centered nodal difference. Only
interior nodes carry residuals; boundary nodes are Dirichlet data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .grid import Field, RadialGrid
from .initial_data import InitialDataSet


@dataclass(frozen=True)
class OperatorParams:
    eps: float
    kappa: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {self.s}")


@dataclass
class Tridiagonal:
    """Square tridiagonal matrix stored by diagonals."""

    lower: np.ndarray  # length m-1, entry (i+1, i)
    diag: np.ndarray
    upper: np.ndarray  # length m-1, entry (i, i+1)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower * x[:-1]
        y[:-1] += self.upper * x[1:]
        return y

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        ab = np.zeros((3, self.diag.size))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return solve_banded((1, 1), ab, rhs, check_finite=False)


class Discretization:
    """Metric weights of ``data`` sampled on ``grid``."""

    def __init__(self, data: InitialDataSet, grid: RadialGrid):
        self.data, self.grid = data, grid
        n = data.n
        r, rh, h = grid.r, grid.r_half, grid.h
        self.n, self.h = n, h
        phi = np.asarray(data.phi(r), dtype=float) + np.zeros_like(r)
        phih = np.asarray(data.phi(rh), dtype=float) + np.zeros_like(rh)
        self.phi2 = phi**2
        self.phi2_half = phih**2
        self.area_half = phih ** (2 * n) * rh**n
        # 1 / (h * phi^2 A) at interior nodes
        self.inv_vol = 1.0 / (h * phi[1:-1] ** (2 * n + 2) * r[1:-1] ** n)
        self.a = np.asarray(data.a(r), dtype=float) + np.zeros_like(r)
        self.b = np.asarray(data.b(r), dtype=float) + np.zeros_like(r)

    def proper_gradient(self, w: np.ndarray) -> np.ndarray:
        """Nodal p = w'/phi^2; second-order one-sided at the ends."""
        return np.gradient(w, self.h, edge_order=2) / self.phi2

    def _pieces(self, w, mu, s, coef, k_sign):
        h = self.h
        p_half = np.diff(w) / (h * self.phi2_half)
        q_half = p_half**2 + mu**2
        flux = p_half / np.sqrt(q_half)
        div = self.inv_vol * np.diff(self.area_half * flux)
        p = (w[2:] - w[:-2]) / (2 * h * self.phi2[1:-1])
        q = p**2 + mu**2
        a, b = self.a[1:-1], self.b[1:-1]
        proj = a * mu**2 / q + self.n * b
        zero_order = k_sign * s * proj + coef / np.sqrt(q)
        return p_half, q_half, p, q, div, zero_order

    def operator(self, w, mu=1.0, s=1.0, coef=0.0, kappa=0.0, k_sign=-1.0) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        *_, div, zero_order = self._pieces(w, mu, s, coef, k_sign)
        out = np.zeros_like(w)
        out[1:-1] = div + zero_order - kappa * w[1:-1]
        return out

    def operator_jacobian(self, w, mu=1.0, s=1.0, coef=0.0, kappa=0.0, k_sign=-1.0) -> Tridiagonal:
        """Exact derivative of the interior residual w.r.t. interior values."""
        w = np.asarray(w, dtype=float)
        h = self.h
        p_half, q_half, p, q, _, _ = self._pieces(w, mu, s, coef, k_sign)
        # d flux / d w across each cell
        dflux = mu**2 / q_half**1.5 / (h * self.phi2_half)
        c_right = self.inv_vol * self.area_half[1:] * dflux[1:]
        c_left = self.inv_vol * self.area_half[:-1] * dflux[:-1]
        a = self.a[1:-1]
        dG = -2.0 * k_sign * s * a * mu**2 * p / q**2 - coef * p / q**1.5
        dG = dG / (2 * h * self.phi2[1:-1])
        diag = -(c_right + c_left) - kappa
        upper = (c_right + dG)[:-1]
        lower = (c_left - dG)[1:]
        return Tridiagonal(lower, diag, upper)

    # named operators -------------------------------------------------

    def capillarity(self, w, p: OperatorParams) -> np.ndarray:
        return self.operator(w, 1.0, p.s, p.s / p.eps, p.kappa)

    def capillarity_jacobian(self, w, p: OperatorParams) -> Tridiagonal:
        return self.operator_jacobian(w, 1.0, p.s, p.s / p.eps, p.kappa)

    def eps_operator(self, w, eps: float) -> np.ndarray:
        return self.operator(w, eps, 1.0, 1.0, 0.0)

    def jang(self, w) -> np.ndarray:
        return self.operator(w, 1.0, 1.0, 0.0, 0.0, k_sign=1.0)


def _disc(field: Field, data: InitialDataSet) -> Discretization:
    return Discretization(data, field.grid)


def residual_capillarity(w: Field, p: OperatorParams, data: InitialDataSet) -> Field:
    """Residual of the capillarity-regularized equation at interior nodes.

    ``div(grad w / v) - s T(p) + s / (eps v) - kappa w`` with
    ``v = sqrt(1 + |grad w|^2)``; boundary entries are zero.
    """
    return Field(w.grid, _disc(w, data).capillarity(w.values, p))


def residual_eps(w: Field, eps: float, data: InitialDataSet) -> Field:
    """Residual of the unrescaled epsilon-regularized level-set equation."""
    return Field(w.grid, _disc(w, data).eps_operator(w.values, eps))


def residual_jang(w: Field, data: InitialDataSet) -> Field:
    """Jang operator ``(g^ij - w^i w^j / v^2)(w_ij / v + K_ij)``.

    This equals ``div(grad w / v) + T(p)``; note the sign of the K term is
    opposite to the capillarity residual, so that
    ``residual_jang(w) == -(capillarity part of) residual(-w)``.
    """
    return Field(w.grid, _disc(w, data).jang(w.values))


def jacobian(w: Field, p: OperatorParams, data: InitialDataSet) -> Tridiagonal:
    return _disc(w, data).capillarity_jacobian(w.values, p)


def operator_M_eps(v: Field, eps: float, data: InitialDataSet, mode: str = "barrier") -> Field:
    """Barrier operator in either of its two forms.

    ``mode="barrier"``::

        (g - v v / (|dv|^2 + 1)) : D^2 v - (g - v v/(|dv|^2 + 1)) : K sqrt(|dv|^2 + 1) + 1/eps

    ``mode="boundary"``: the same with ``1`` replaced by ``eps^2`` inside the
    projector and square root, and constant ``+1`` instead of ``1/eps``.
    Both are evaluated as ``W * (flux-form residual)`` with the matching
    ``W = sqrt(|dv|^2 + mu^2)``, which is the same expression.
    """
    d = _disc(v, data)
    w = v.values
    if mode == "barrier":
        mu, res = 1.0, d.operator(w, 1.0, 1.0, 1.0 / eps, 0.0)
    elif mode == "boundary":
        mu, res = eps, d.eps_operator(w, eps)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    pg = np.zeros_like(w)
    pg[1:-1] = (w[2:] - w[:-2]) / (2 * d.h * d.phi2[1:-1])
    out = np.sqrt(pg**2 + mu**2) * res
    out[0] = out[-1] = 0.0
    return Field(v.grid, out)
