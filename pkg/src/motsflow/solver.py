"""Continuation pipeline for the regularized equations.

Three nested continuations, innermost first:

* ``s`` from 0 to 1 at fixed (eps, kappa), seeded by the exact solution
  ``w = 0`` of the ``s = 0`` problem;
* ``kappa`` down a geometric sequence at ``s = 1``, each solve seeded by the
  previous one, while tracking where the solutions blow up;
* ``eps`` down a geometric sequence, forming ``u = eps * u_hat`` outside the
  blow-up set.

Every nonlinear solve is a damped Newton iteration with the exact
tridiagonal Jacobian.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, RadialGrid
from .initial_data import InitialDataSet, eigen_bound, epsilon_gate
from .pde_core import Discretization, OperatorParams

log = logging.getLogger(__name__)

EPS_MACH = np.finfo(float).eps


class ContinuationFailure(RuntimeError):
    """A continuation could not be completed.

    ``last_good`` is the last parameter value (``s`` or ``kappa``) that
    converged, ``partial`` whatever results were produced before the failure
    and ``diagnostics`` a snapshot of the failing Newton run.
    """

    def __init__(self, message, last_good=None, partial=None, diagnostics=None):
        super().__init__(message)
        self.last_good = last_good
        self.partial = partial
        self.diagnostics = diagnostics


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 60
    max_backtracks: int = 30
    # multiplier on the rounding-error estimate of the residual
    roundoff_factor: float = 64.0


@dataclass(frozen=True)
class Schedules:
    s_steps: int = 10
    kappa0: float = 1.0
    kappa_ratio: float = 0.5
    kappa_count: int = 20
    eps0: float | None = None
    eps_ratio: float = 0.5
    eps_count: int = 8

    def __post_init__(self):
        if not (0 < self.kappa_ratio < 1 and 0 < self.eps_ratio < 1):
            raise ValueError("schedule ratios must lie in (0, 1)")
        if self.kappa0 <= 0 or (self.eps0 is not None and self.eps0 <= 0):
            raise ValueError("schedule start values must be positive")
        if self.s_steps < 1 or self.kappa_count < 1 or self.eps_count < 1:
            raise ValueError("schedule counts must be positive")

    def kappa_sequence(self) -> np.ndarray:
        return self.kappa0 * self.kappa_ratio ** np.arange(self.kappa_count)

    def eps_sequence(self, data: InitialDataSet) -> np.ndarray:
        eps0 = self.eps0 if self.eps0 is not None else epsilon_gate(data) / 2
        return eps0 * self.eps_ratio ** np.arange(self.eps_count)


@dataclass
class Diagnostics:
    sup_u: float
    max_gradient: float
    residual_inf_norm: float
    residual_floor: float
    newton_iters: int
    sup_bound_ok: bool
    integral_estimate: tuple[float, float] | None = None
    residual_history: list = field(default_factory=list)


@dataclass
class SolutionBundle:
    u_hat: Field
    params: OperatorParams
    diagnostics: Diagnostics
    data: InitialDataSet

    @property
    def r(self):
        return self.u_hat.r


@dataclass
class NewtonResult:
    w: np.ndarray
    converged: bool
    iters: int
    residual: np.ndarray
    floor: np.ndarray
    history: list


def residual_floor(disc: Discretization, w: np.ndarray, p: OperatorParams, factor: float) -> np.ndarray:
    """Estimate of the rounding error in the interior residual.

    Dominated by cancellation in ``w[i+1] - w[i]`` once ``w`` is large, damped
    by the flux derivative on steep stretches.
    """
    h = disc.h
    p_half = np.diff(w) / (h * disc.phi2_half)
    dflux = 1.0 / (1.0 + p_half**2) ** 1.5
    mag = np.maximum(np.abs(w[1:]), np.abs(w[:-1]))
    err_flux = EPS_MACH * (mag / (h * disc.phi2_half) * dflux + 1.0)
    s_err = disc.area_half * err_flux
    floor = disc.inv_vol * (s_err[1:] + s_err[:-1])
    zero = EPS_MACH * (p.kappa * np.abs(w[1:-1]) + p.s / p.eps
                       + np.abs(disc.a[1:-1]) + disc.n * np.abs(disc.b[1:-1]))
    out = np.zeros_like(w)
    out[1:-1] = factor * (floor + zero)
    return out


def newton(disc: Discretization, w0: np.ndarray, p: OperatorParams,
           options: NewtonOptions = NewtonOptions()) -> NewtonResult:
    """Damped Newton iteration on the interior nodes (ends stay fixed).

    Converged when every interior residual is below ``tol`` plus the
    rounding floor of that node. The step is halved until the residual
    2-norm decreases, at most ``max_backtracks`` times. When no such step
    exists the search is repeated with the residual weighted by
    ``1 / (tol + floor)``, so that nodes sitting at their rounding level do
    not mask progress at the remaining ones.
    """
    w = np.array(w0, dtype=float)
    F = disc.capillarity(w, p)
    history = []
    for it in range(options.max_iter + 1):
        floor = residual_floor(disc, w, p, options.roundoff_factor)
        history.append(float(np.max(np.abs(F))))
        if np.all(np.abs(F) <= options.tol + floor):
            return NewtonResult(w, True, it, F, floor, history)
        if it == options.max_iter:
            break
        step = disc.capillarity_jacobian(w, p).solve(-F[1:-1])
        if not np.all(np.isfinite(step)):
            break
        found = None
        for weight in (1.0, 1.0 / (options.tol + floor)):
            found = _line_search(disc, w, F, step, p, weight, options.max_backtracks)
            if found is not None:
                break
        if found is None:
            # no descent in either merit: the residual sits at its rounding level
            return NewtonResult(w, False, it, F, floor, history)
        w, F = found
    floor = residual_floor(disc, w, p, options.roundoff_factor)
    return NewtonResult(w, False, options.max_iter, F, floor, history)


def _line_search(disc, w, F, step, p, weight, max_backtracks):
    merit = np.linalg.norm(F * weight)
    lam = 1.0
    for _ in range(max_backtracks + 1):
        trial = w.copy()
        trial[1:-1] += lam * step
        Ft = disc.capillarity(trial, p)
        if np.all(np.isfinite(Ft)) and np.linalg.norm(Ft * weight) < (1.0 - 1e-4 * lam) * merit:
            return trial, Ft
        lam *= 0.5
    return None


def _diagnostics(disc, data, w, p, res: NewtonResult) -> Diagnostics:
    grad = np.abs(disc.proper_gradient(w))
    bound = 2.0 / (p.eps * p.kappa) if p.kappa > 0 else math.inf
    ok = bool(w.min() >= -1e-10 and w.max() <= bound * (1 + 1e-8))
    return Diagnostics(
        sup_u=float(w.max()),
        max_gradient=float(grad.max()),
        residual_inf_norm=float(np.max(np.abs(res.residual))),
        residual_floor=float(np.max(res.floor)),
        newton_iters=res.iters,
        sup_bound_ok=ok,
        residual_history=list(res.history),
    )


def _bundle(disc, data, grid, p, res) -> SolutionBundle:
    return SolutionBundle(Field(grid, res.w), p, _diagnostics(disc, data, res.w, p, res), data)


def check_eps_gate(data: InitialDataSet, eps: float) -> None:
    gate = epsilon_gate(data)
    if eps > gate * (1 + 1e-12):
        lam = eigen_bound(data)
        raise PreconditionError(
            f"eps = {eps:g} exceeds min(1/((n+1) lambda), 1/2) = {gate:g} (lambda = {lam:g})"
        )


def solve_capillarity(
    data: InitialDataSet,
    grid: RadialGrid,
    p: OperatorParams,
    s_steps: int = 10,
    options: NewtonOptions = NewtonOptions(),
    disc: Discretization | None = None,
) -> SolutionBundle:
    """Continuity method in s from the trivial solution to ``p.s``.

    The s-step halves on Newton failure, down to 1/1024.
    """
    check_eps_gate(data, p.eps)
    if p.kappa <= 0:
        raise PreconditionError("the capillarity solve needs kappa > 0")
    disc = disc or Discretization(data, grid)
    w = np.zeros(grid.N)
    s, ds = 0.0, p.s / s_steps
    res = None
    while s < p.s:
        s_next = min(p.s, s + ds)
        trial = newton(disc, w, OperatorParams(p.eps, p.kappa, s_next), options)
        if trial.converged:
            s, w, res = s_next, trial.w, trial
            continue
        ds *= 0.5
        if ds < p.s / 1024:
            raise ContinuationFailure(
                f"s-continuation stalled after s = {s:g}", last_good=s,
                diagnostics=_diagnostics(disc, data, trial.w, p, trial),
            )
    if res is None:
        res = newton(disc, w, p, options)
    return _bundle(disc, data, grid, p, res)


@dataclass
class BlowUpRegion:
    threshold: float
    intervals: list
    boundary_radius: float | None
    kappa_trace: list = field(default_factory=list)
    threshold_trace: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.intervals

    @property
    def successive_differences(self) -> list:
        radii = [b for _, b in self.kappa_trace]
        return [
            None if (a is None or b is None) else b - a for a, b in zip(radii, radii[1:])
        ]


def blowup_threshold(eps: float, kappa: float) -> float:
    return min(10.0 / math.sqrt(eps * kappa), 0.5 * 2.0 / (eps * kappa))


def detect_blowup(u_hat: Field, threshold: float) -> tuple[list, float | None]:
    """Intervals where ``u_hat > threshold`` and the outer edge of the last one.

    Edges are located by linear interpolation of the crossing.
    """
    r, w = u_hat.r, u_hat.values
    above = w > threshold
    if not above.any():
        return [], None
    intervals = []
    i, N = 0, len(w)
    while i < N:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < N and above[j + 1]:
            j += 1
        lo = r[i] if i == 0 else _cross(r[i - 1], r[i], w[i - 1], w[i], threshold)
        hi = r[j] if j == N - 1 else _cross(r[j], r[j + 1], w[j], w[j + 1], threshold)
        intervals.append((float(lo), float(hi)))
        i = j + 1
    return intervals, intervals[-1][1]


def _cross(r0, r1, w0, w1, t):
    return r0 + (t - w0) * (r1 - r0) / (w1 - w0)


def kappa_continuation(
    data: InitialDataSet,
    grid: RadialGrid,
    eps: float,
    kappa_sequence,
    s_steps: int = 10,
    options: NewtonOptions = NewtonOptions(),
    max_refine: int = 6,
) -> tuple[list, BlowUpRegion]:
    """Solve along ``kappa_sequence`` at s = 1 and track the blow-up set.

    A failed step is retried through geometric intermediate kappa values
    (at most ``max_refine`` bisections); only the requested kappa values are
    reported.
    """
    kappas = [float(k) for k in kappa_sequence]
    disc = Discretization(data, grid)
    bundles: list[SolutionBundle] = []
    trace, thresholds = [], []
    region = BlowUpRegion(math.nan, [], None, trace, thresholds)

    def record(bundle):
        T = blowup_threshold(eps, bundle.params.kappa)
        intervals, edge = detect_blowup(bundle.u_hat, T)
        region.threshold, region.intervals, region.boundary_radius = T, intervals, edge
        trace.append((bundle.params.kappa, edge))
        thresholds.append(T)
        bundles.append(bundle)

    try:
        first = solve_capillarity(data, grid, OperatorParams(eps, kappas[0], 1.0), s_steps, options, disc)
    except ContinuationFailure as exc:
        exc.partial = (bundles, region)
        raise
    record(first)
    w, k_cur = first.u_hat.values, kappas[0]
    for k_target in kappas[1:]:
        try:
            w, res = _kappa_step(disc, w, eps, k_cur, k_target, options, max_refine)
        except ContinuationFailure as exc:
            exc.partial = (bundles, region)
            raise
        k_cur = k_target
        p = OperatorParams(eps, k_target, 1.0)
        record(_bundle(disc, data, grid, p, res))
        log.debug("kappa=%.3e sup=%.3e edge=%s", k_target, w.max(), region.boundary_radius)
    return bundles, region


def _kappa_step(disc, w, eps, k_from, k_to, options, depth):
    res = newton(disc, w, OperatorParams(eps, k_to, 1.0), options)
    if res.converged:
        return res.w, res
    if depth == 0:
        raise ContinuationFailure(
            f"Newton failed at kappa = {k_to:g}", last_good=k_from,
            diagnostics=_diagnostics(disc, disc.data, res.w, OperatorParams(eps, k_to, 1.0), res),
        )
    k_mid = math.sqrt(k_from * k_to)
    w_mid, _ = _kappa_step(disc, w, eps, k_from, k_mid, options, depth - 1)
    return _kappa_step(disc, w_mid, eps, k_mid, k_to, options, depth - 1)


@dataclass
class EpsilonStage:
    eps: float
    bundle: SolutionBundle
    region: BlowUpRegion
    u: Field
    exterior: np.ndarray
    sup_bound_flags: list = field(default_factory=list)
    kappa_bundles: list = field(default_factory=list, repr=False)


@dataclass
class EpsilonLimit:
    u: Field
    exterior: np.ndarray
    boundary_radius: float | None
    stages: list
    cauchy_trace: list

    @property
    def eps_final(self) -> float:
        return self.stages[-1].eps


def exterior_mask(r: np.ndarray, boundary_radius: float | None) -> np.ndarray:
    """Nodes outside the blow-up edge; without blow-up, all but the inner
    Dirichlet node (u jumps there across one cell)."""
    return r > (r[0] if boundary_radius is None else boundary_radius)


def epsilon_limit(
    data: InitialDataSet,
    grid: RadialGrid,
    eps_sequence,
    kappa_sequence,
    s_steps: int = 10,
    options: NewtonOptions = NewtonOptions(),
    keep_kappa_bundles: bool = False,
    cauchy_buffer: float = 0.1,
) -> EpsilonLimit:
    """Run the kappa continuation for each eps and form ``u = eps * u_hat``.

    The Cauchy trace holds ``max |u_{k+1} - u_k|`` over the nodes exterior to
    both blow-up sets, leaving out a buffer of ``cauchy_buffer`` times the
    exterior width next to the blow-up edge, where u diverges in the limit.
    """
    stages: list[EpsilonStage] = []
    trace = []
    for eps in eps_sequence:
        bundles, region = kappa_continuation(data, grid, float(eps), kappa_sequence, s_steps, options)
        final = bundles[-1]
        u = Field(grid, float(eps) * final.u_hat.values)
        ext = exterior_mask(grid.r, region.boundary_radius)
        flags = [check_sup_bound(b).ok for b in bundles]
        stages.append(EpsilonStage(float(eps), final, region, u, ext, flags,
                                   bundles if keep_kappa_bundles else []))
        if len(stages) > 1:
            prev = stages[-2]
            edges = [x for x in (region.boundary_radius, prev.region.boundary_radius) if x is not None]
            common = ext & prev.exterior
            if edges:
                edge = max(edges)
                common &= grid.r >= edge + cauchy_buffer * (grid.r_out - edge)
            trace.append(float(np.max(np.abs(u.values - prev.u.values)[common])) if common.any() else math.nan)
    last = stages[-1]
    return EpsilonLimit(last.u, last.exterior, last.region.boundary_radius, stages, trace)


# a-priori estimate checks --------------------------------------------------


@dataclass
class SupBoundCheck:
    ok: bool
    margin: float
    bound: float
    intermediate_bound: float
    worst_node: int | None


def check_sup_bound(bundle: SolutionBundle, rel_slack: float = 1e-8) -> SupBoundCheck:
    """Check ``0 <= u_hat <= 2/(eps kappa)`` nodewise.

    Also reports the sharper bound ``(n+1) lambda / kappa + 1/(eps kappa)``.
    """
    p = bundle.params
    w = bundle.u_hat.values
    lam = eigen_bound(bundle.data)
    bound = 2.0 / (p.eps * p.kappa)
    sharper = (bundle.data.n + 1) * lam / p.kappa + 1.0 / (p.eps * p.kappa)
    upper_bad = w > bound * (1 + rel_slack)
    lower_bad = w < -1e-10
    bad = np.nonzero(upper_bad | lower_bad)[0]
    margin = float(min(bound - w.max(), w.min()))
    return SupBoundCheck(bad.size == 0, margin, bound, sharper, int(bad[0]) if bad.size else None)


@dataclass
class IntegralEstimate:
    lhs: float
    rhs: float
    ok: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def check_integral_estimate(
    u_eps: Field,
    eps: float,
    data: InitialDataSet,
    inner_radius: float | None = None,
    tol_quad: float = 1e-3,
) -> IntegralEstimate:
    """Compare ``int 1/sqrt(eps^2 + |grad u|^2) dV`` with its a-priori bound.

    The integral runs over the nodes outside ``inner_radius`` (the detected
    blow-up edge), or the whole annulus when None. The bound is the area of
    the two boundary spheres of that region plus ``(n+2) lambda |Omega|``
    with ``Omega`` the full annulus.
    """
    r = u_eps.r
    grad = np.gradient(u_eps.values, u_eps.grid.h, edge_order=2) / data.phi(r) ** 2
    integrand = data.volume_density(r) / np.sqrt(eps**2 + grad**2)
    mask = np.ones(r.size, bool) if inner_radius is None else exterior_mask(r, inner_radius)
    lhs = float(np.trapezoid(integrand[mask], r[mask]))
    r_inner = r[mask][0] if inner_radius is None else inner_radius
    boundary_area = float(data.area(r[-1]) + data.area(r_inner))
    rr = np.linspace(r[0], r[-1], 20001)
    volume = float(np.trapezoid(data.volume_density(rr), rr))
    rhs = boundary_area + (data.n + 2) * eigen_bound(data) * volume
    return IntegralEstimate(lhs, rhs, lhs <= rhs * (1 + tol_quad))


@dataclass
class GradientDiagnostics:
    sup_gradient: float
    boundary_gradient: float
    sup_u: float
    eta_empirical: float | None


def monitor_gradient_bounds(bundle: SolutionBundle) -> GradientDiagnostics:
    """Record gradient sizes; no pass/fail is attached.

    ``boundary_gradient`` is taken at the outer boundary, and
    ``eta_empirical = log(sup |grad| / boundary sup) / sup u``.
    """
    w = bundle.u_hat.values
    r = bundle.r
    grad = np.abs(np.gradient(w, bundle.u_hat.grid.h, edge_order=2) / bundle.data.phi(r) ** 2)
    sup_g, bdry = float(grad.max()), float(grad[-1])
    sup_u = float(w.max())
    eta = None
    if sup_g > 0 and bdry > 0 and sup_u > 0:
        eta = math.log(sup_g / bdry) / sup_u
    return GradientDiagnostics(sup_g, bdry, sup_u, eta)
