"""Pipeline orchestration and the artifacts each subcommand writes."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import barriers as bar
from .config import RunConfig, build_dataset, validate
from .geometry import NoSignChange, find_mots_radius_bruteforce, gradient_function
from .grid import Field, RadialGrid
from .levelset_oracle import (
    GuardBand,
    QueryInsideHorizon,
    arrival_oracle,
    energy_monotonicity_check,
    flow_spheres,
    oracle_table,
)
from .pde_core import Discretization
from .solver import (
    ContinuationFailure,
    Schedules,
    check_integral_estimate,
    check_sup_bound,
    epsilon_limit,
    exterior_mask,
    kappa_continuation,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONTINUATION, EXIT_INVALID = 0, 1, 2, 3


@dataclass
class RunSummary:
    """Result record of one run.

    ``timing`` is saved next to the summary rather than inside it, so that
    the summary file of a serial run is reproducible byte for byte.
    """

    command: str
    config: dict
    mots_radius_detected: float | None = None
    mots_radius_oracle: float | None = None
    rel_error: float | None = None
    sup_bound_ok: bool | None = None
    integral_lhs: float | None = None
    integral_rhs: float | None = None
    integral_ok: bool | None = None
    blowup_intervals: list = field(default_factory=list)
    kappa_trace: list = field(default_factory=list)
    schedules: dict = field(default_factory=dict)
    cauchy_traces: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    status: str = "ok"
    format_version: int = FORMAT_VERSION
    timing: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {k: v for k, v in asdict(self).items() if k != "timing"}
        return json.dumps(_clean(body), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str, timing: dict | None = None) -> "RunSummary":
        raw = json.loads(text)
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ValueError(f"unknown summary fields {sorted(unknown)}")
        return cls(**raw, timing=timing or {})

    def normalized(self) -> "RunSummary":
        """The summary as it reads back from disk (lists, no NaN)."""
        return RunSummary.from_json(self.to_json(), _clean(self.timing))

    def save(self, directory: str | Path) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / SUMMARY_FILE).write_text(self.to_json())
        (d / TIMING_FILE).write_text(json.dumps(_clean(self.timing), indent=2, sort_keys=True) + "\n")
        return d / SUMMARY_FILE

    @classmethod
    def load(cls, directory: str | Path) -> "RunSummary":
        d = Path(directory)
        timing_path = d / TIMING_FILE
        timing = json.loads(timing_path.read_text()) if timing_path.exists() else {}
        return cls.from_json((d / SUMMARY_FILE).read_text(), timing)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_csv(path: Path, header: list[str], columns) -> None:
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join("%.17g" % x for x in row) + "\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return header, data


class InvalidRun(ValueError):
    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


def _grid(cfg: RunConfig, data) -> RadialGrid:
    return RadialGrid(data.r_in, data.r_out, cfg.grid.N)


def _oracle(data):
    try:
        est = find_mots_radius_bruteforce(data)
    except NoSignChange:
        return None
    return est.oracle_radius


def _schedule_dict(s: Schedules, data) -> dict:
    out = asdict(s)
    out["kappa_sequence"] = [float(k) for k in s.kappa_sequence()]
    out["eps_sequence"] = [float(e) for e in s.eps_sequence(data)]
    return out


# subcommands ----------------------------------------------------------------


def run_solve(cfg: RunConfig, out: Path) -> RunSummary:
    data = build_dataset(cfg)
    grid = _grid(cfg, data)
    sch = cfg.schedules
    summary = RunSummary("solve", cfg.echo(), schedules=_schedule_dict(sch, data))
    summary.mots_radius_oracle = _oracle(data)
    try:
        lim = epsilon_limit(data, grid, sch.eps_sequence(data), sch.kappa_sequence(), sch.s_steps,
                            cfg.newton, cauchy_buffer=cfg.solve.cauchy_buffer)
    except ContinuationFailure as exc:
        summary.status = f"continuation failure: {exc}"
        summary.extra["last_good"] = exc.last_good
        raise _Failed(summary) from exc
    final = lim.stages[-1]
    summary.mots_radius_detected = lim.boundary_radius
    if lim.boundary_radius is not None and summary.mots_radius_oracle is not None:
        summary.rel_error = abs(lim.boundary_radius - summary.mots_radius_oracle) / summary.mots_radius_oracle
    summary.sup_bound_ok = all(all(st.sup_bound_flags) for st in lim.stages)
    est = check_integral_estimate(final.u, final.eps, data, lim.boundary_radius, cfg.solve.tol_quad)
    summary.integral_lhs, summary.integral_rhs, summary.integral_ok = est.lhs, est.rhs, est.ok
    summary.blowup_intervals = [list(iv) for iv in final.region.intervals]
    summary.kappa_trace = [[k, b] for k, b in final.region.kappa_trace]
    summary.cauchy_traces = list(lim.cauchy_trace)
    summary.extra["stages"] = [
        {"eps": st.eps, "boundary_radius": st.region.boundary_radius,
         "sup_u": st.bundle.diagnostics.sup_u, "newton_iters": st.bundle.diagnostics.newton_iters}
        for st in lim.stages
    ]
    summary.extra["oracle_rel_error"] = _oracle_error(data, grid, final.u) if lim.boundary_radius is None else None

    b = final.bundle
    res = Discretization(data, grid).capillarity(b.u_hat.values, b.params)
    v = gradient_function(data, b.u_hat).values
    write_csv(out / "solution.csv", ["r", "uhat", "u", "residual", "v"],
              [grid.r, b.u_hat.values, final.u.values, res, v])
    return summary


def _oracle_error(data, grid, u: Field) -> float | None:
    """Max relative deviation of u from the arrival-time oracle, away from both ends."""
    r = grid.r
    L = data.r_out - data.r_in
    sel = (r >= data.r_in + 0.05 * L) & (r <= data.r_out - 0.05 * L)
    errs = []
    for ri, ui in zip(r[sel][::10], u.values[sel][::10]):
        try:
            us = arrival_oracle(data, data.r_out, float(ri))
        except (QueryInsideHorizon, GuardBand):
            return None
        errs.append(abs(ui - us) / us)
    return float(max(errs)) if errs else None


def run_oracle(cfg: RunConfig, out: Path) -> RunSummary:
    data = build_dataset(cfg)
    R = cfg.oracle.R if cfg.oracle.R is not None else data.r_out
    rows = oracle_table(data, R, cfg.oracle.samples)
    write_csv(out / "oracle.csv", ["r", "H", "P", "theta_plus", "u_star"], list(zip(*rows)))
    summary = RunSummary("oracle", cfg.echo())
    summary.mots_radius_oracle = _oracle(data)
    summary.extra["R"] = R
    return summary


def run_flow(cfg: RunConfig, out: Path) -> RunSummary:
    data = build_dataset(cfg)
    r0 = cfg.flow.r0 if cfg.flow.r0 is not None else data.r_out
    traj = flow_spheres(data, r0, cfg.flow.dt, cfg.flow.t_max)
    write_csv(out / "flow.csv", ["t", "r", "area", "bulk", "dissipation"],
              [traj.times, traj.radii, traj.areas, traj.bulk_energies, traj.dissipation])
    summary = RunSummary("flow", cfg.echo())
    summary.mots_radius_oracle = _oracle(data)
    summary.extra.update(stop_reason=traj.stop_reason, samples=len(traj), r0=r0, dt=traj.dt,
                         t_end=float(traj.times[-1]), r_end=float(traj.radii[-1]))
    if len(traj) >= 10:
        summary.extra["energy_deviation"] = energy_monotonicity_check(traj)
    return summary


def run_barriers(cfg: RunConfig, out: Path) -> RunSummary:
    data = build_dataset(cfg)
    grid = _grid(cfg, data)
    bc = cfg.barriers
    verdicts = {}
    z = bar.make_zeta(bc.delta)
    verdicts["zeta_junction"] = {"residuals": z.junction_residuals(),
                                 "ok": all(max(j[1:]) <= 1e-10 for j in z.junction_residuals())}
    for name, chk in bar.zeta_slope_bounds(bc.delta).items():
        verdicts[f"zeta_{name}"] = asdict(chk)
    pb = bar.make_psi_boundary(bc.tau)
    for name, chk in bar.psi_boundary_bounds(pb).items():
        verdicts[f"psi_boundary_{name}"] = asdict(chk)
    verdicts["supersolution"] = bar.verify_supersolution(bc.tau, data, grid, bc.eps).to_dict()
    if bc.r_minus is not None:
        pl = bar.make_psi_lower(bc.delta, bc.tau_lower)
        verdicts["psi_lower_junction"] = {"residuals": pl.junction_residuals(),
                                          "ok": all(max(j[1:]) <= 1e-10 for j in pl.junction_residuals())}
        um, inside = bar.lower_barrier_coordinate(data, grid, bc.r_minus, bc.tau_lower)
        verdicts["lower_barrier"] = bar.verify_lower_barrier(pl, um, data, bc.eps_lower).to_dict()
    ok = all(_verdict_ok(v) for v in verdicts.values())
    (out / "barriers.json").write_text(json.dumps(_clean(verdicts), indent=2, sort_keys=True) + "\n")
    summary = RunSummary("barriers-check", cfg.echo(), verdicts=_clean(verdicts))
    summary.extra["passed"] = ok
    summary.status = "ok" if ok else "barrier check failed"
    return summary


def _verdict_ok(v: dict) -> bool:
    return bool(v.get("passed", v.get("ok")))


def _sweep_one(args):
    cfg, eps, directory = args
    data = build_dataset(cfg)
    grid = _grid(cfg, data)
    sch = cfg.schedules
    t0 = time.perf_counter()
    summary = RunSummary("solve", cfg.echo(), schedules=_schedule_dict(sch, data))
    summary.extra["eps"] = eps
    summary.mots_radius_oracle = _oracle(data)
    try:
        bundles, region = kappa_continuation(data, grid, eps, sch.kappa_sequence(), sch.s_steps, cfg.newton)
    except ContinuationFailure as exc:
        summary.status = f"continuation failure: {exc}"
        summary.timing = {"seconds": time.perf_counter() - t0}
        summary.save(directory)
        return summary, None
    final = bundles[-1]
    u = eps * final.u_hat.values
    summary.mots_radius_detected = region.boundary_radius
    if region.boundary_radius is not None and summary.mots_radius_oracle is not None:
        summary.rel_error = abs(region.boundary_radius - summary.mots_radius_oracle) / summary.mots_radius_oracle
    summary.sup_bound_ok = all(check_sup_bound(b).ok for b in bundles)
    est = check_integral_estimate(Field(grid, u), eps, data, region.boundary_radius, cfg.solve.tol_quad)
    summary.integral_lhs, summary.integral_rhs, summary.integral_ok = est.lhs, est.rhs, est.ok
    summary.blowup_intervals = [list(iv) for iv in region.intervals]
    summary.kappa_trace = [[k, b] for k, b in region.kappa_trace]
    summary.timing = {"seconds": time.perf_counter() - t0}
    summary.save(directory)
    write_csv(Path(directory) / "solution.csv", ["r", "uhat", "u"], [grid.r, final.u_hat.values, u])
    return summary, (u, exterior_mask(grid.r, region.boundary_radius), region.boundary_radius)


def sweep_workers(serial: bool) -> int:
    if serial:
        return 1
    env = os.environ.get("MOTSFLOW_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, min(cap, int(env)))
        except ValueError:
            raise InvalidRun([f"MOTSFLOW_THREADS must be an integer, got {env!r}"]) from None
    return cap


def run_sweep(cfg: RunConfig, out: Path, serial: bool = False) -> RunSummary:
    data = build_dataset(cfg)
    grid = _grid(cfg, data)
    eps_values = [float(e) for e in (cfg.sweep.eps or cfg.schedules.eps_sequence(data))]
    jobs = [(cfg, eps, out / f"eps_{k:02d}") for k, eps in enumerate(eps_values)]
    workers = min(sweep_workers(serial), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    traces = []
    for k in range(1, len(results)):
        a, b = results[k - 1][1], results[k][1]
        if a is None or b is None:
            traces.append(math.nan)
            continue
        common = a[1] & b[1]
        edges = [e for e in (a[2], b[2]) if e is not None]
        if edges:
            edge = max(edges)
            common &= grid.r >= edge + cfg.solve.cauchy_buffer * (grid.r_out - edge)
        traces.append(float(np.max(np.abs(a[0] - b[0])[common])) if common.any() else math.nan)
    write_csv(out / "cauchy_traces.csv", ["eps_from", "eps_to", "max_abs_difference"],
              [eps_values[:-1], eps_values[1:], traces])
    summary = RunSummary("sweep", cfg.echo(), schedules=_schedule_dict(cfg.schedules, data))
    summary.cauchy_traces = traces
    summary.extra["runs"] = [{"eps": eps, "dir": p.name, "status": r[0].status,
                              "mots_radius_detected": r[0].mots_radius_detected}
                             for (_, eps, p), r in zip(jobs, results)]
    summary.sup_bound_ok = all(r[0].sup_bound_ok for r in results if r[0].sup_bound_ok is not None)
    if any(r[1] is None for r in results):
        summary.status = "continuation failure in at least one run"
    return summary


class _Failed(Exception):
    def __init__(self, summary):
        self.summary = summary


def run(cfg: RunConfig, out: str | Path | None = None, serial: bool = False) -> tuple[RunSummary | list[str], int]:
    """Execute ``cfg.command``; returns ``(summary or violations, exit code)``."""
    problems = validate(cfg)
    if cfg.command == "validate":
        return problems, EXIT_INVALID if problems else EXIT_OK
    if problems:
        return problems, EXIT_INVALID
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    handlers = {"solve": run_solve, "oracle": run_oracle, "flow": run_flow,
                "barriers-check": run_barriers}
    code = EXIT_OK
    try:
        if cfg.command == "sweep":
            summary = run_sweep(cfg, out, serial)
            if summary.status != "ok":
                code = EXIT_CONTINUATION
        else:
            summary = handlers[cfg.command](cfg, out)
            if summary.status != "ok":
                code = EXIT_CHECK_FAILED
    except _Failed as exc:
        summary, code = exc.summary, EXIT_CONTINUATION
    summary.timing = {"seconds": time.perf_counter() - t0}
    summary.save(out)
    return summary.normalized(), code

