"""Run configuration: INI parsing, typed sections and validation.

The file has one section per concern; every key is optional. ``schema.ini``
at the repository root documents all keys with their defaults.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .geometry import mean_curvature, theta_plus
from .grid import MIN_NODES
from .initial_data import (
    DataFamily,
    InitialDataSet,
    InvalidDataError,
    apply_interior_modification,
    default_domain,
    eigen_bound,
    make_dataset,
)
from .solver import NewtonOptions, Schedules

COMMANDS = ("solve", "oracle", "flow", "barriers-check", "sweep", "validate")


class ConfigError(ValueError):
    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


@dataclass(frozen=True)
class DataSection:
    family: str = "flat"
    n: int = 2
    mass: float = 1.0
    c: float = 0.0
    r0: float = 0.7
    width: float = 0.2
    profile_file: str | None = None


@dataclass(frozen=True)
class ModificationSection:
    """Interior modification K' = K - (phi/n) g.

    ``kind = ramp``: ``phi = amplitude (1 - r/r_max)^2`` for r < r_max.
    ``kind = constant``: ``phi = amplitude`` on [r_min, r_max].
    """

    kind: str = "none"
    amplitude: float = 0.0
    r_min: float = 0.0
    r_max: float = 0.0


@dataclass(frozen=True)
class GridSection:
    r_in: float | None = None
    r_out: float | None = None
    N: int = 2001


@dataclass(frozen=True)
class SolveSection:
    tol_quad: float = 1e-3
    cauchy_buffer: float = 0.1


@dataclass(frozen=True)
class OracleSection:
    R: float | None = None
    samples: int = 201


@dataclass(frozen=True)
class FlowSection:
    r0: float | None = None
    dt: float | None = None
    t_max: float = math.inf


@dataclass(frozen=True)
class BarriersSection:
    tau: float = 0.1
    eps: float = 0.0625
    delta: float = 1.0
    tau_lower: float = 0.05
    eps_lower: float = 1e-5
    r_minus: float | None = None


@dataclass(frozen=True)
class SweepSection:
    eps: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    data: DataSection = DataSection()
    modification: ModificationSection = ModificationSection()
    grid: GridSection = GridSection()
    schedules: Schedules = Schedules()
    newton: NewtonOptions = NewtonOptions()
    solve: SolveSection = SolveSection()
    oracle: OracleSection = OracleSection()
    flow: FlowSection = FlowSection()
    barriers: BarriersSection = BarriersSection()
    sweep: SweepSection = SweepSection()
    out: str = "out"
    source: str | None = field(default=None, compare=False)

    def echo(self) -> dict:
        """Plain nested dict of every setting (written into each artifact)."""
        out = {"command": self.command}
        for name in ("data", "modification", "grid", "schedules", "newton", "solve",
                     "oracle", "flow", "barriers", "sweep"):
            out[name] = _jsonable(asdict(getattr(self, name)))
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


SECTIONS = {
    "data": DataSection,
    "modification": ModificationSection,
    "grid": GridSection,
    "schedules": Schedules,
    "newton": NewtonOptions,
    "solve": SolveSection,
    "oracle": OracleSection,
    "flow": FlowSection,
    "barriers": BarriersSection,
    "sweep": SweepSection,
}


def _convert(cls, name, raw):
    ftype = {f.name: f.type for f in fields(cls)}[name]
    text = raw.strip()
    if "tuple" in ftype:
        return tuple(float(x) for x in text.replace(",", " ").split())
    if text.lower() in ("", "none") and "None" in ftype:
        return None
    if ftype.startswith("int"):
        return int(text)
    if ftype.startswith("float"):
        return float(text)
    return text


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    errors, kwargs = [], {}
    for section in cp.sections():
        if section == "run":
            for key, val in cp.items(section):
                if key == "command":
                    kwargs["command"] = val.strip()
                elif key == "out":
                    kwargs["out"] = val.strip()
                else:
                    errors.append(f"[run] {key}: unknown key")
            continue
        cls = SECTIONS.get(section)
        if cls is None:
            errors.append(f"[{section}]: unknown section")
            continue
        names = {f.name for f in fields(cls)}
        values = {}
        for key, val in cp.items(section):
            if key not in names:
                errors.append(f"[{section}] {key}: unknown key")
                continue
            try:
                values[key] = _convert(cls, key, val)
            except ValueError:
                errors.append(f"[{section}] {key}: cannot parse {val!r}")
        try:
            kwargs[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            errors.append(f"[{section}]: {exc}")
    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(source=source, **kwargs)
    if cfg.command not in COMMANDS:
        raise ConfigError([f"[run] command: must be one of {', '.join(COMMANDS)}"])
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config(text, str(path))


def modification_profile(mod: ModificationSection):
    """``(profile, support)`` for the configured modification, or None."""
    if mod.kind == "none":
        return None
    A, lo, hi = mod.amplitude, mod.r_min, mod.r_max
    if mod.kind == "ramp":
        if hi <= 0:
            raise ConfigError(["[modification] r_max: a ramp needs r_max > 0"])
        def phi(r):
            r = np.asarray(r, dtype=float)
            return A * np.clip(1.0 - r / hi, 0.0, None) ** 2
        return phi, (0.0, hi)
    if mod.kind == "constant":
        if not lo < hi:
            raise ConfigError(["[modification] r_min: need r_min < r_max"])
        def phi(r):
            r = np.asarray(r, dtype=float)
            return np.where((r >= lo) & (r <= hi), A, 0.0)
        return phi, (lo, hi)
    raise ConfigError([f"[modification] kind: unknown kind {mod.kind!r}"])


def build_dataset(cfg: RunConfig) -> InitialDataSet:
    d = cfg.data
    fam = DataFamily(d.family, d.n, d.mass, d.c, d.r0, d.width, profile_file=d.profile_file)
    if cfg.grid.r_in is not None or cfg.grid.r_out is not None:
        lo, hi = default_domain(fam)
        lo = cfg.grid.r_in if cfg.grid.r_in is not None else lo
        hi = cfg.grid.r_out if cfg.grid.r_out is not None else hi
        fam = replace(fam, r_domain=(lo, hi))
    data = make_dataset(fam)
    prof = modification_profile(cfg.modification)
    if prof is not None:
        data = apply_interior_modification(data, *prof)
    return data


def _fraction(x: float) -> str:
    f = Fraction(x).limit_denominator(1000)
    return str(f) if abs(float(f) - x) < 1e-12 * max(1.0, abs(x)) else f"{x:.6g}"


def validate(cfg: RunConfig) -> list[str]:
    """Every reason the configuration cannot run; empty when runnable."""
    out = []
    if cfg.grid.N < MIN_NODES:
        out.append(f"[grid] N: need at least {MIN_NODES} nodes")
    if cfg.grid.r_in is not None and cfg.grid.r_in <= 0:
        out.append("[grid] r_in: must be positive")
    if cfg.data.n < 1:
        out.append("[data] n: must be >= 1")
    try:
        data = build_dataset(cfg)
    except (InvalidDataError, ConfigError, OSError) as exc:
        msgs = exc.messages if isinstance(exc, ConfigError) else [f"[data] {exc}"]
        return out + msgs
    eps_values = [float(e) for e in cfg.schedules.eps_sequence(data)]
    eps_values += [float(e) for e in cfg.sweep.eps]
    lam = eigen_bound(data)
    for eps in eps_values:
        if eps <= 0:
            out.append(f"ε = {eps:g} must be positive")
            continue
        if eps > 0.5:
            out.append(f"ε = {eps:g}: ε > 1/2")
        if lam > 0 and eps > 1.0 / ((data.n + 1) * lam) * (1 + 1e-12):
            out.append(f"ε = {eps:g}: ε > 1/((n+1)λ) = {_fraction(1.0 / ((data.n + 1) * lam))}")
    th = float(theta_plus(data, data.r_out))
    H = float(mean_curvature(data, data.r_out))
    if not (th > 0 and H > 0):
        out.append(f"outer boundary not outer untrapped (theta_plus = {th:.6g}, H = {H:.6g} at r_out)")
    # several schedule entries may report the same gate violation
    return list(dict.fromkeys(out))
