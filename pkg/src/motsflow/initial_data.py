"""Spherically symmetric initial data sets (M, g, K).

The metric is conformally flat, ``g = phi(r)**4 (dr**2 + r**2 dOmega_n**2)``,
and ``K`` has one eigenvalue ``a(r)`` on the radial direction and a second
eigenvalue ``b(r)`` repeated on the ``n`` tangential directions::

    K = a n_r (x) n_r + b (g - n_r (x) n_r)

Profiles are plain callables accepting floats or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

Profile = Callable[[np.ndarray], np.ndarray]

FAMILIES = ("flat", "schwarzschild_isotropic", "constant_trace", "gaussian_pinch", "custom")

# number of radial samples used for positivity checks and eigen_bound
DENSE_SAMPLES = 20001


class InvalidDataError(ValueError):
    """Raised for initial data that violates the standing hypotheses."""


def _const(c: float) -> Profile:
    def f(r):
        return np.zeros_like(np.asarray(r, dtype=float)) + c

    return f


@dataclass(frozen=True)
class InitialDataSet:
    """Immutable radial description of an initial data set.

    ``phi``, ``dphi`` and ``d2phi`` are the conformal factor and its first two
    radial derivatives; ``a`` and ``b`` are the radial and tangential
    eigenvalues of ``K``.
    """

    n: int
    phi: Profile
    dphi: Profile
    d2phi: Profile
    a: Profile
    b: Profile
    r_domain: tuple[float, float]
    tag: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        r_in, r_out = self.r_domain
        if self.n < 1:
            raise InvalidDataError(f"dimension n must be >= 1, got {self.n}")
        if not (math.isfinite(r_in) and math.isfinite(r_out)):
            raise InvalidDataError("r_domain must be finite")
        if r_in <= 0:
            raise InvalidDataError(f"r_in must be positive, got {r_in}")
        if r_out <= r_in:
            raise InvalidDataError(f"r_out must exceed r_in, got {self.r_domain}")
        phi = np.asarray(self.phi(self.dense_radii()), dtype=float)
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise InvalidDataError("conformal factor must be positive on r_domain")

    def dense_radii(self, samples: int = DENSE_SAMPLES) -> np.ndarray:
        return np.linspace(self.r_domain[0], self.r_domain[1], samples)

    @property
    def r_in(self) -> float:
        return self.r_domain[0]

    @property
    def r_out(self) -> float:
        return self.r_domain[1]

    @property
    def sphere_area_constant(self) -> float:
        """Area of the unit round n-sphere."""
        return 2.0 * math.pi ** ((self.n + 1) / 2) / math.gamma((self.n + 1) / 2)

    def trace_K(self, r):
        """Trace of K over M, ``a + n b``."""
        return self.a(r) + self.n * self.b(r)

    def K_matrix(self, r: float) -> np.ndarray:
        """K in an orthonormal frame (radial direction first)."""
        return np.diag([float(self.a(r))] + [float(self.b(r))] * self.n)

    def area(self, r):
        """Area of the coordinate sphere of radius r."""
        r = np.asarray(r, dtype=float)
        return self.sphere_area_constant * self.phi(r) ** (2 * self.n) * r**self.n

    def volume_density(self, r):
        """dV/dr for the shell at coordinate radius r."""
        r = np.asarray(r, dtype=float)
        return self.sphere_area_constant * self.phi(r) ** (2 * self.n + 2) * r**self.n

    def with_domain(self, r_in: float, r_out: float) -> "InitialDataSet":
        return replace(self, r_domain=(float(r_in), float(r_out)))


@dataclass(frozen=True)
class DataFamily:
    """Named family of initial data plus its parameters.

    ``mass`` is used by schwarzschild_isotropic, ``c`` by constant_trace and
    gaussian_pinch (trace constant and pinch amplitude), ``r0``/``width`` by
    gaussian_pinch. ``r_domain=None`` selects the family default. A custom
    family reads ``profile_file`` (columns ``r phi a b``) or takes the
    ``samples`` mapping directly.
    """

    tag: str = "flat"
    n: int = 2
    mass: float = 1.0
    c: float = 0.0
    r0: float = 0.7
    width: float = 0.2
    r_domain: tuple[float, float] | None = None
    profile_file: str | None = None
    samples: dict | None = None


def default_domain(fam: DataFamily) -> tuple[float, float]:
    if fam.tag == "schwarzschild_isotropic":
        horizon = fam.mass / 2
        return (0.2 * horizon, 4.0 * horizon)
    if fam.tag == "gaussian_pinch":
        return (0.18, 1.5)
    return (0.05, 1.0)


def make_dataset(family: DataFamily) -> InitialDataSet:
    """Instantiate the initial data set described by ``family``."""
    if family.tag not in FAMILIES:
        raise InvalidDataError(f"unknown data family {family.tag!r}")
    for name in ("mass", "c", "r0", "width"):
        if not math.isfinite(getattr(family, name)):
            raise InvalidDataError(f"family parameter {name} must be finite")
    dom = tuple(float(x) for x in (family.r_domain or default_domain(family)))
    n = int(family.n)
    params = {"mass": family.mass, "c": family.c, "r0": family.r0, "width": family.width}

    if family.tag == "flat":
        one, zero = _const(1.0), _const(0.0)
        return InitialDataSet(n, one, zero, zero, zero, zero, dom, "flat", {})

    if family.tag == "schwarzschild_isotropic":
        m = family.mass
        if m <= 0:
            raise InvalidDataError("schwarzschild mass must be positive")
        if not dom[0] < m / 2 < dom[1]:
            raise InvalidDataError("schwarzschild domain must bracket the horizon r = M/2")
        zero = _const(0.0)
        return InitialDataSet(
            n,
            lambda r: 1.0 + m / (2.0 * np.asarray(r, dtype=float)),
            lambda r: -m / (2.0 * np.asarray(r, dtype=float) ** 2),
            lambda r: m / np.asarray(r, dtype=float) ** 3,
            zero,
            zero,
            dom,
            "schwarzschild_isotropic",
            {"mass": m},
        )

    if family.tag == "constant_trace":
        one, zero, c = _const(1.0), _const(0.0), _const(family.c)
        return InitialDataSet(n, one, zero, zero, c, c, dom, "constant_trace", {"c": family.c})

    if family.tag == "gaussian_pinch":
        if family.width <= 0:
            raise InvalidDataError("gaussian_pinch width must be positive")
        amp, r0, w = family.c, family.r0, family.width

        # K = b g with b = -c exp(-(r - r0)^2 / w^2)
        def b(r):
            r = np.asarray(r, dtype=float)
            return -amp * np.exp(-((r - r0) ** 2) / w**2)

        one, zero = _const(1.0), _const(0.0)
        return InitialDataSet(n, one, zero, zero, b, b, dom, "gaussian_pinch", params)

    return _custom_dataset(family, dom, n)


def read_profile_table(path: str | Path) -> dict[str, np.ndarray]:
    """Read a whitespace table with '#' comments.

    Two columns are read as ``r phi`` (K = 0); four columns as ``r phi a b``.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(x) for x in line.split()])
    table = np.array(rows, dtype=float)
    if table.ndim != 2 or table.shape[1] not in (2, 4) or table.shape[0] < 4:
        raise InvalidDataError(f"{path}: expected >= 4 rows of 2 or 4 columns")
    out = {"r": table[:, 0], "phi": table[:, 1]}
    if table.shape[1] == 4:
        out["a"], out["b"] = table[:, 2], table[:, 3]
    return out


def _custom_dataset(family: DataFamily, dom, n) -> InitialDataSet:
    samples = family.samples
    if samples is None:
        if family.profile_file is None:
            raise InvalidDataError("custom family needs samples or profile_file")
        samples = read_profile_table(family.profile_file)
    r = np.asarray(samples["r"], dtype=float)
    if np.any(np.diff(r) <= 0):
        raise InvalidDataError("custom profile radii must be strictly increasing")
    if r[0] > dom[0] or r[-1] < dom[1]:
        raise InvalidDataError("custom profile table does not cover r_domain")
    phi = CubicSpline(r, np.asarray(samples["phi"], dtype=float))
    zero = _const(0.0)
    a = CubicSpline(r, np.asarray(samples["a"], dtype=float)) if "a" in samples else zero
    b = CubicSpline(r, np.asarray(samples["b"], dtype=float)) if "b" in samples else zero
    return InitialDataSet(
        n, phi, phi.derivative(1), phi.derivative(2), a, b, dom, "custom",
        {"profile_file": family.profile_file},
    )


def eigen_bound(data: InitialDataSet) -> float:
    """Largest |eigenvalue| of K over a dense radial sample."""
    r = data.dense_radii()
    a = np.abs(np.asarray(data.a(r), dtype=float))
    b = np.abs(np.asarray(data.b(r), dtype=float))
    return float(max(a.max(), b.max()))


def epsilon_gate(data: InitialDataSet) -> float:
    """Largest admissible epsilon, ``min(1/((n+1) lambda), 1/2)``."""
    lam = eigen_bound(data)
    if lam == 0:
        return 0.5
    return min(1.0 / ((data.n + 1) * lam), 0.5)


def apply_interior_modification(
    data: InitialDataSet,
    phi_profile: Profile,
    support: tuple[float, float] | None = None,
    atol: float = 1e-14,
) -> InitialDataSet:
    """Return data with ``K' = K - (phi/n) g``.

    ``phi_profile`` must vanish outside ``support`` (default: the whole
    domain, i.e. no restriction). Both eigenvalues drop by ``phi/n``, so the
    null expansion of every coordinate sphere drops by exactly ``phi``.
    """
    if support is not None:
        lo, hi = support
        r = data.dense_radii()
        outside = (r < lo) | (r > hi)
        vals = np.asarray(phi_profile(r[outside]), dtype=float)
        if vals.size and np.max(np.abs(vals)) > atol:
            raise InvalidDataError(
                f"modification profile does not vanish outside support [{lo}, {hi}]"
            )
    n = data.n
    a0, b0 = data.a, data.b

    def a(r):
        return a0(r) - phi_profile(r) / n

    def b(r):
        return b0(r) - phi_profile(r) / n

    params = dict(data.params)
    params["modified"] = True
    return replace(data, a=a, b=b, params=params)
