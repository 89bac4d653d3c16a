"""Uniform radial grids and nodal fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_NODES = 16


@dataclass(frozen=True)
class RadialGrid:
    r_in: float
    r_out: float
    N: int

    def __post_init__(self):
        if self.N < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes, got {self.N}")
        if not 0 < self.r_in < self.r_out:
            raise ValueError(f"invalid grid interval [{self.r_in}, {self.r_out}]")

    @classmethod
    def for_data(cls, data, N: int = 2001) -> "RadialGrid":
        return cls(data.r_in, data.r_out, N)

    @property
    def h(self) -> float:
        return (self.r_out - self.r_in) / (self.N - 1)

    @property
    def r(self) -> np.ndarray:
        return np.linspace(self.r_in, self.r_out, self.N)

    @property
    def r_half(self) -> np.ndarray:
        r = self.r
        return 0.5 * (r[1:] + r[:-1])

    def refine(self) -> "RadialGrid":
        """Grid with half the spacing (every old node is kept)."""
        return RadialGrid(self.r_in, self.r_out, 2 * self.N - 1)


@dataclass(frozen=True)
class Field:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.N,):
            raise ValueError(f"field has shape {vals.shape}, grid has {self.grid.N} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "Field":
        return cls(grid, np.asarray(func(grid.r), dtype=float) + np.zeros(grid.N))

    @classmethod
    def constant(cls, grid: RadialGrid, c: float = 0.0) -> "Field":
        return cls(grid, np.full(grid.N, float(c)))

    @property
    def r(self) -> np.ndarray:
        return self.grid.r

    def __len__(self):
        return self.grid.N
