"""Brownian sheet samples on rectangular lattices.

A sheet realization is the double cumulative sum of independent
N(0, dt*dx) cell increments, which reproduces the covariance
(t ^ s)(x ^ y) exactly at lattice nodes.  Randomness is counter-based:
one Philox stream per (seed, substream) pair, so regeneration is
bit-identical and parallel replications never share draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "GridSpec",
    "SheetGrid",
    "RngPolicy",
    "substream_generator",
    "generate_sheet",
    "sheet_value_at",
    "extend_sheet",
]


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice on [0, t_max] x [0, x_max] with nt x nx cells."""

    t_max: float
    x_max: float
    nt: int
    nx: int

    def __post_init__(self):
        if not (self.t_max > 0 and self.x_max > 0):
            raise ConfigurationError("grid horizons must be positive")
        if self.nt < 1 or self.nx < 1:
            raise ConfigurationError("cell counts must be >= 1")

    @property
    def dt(self) -> float:
        return self.t_max / self.nt

    @property
    def dx(self) -> float:
        return self.x_max / self.nx

    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.nt + 1)

    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.nx + 1)


@dataclass(frozen=True)
class RngPolicy:
    """Counter-based stream policy: one substream per replication.

    Distinct (seed, substream) keys index statistically independent Philox
    streams, so results do not depend on how replications are scheduled.
    """

    seed: int = 0

    def generator(self, substream: int) -> np.random.Generator:
        return substream_generator(self.seed, substream)


def substream_generator(seed: int, substream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(substream & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class SheetGrid:
    """One realized sheet: values[i][j] = B(i*dt, j*dx), zero on the axes.

    Immutable after construction; extension returns a new grid whose
    restriction to the old lattice is bit-identical.
    """

    spec: GridSpec
    values: np.ndarray
    seed: int
    substream: int
    rng_state: dict[str, Any] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self.values.setflags(write=False)


def _accumulate(increments: np.ndarray, top_row: np.ndarray) -> np.ndarray:
    """Cumulative block sums with a zero left column, offset by top_row."""
    k, nx = increments.shape
    out = np.empty((k, nx + 1))
    out[:, 0] = 0.0
    np.cumsum(increments, axis=1, out=out[:, 1:])
    np.cumsum(out, axis=0, out=out)
    out += top_row
    return out


def generate_sheet(spec: GridSpec, seed: int, substream: int) -> SheetGrid:
    """Sample one sheet realization on spec's lattice.

    Cell increments are drawn row-major so that extend_sheet can continue
    the same stream without re-reading earlier draws.
    """
    rng = substream_generator(seed, substream)
    increments = rng.standard_normal((spec.nt, spec.nx))
    increments *= np.sqrt(spec.dt * spec.dx)
    values = np.zeros((spec.nt + 1, spec.nx + 1))
    values[1:] = _accumulate(increments, values[0])
    return SheetGrid(
        spec=spec,
        values=values,
        seed=seed,
        substream=substream,
        rng_state=rng.bit_generator.state,
    )


def sheet_value_at(grid: SheetGrid, t: float, x: float) -> float:
    """Value at the nearest lattice node rounding down; exact at nodes."""
    spec = grid.spec
    if not (0.0 <= t <= spec.t_max) or not (0.0 <= x <= spec.x_max):
        raise DomainError(f"({t}, {x}) outside [0, {spec.t_max}] x [0, {spec.x_max}]")
    i = min(int(np.floor(t / spec.dt + 1e-12)), spec.nt)
    j = min(int(np.floor(x / spec.dx + 1e-12)), spec.nx)
    return float(grid.values[i, j])


def extend_sheet(grid: SheetGrid, new_t_max: float) -> SheetGrid:
    """Grow the time horizon to new_t_max with fresh rows from the same
    substream's continuation, preserving dt and all existing values."""
    spec = grid.spec
    if new_t_max <= spec.t_max:
        raise ConfigurationError("new_t_max must exceed the current horizon")
    steps = (new_t_max - spec.t_max) / spec.dt
    k = int(round(steps))
    if k < 1 or abs(steps - k) > 1e-9 * max(1.0, abs(steps)):
        raise ConfigurationError(
            f"new_t_max must extend the lattice by whole dt steps, got {new_t_max}"
        )
    rng = np.random.Generator(np.random.Philox(key=np.zeros(2, dtype=np.uint64)))
    rng.bit_generator.state = grid.rng_state
    increments = rng.standard_normal((k, spec.nx))
    increments *= np.sqrt(spec.dt * spec.dx)
    values = np.empty((spec.nt + 1 + k, spec.nx + 1))
    values[: spec.nt + 1] = grid.values
    values[spec.nt + 1 :] = _accumulate(increments, grid.values[spec.nt])
    new_spec = GridSpec(
        t_max=spec.t_max + k * spec.dt, x_max=spec.x_max, nt=spec.nt + k, nx=spec.nx
    )
    return SheetGrid(
        spec=new_spec,
        values=values,
        seed=grid.seed,
        substream=grid.substream,
        rng_state=rng.bit_generator.state,
    )
