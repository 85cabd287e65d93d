"""Driving paths: seeded Brownian grids and the deterministic amplification cycle."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .params import DerivedParams
from .rng import gaussian_increments

MAX_DRIVER_STEPS = 20_000_000


class DriverTooLongError(ValueError):
    pass


@dataclass
class DrivingPath:
    """Driver values on the uniform grid ``t_k = k * dt``; ``values[0] == (0, 0)``."""

    dt: float
    values: np.ndarray
    seed: int | None = None
    marks: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != 2 or len(self.values) < 2:
            raise ValueError("driver needs at least two 2D values")
        if np.any(self.values[0] != 0.0):
            raise ValueError("driver must start at (0, 0)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("t,bx,by\n")
        np.savetxt(buf, np.column_stack((self.t, self.values)), delimiter=",", fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DrivingPath":
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        if rows[0].replace(" ", "") != "t,bx,by":
            raise ValueError(f"unexpected driver header {rows[0]!r}")
        data = np.loadtxt(rows[1:], delimiter=",", ndmin=2)
        t = data[:, 0]
        dt = float(t[1])
        if t[0] != 0.0 or not np.array_equal(np.arange(len(t)) * dt, t):
            raise ValueError("driver time grid must be t_k = k * dt")
        return cls(dt, data[:, 1:])

    def subsample(self, factor: int) -> "DrivingPath":
        """Every ``factor``-th value: the same path on a grid ``factor`` times coarser."""
        return DrivingPath(self.dt * factor, self.values[::factor].copy(), self.seed)


def n_steps_for(horizon: float, dt: float) -> int:
    if not (horizon > 0 and dt > 0):
        raise ValueError("horizon and dt must be positive")
    n = math.ceil(horizon / dt - 1e-9)
    if n > MAX_DRIVER_STEPS:
        raise DriverTooLongError(f"{n} steps exceeds the cap of {MAX_DRIVER_STEPS}")
    return n


def brownian_driver(seed: int, horizon: float, dt: float) -> DrivingPath:
    """Standard planar Brownian motion sampled on ``ceil(T/dt) + 1`` grid points.

    Increments come from :func:`orbm.rng.gaussian_increments`, so the same
    ``(seed, T, dt)`` gives the same path on every platform.
    """
    n = n_steps_for(horizon, dt)
    inc = gaussian_increments(seed, n, dt)
    values = np.vstack((np.zeros((1, 2)), np.cumsum(inc, axis=0)))
    return DrivingPath(dt, values, seed)


@dataclass(frozen=True)
class CycleLeg:
    name: str
    displacement: tuple[float, float]


def cycle_legs(params: DerivedParams, eta: float, margin: float | None = None,
               y0: float = 1.0, n_cycles: int = 1) -> list[CycleLeg]:
    """Straight legs that drive a pair through ``n_cycles`` amplification cycles.

    The pair starts on the line ``y = y0`` at ``x = 0`` and ``x = eta``
    (requires ``a1 > 0 > a2``). Per cycle, with horizontal gap ``g``:

    * lift (cycles after the first): up by ``y0``;
    * left by ``x_left + g + margin``: the left path absorbs ``g + margin`` of
      y-axis local time, the right one ``margin``, leaving both on the y axis
      a vertical distance ``|a2| g`` apart;
    * right by ``a1 (|a2| g + margin) + margin``: clears the y axis;
    * down by ``y_low + |a2| g + margin``: the lower path absorbs
      ``|a2| g + margin`` of x-axis local time and is pushed left by
      ``a1`` per unit, so both end on the x axis ``beta g`` apart.
    """
    a1, a2 = params.a1, params.a2
    if not (a1 > 0.0 > a2):
        raise ValueError("cycle geometry needs a1 > 0 > a2; mirror the axes otherwise")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if margin is None:
        margin = 0.1 * eta if eta > 0 else 0.01
    b2 = -a2
    legs = []
    gap, x_left, y = eta, 0.0, y0
    for k in range(n_cycles):
        if k > 0:
            legs.append(CycleLeg(f"lift{k}", (0.0, y0)))
            y = y0
        legs.append(CycleLeg(f"left{k}", (-(x_left + gap + margin), 0.0)))
        y_low = y + b2 * margin
        shift = a1 * (b2 * gap + margin) + margin
        legs.append(CycleLeg(f"right{k}", (shift, 0.0)))
        legs.append(CycleLeg(f"down{k}", (0.0, -(y_low + b2 * gap + margin))))
        gap, x_left = a1 * b2 * gap, margin
    return legs


def cycle_driver(params: DerivedParams, eta: float, margin: float | None = None, *,
                 y0: float = 1.0, n_cycles: int = 1, dt: float | None = None,
                 legs: list[CycleLeg] | None = None) -> DrivingPath:
    """Piecewise-linear driver for :func:`cycle_legs` on a uniform grid.

    Each leg is split into ``max(1, ceil(length / dt))`` equal steps; leg end
    indices are recorded in ``marks``. ``dt`` defaults to 1/4096 of the total
    path length. Exactness does not depend on ``dt``: every leg moves each
    path along a single face at most, where one step of the complementarity
    solve is already exact.
    """
    if legs is None:
        legs = cycle_legs(params, eta, margin, y0, n_cycles)
    lengths = [math.hypot(*leg.displacement) for leg in legs]
    if dt is None:
        dt = sum(lengths) / 4096.0
    counts = [max(1, math.ceil(length / dt - 1e-9)) for length in lengths]
    if sum(counts) > MAX_DRIVER_STEPS:
        raise DriverTooLongError(f"{sum(counts)} steps exceeds the cap of {MAX_DRIVER_STEPS}")
    chunks = [np.zeros((1, 2))]
    marks = {}
    end = np.zeros(2)
    idx = 0
    for leg, n in zip(legs, counts):
        frac = (np.arange(1, n + 1) / n)[:, None]
        chunks.append(end + frac * np.asarray(leg.displacement))
        end = chunks[-1][-1].copy()
        idx += n
        marks[leg.name] = idx
    return DrivingPath(dt, np.vstack(chunks), None, marks)
