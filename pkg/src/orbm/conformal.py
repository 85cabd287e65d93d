"""Quadrant -> wedge -> strip conformal maps, the harmonic function h, and path transport.

``F(z) = exp(i (pi/2 - theta1)) z**alpha`` sends the x axis to the ray at
angle ``pi/2 - theta1`` and the y axis to the ray at ``pi/2 + theta2``;
``log`` then sends the wedge to the strip ``pi/2 - theta1 <= y <= pi/2 + theta2``.
``h = Im F`` is positive harmonic on the quadrant with ``grad h . v = 0`` on
both faces.
"""

from __future__ import annotations

import enum
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

HALF_PI = math.pi / 2


class OriginWarning(UserWarning):
    pass


class OriginGuardError(RuntimeError):
    def __init__(self, index, partial):
        super().__init__(f"trajectory enters the origin guard at index {index}")
        self.index = index
        self.partial = partial


@dataclass(frozen=True)
class MapSpec:
    theta1: float
    theta2: float

    @property
    def alpha(self) -> float:
        return (self.theta1 + self.theta2) / HALF_PI

    @property
    def lower_edge_angle(self) -> float:
        """Angle of the image of the x axis."""
        return HALF_PI - self.theta1

    @property
    def upper_edge_angle(self) -> float:
        """Angle of the image of the y axis: ``(pi/2 - theta1) + (theta1 + theta2)``."""
        return self.lower_edge_angle + (self.theta1 + self.theta2)

    @classmethod
    def from_params(cls, p) -> "MapSpec":
        return cls(p.theta1, p.theta2)


def _polar(z):
    z = np.asarray(z, dtype=float)
    x, y = z[..., 0], z[..., 1]
    return np.hypot(x, y), np.arctan2(y, x)


def _cart(r, phi):
    return np.stack((r * np.cos(phi), r * np.sin(phi)), axis=-1)


def to_wedge(z, m: MapSpec) -> np.ndarray:
    """``F(z)`` for points of the closed quadrant (arg taken in [0, pi/2])."""
    r, theta = _polar(z)
    if np.any(r == 0.0):
        warnings.warn("origin maps to the wedge tip", OriginWarning, stacklevel=2)
    return _cart(r**m.alpha, m.lower_edge_angle + m.alpha * theta)


def from_wedge(w, m: MapSpec) -> np.ndarray:
    rho, phi = _polar(w)
    if np.any(rho == 0.0):
        warnings.warn("wedge tip maps to the origin", OriginWarning, stacklevel=2)
    theta = (phi - m.lower_edge_angle) / m.alpha
    return _cart(rho ** (1.0 / m.alpha), theta)


def to_strip(z, m: MapSpec) -> np.ndarray:
    """``log F(z)``: horizontal coordinate ``alpha log r``, vertical the wedge angle."""
    r, theta = _polar(z)
    if np.any(r == 0.0):
        raise ValueError("log F is undefined at the origin")
    return np.stack((m.alpha * np.log(r), m.lower_edge_angle + m.alpha * theta), axis=-1)


def from_strip(s, m: MapSpec) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    rho = np.exp(s[..., 0])
    return from_wedge(_cart(rho, s[..., 1]), m)


def h_value(z, m: MapSpec):
    """``h(r e^{i theta}) = r**alpha cos(alpha theta - theta1)``."""
    r, theta = _polar(z)
    return r**m.alpha * np.cos(m.alpha * theta - m.theta1)


def h_gradient(z, m: MapSpec) -> np.ndarray:
    """``grad h = alpha r**(alpha-1) (cos((alpha-1) theta - theta1), sin((1-alpha) theta + theta1))``."""
    r, theta = _polar(z)
    if np.any(r == 0.0):
        raise ValueError("grad h is undefined at the origin")
    a = m.alpha
    scale = a * r ** (a - 1.0)
    return np.stack(
        (scale * np.cos((a - 1.0) * theta - m.theta1), scale * np.sin((1.0 - a) * theta + m.theta1)),
        axis=-1,
    )


def h_log_gradient(z, m: MapSpec) -> np.ndarray:
    """Doob h-transform drift ``grad h / h``."""
    r, theta = _polar(z)
    if np.any(r == 0.0):
        raise ValueError("grad h / h is undefined at the origin")
    a = m.alpha
    scale = a / (r * np.cos(a * theta - m.theta1))
    return np.stack(
        (scale * np.cos((a - 1.0) * theta - m.theta1), scale * np.sin((1.0 - a) * theta + m.theta1)),
        axis=-1,
    )


def wedge_point_on_level(level: float, m: MapSpec, fraction: float = 0.5) -> np.ndarray:
    """Quadrant point with ``h = level`` whose wedge image sits at ``fraction`` of the opening."""
    phi = m.lower_edge_angle + fraction * (m.upper_edge_angle - m.lower_edge_angle)
    w = np.array([level / math.tan(phi), level])
    return from_wedge(w, m)


def log_gradient_bound(m: MapSpec) -> float:
    """Closed-form ``c2`` in ``|grad h| / h <= c2 / |z|``: ``alpha / min(cos theta1, cos theta2)``.

    ``alpha theta - theta1`` sweeps ``[-theta1, theta2]`` as theta goes over
    ``[0, pi/2]``, so the cosine is smallest at an end of that range.
    """
    return m.alpha / min(math.cos(m.theta1), math.cos(m.theta2))


def calibrate_log_gradient_bound(m: MapSpec, radii=None, n_angles: int = 257) -> float:
    if radii is None:
        radii = np.geomspace(1e-3, 1e3, 25)
    theta = np.linspace(0.0, HALF_PI, n_angles)
    rr, tt = np.meshgrid(radii, theta)
    z = _cart(rr.ravel(), tt.ravel())
    g = np.linalg.norm(h_gradient(z, m), axis=-1)
    return float(np.max(g * rr.ravel() / h_value(z, m)))


def discrete_laplacian(f, z, step: float) -> np.ndarray:
    """Five-point Laplacian of ``f`` at points ``z`` with spacing ``step``."""
    z = np.asarray(z, dtype=float)
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    return (f(z + ex) + f(z - ex) + f(z + ey) + f(z - ey) - 4.0 * f(z)) / step**2


class Target(str, enum.Enum):
    WEDGE = "wedge"
    STRIP = "strip"


@dataclass
class TransportedPath:
    t_original: np.ndarray
    t_new: np.ndarray
    states: np.ndarray
    target: Target

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("t_original,t_new,x,y\n")
        np.savetxt(buf, np.column_stack((self.t_original, self.t_new, self.states)),
                   delimiter=",", fmt="%.17g")
        return buf.getvalue()

    def resample(self, dt_new: float) -> tuple[np.ndarray, np.ndarray]:
        """States linearly interpolated onto a uniform grid of the new clock.

        Approximate: points between grid nodes are not on the true path.
        """
        grid = np.arange(0.0, self.t_new[-1] + 0.5 * dt_new, dt_new)
        grid = grid[grid <= self.t_new[-1]]
        xs = np.interp(grid, self.t_new, self.states[:, 0])
        ys = np.interp(grid, self.t_new, self.states[:, 1])
        return grid, np.column_stack((xs, ys))


def clock_rate(z, m: MapSpec, target: Target) -> np.ndarray:
    """``|F'(z)|**2`` for the wedge, ``|(log F)'(z)|**2 = alpha**2 / |z|**2`` for the strip."""
    r, _ = _polar(z)
    if target is Target.WEDGE:
        return m.alpha**2 * r ** (2.0 * m.alpha - 2.0)
    return m.alpha**2 / r**2


def transport(t, states, m: MapSpec, target: Target | str, guard_radius: float = 0.0) -> TransportedPath:
    """Map a quadrant path to the wedge or strip with its time-changed clock.

    The new clock is the trapezoidal integral of :func:`clock_rate` on the
    original grid. Raises :class:`OriginGuardError` (carrying the transported
    prefix) at the first state within ``guard_radius`` of the origin.
    """
    target = Target(target)
    t = np.asarray(t, dtype=float)
    states = np.asarray(states, dtype=float)
    if np.any(states < 0.0):
        raise ValueError("transport accepts points of the closed quadrant only")
    r = np.hypot(states[:, 0], states[:, 1])
    bad = np.flatnonzero(r <= guard_radius)
    stop = bad[0] if len(bad) else len(t)
    rate = clock_rate(states[:stop], m, target)
    clock = np.concatenate(([0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t[:stop]))))
    mapped = to_wedge(states[:stop], m) if target is Target.WEDGE else to_strip(states[:stop], m)
    out = TransportedPath(t[:stop], clock, mapped, target)
    if len(bad):
        raise OriginGuardError(int(stop), out)
    return out
