"""Discretized Skorokhod map with a two-face complementarity step.

Both supported domains have axis-aligned faces, so a face is described by
``(axis, offset, sign)``: the state ``p`` is admissible for the face when
``sign * (p[axis] - offset) >= 0``. The push vector of every face has normal
component 1. One step from ``p`` with displacement ``d`` solves

    q = normal coordinates of w = p + d
    r = q + M @ l  >= 0,   l >= 0,   l_i * r_i = 0

with ``M[i, j]`` the normal component on face ``i`` of the push of face ``j``.
The four activity patterns are enumerated in closed form; for a P-matrix
``M`` exactly one is feasible.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

FACE_TOL = 1e-12


class Domain(str, enum.Enum):
    QUADRANT = "quadrant"
    STRIP = "strip"


class Pattern(enum.IntEnum):
    INTERIOR = 0
    LOWER_ONLY = 1
    UPPER_ONLY = 2
    CORNER = 3


class InvalidSpecError(ValueError):
    pass


class LcpError(RuntimeError):
    """No complementarity pattern is feasible."""

    def __init__(self, message, residuals=None, step=None):
        super().__init__(message)
        self.residuals = residuals
        self.step = step


@dataclass(frozen=True)
class ReflectionSpec:
    """Domain plus push directions on the lower (d) and upper (u) faces.

    Quadrant: lower face is the x axis (``y >= 0``), upper face the y axis
    (``x >= 0``). Strip: ``y_lo <= y <= y_hi``.
    """

    domain: Domain
    v_lower: tuple[float, float]
    v_upper: tuple[float, float]
    y_lo: float = 0.0
    y_hi: float = 0.0
    theta1: float | None = None
    theta2: float | None = None
    faces: tuple = field(init=False, repr=False, compare=False)
    matrix: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.domain is Domain.QUADRANT:
            faces = ((1, 0.0, 1.0), (0, 0.0, 1.0))
        else:
            if not self.y_lo < self.y_hi:
                raise InvalidSpecError(f"strip needs y_lo < y_hi, got {self.y_lo}, {self.y_hi}")
            faces = ((1, self.y_lo, 1.0), (1, self.y_hi, -1.0))
        pushes = (self.v_lower, self.v_upper)
        m = tuple(
            tuple(faces[i][2] * pushes[j][faces[i][0]] for j in range(2)) for i in range(2)
        )
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "matrix", m)
        for i in range(2):
            if m[i][i] != 1.0:
                raise InvalidSpecError(f"push on face {i} must have normal component 1, got {m[i][i]}")
        if self.domain is Domain.QUADRANT:
            a1, a2 = -m[1][0], -m[0][1]
            if a1 > 0 and a2 > 0 and a1 * a2 >= 1.0:
                raise InvalidSpecError(
                    f"reflection matrix not completely-S (a1={a1}, a2={a2}, beta={a1 * a2} >= 1)"
                )
            if 1.0 - m[0][1] * m[1][0] <= 0.0:
                raise InvalidSpecError(
                    f"reflection matrix is not a P-matrix (a1*a2={a1 * a2} >= 1); "
                    "the one-step problem is not uniquely solvable"
                )

    @classmethod
    def quadrant(cls, a1: float, a2: float, theta1=None, theta2=None) -> "ReflectionSpec":
        return cls(Domain.QUADRANT, (-a1, 1.0), (1.0, -a2), theta1=theta1, theta2=theta2)

    @classmethod
    def from_angles(cls, theta1: float, theta2: float) -> "ReflectionSpec":
        return cls.quadrant(math.tan(theta1), math.tan(theta2), theta1, theta2)

    @classmethod
    def strip(cls, theta1: float, theta2: float) -> "ReflectionSpec":
        """Image strip ``pi/2 - theta1 <= y <= pi/2 + theta2`` of the quadrant."""
        return cls(
            Domain.STRIP,
            (-math.tan(theta1), 1.0),
            (-math.tan(theta2), -1.0),
            y_lo=math.pi / 2 - theta1,
            y_hi=math.pi / 2 + theta2,
            theta1=theta1,
            theta2=theta2,
        )

    @property
    def a1(self) -> float:
        return -self.v_lower[0]

    @property
    def a2(self) -> float:
        return -self.v_upper[1] if self.domain is Domain.QUADRANT else -self.v_upper[0]

    def normal_coords(self, x: float, y: float) -> tuple[float, float]:
        p = (x, y)
        (ax_l, c_l, s_l), (ax_u, c_u, s_u) = self.faces
        return s_l * (p[ax_l] - c_l), s_u * (p[ax_u] - c_u)

    def contains(self, x: float, y: float, tol: float = FACE_TOL) -> bool:
        ql, qu = self.normal_coords(x, y)
        return ql >= -tol and qu >= -tol


@dataclass(frozen=True)
class LcpStep:
    pre_state: tuple[float, float]
    displacement: tuple[float, float]
    post_state: tuple[float, float]
    dm_lower: float
    dm_upper: float
    pattern: Pattern


def _candidates(ql, qu, m):
    """Local-time pairs for the four patterns, each with its residual pair."""
    (_, mlu), (mul, _) = m
    out = [(0.0, 0.0, ql, qu)]
    ll = -ql
    out.append((ll, 0.0, 0.0, qu + mul * ll))
    lu = -qu
    out.append((0.0, lu, ql + mlu * lu, 0.0))
    det = 1.0 - mlu * mul
    if det != 0.0:
        ll = (-ql + mlu * qu) / det
        lu = (-qu + mul * ql) / det
        out.append((ll, lu, 0.0, 0.0))
    else:
        out.append((math.nan, math.nan, math.nan, math.nan))
    return out


def feasible_patterns(state, displacement, spec: ReflectionSpec, tol: float = 1e-10) -> list[Pattern]:
    """Every pattern whose local times and residuals are nonnegative within ``tol``."""
    wx = state[0] + displacement[0]
    wy = state[1] + displacement[1]
    ql, qu = spec.normal_coords(wx, wy)
    found = []
    for pat, (ll, lu, rl, ru) in zip(Pattern, _candidates(ql, qu, spec.matrix)):
        if pat is Pattern.INTERIOR:
            ok = rl >= -tol and ru >= -tol
        elif pat is Pattern.LOWER_ONLY:
            ok = ll > tol and ru >= -tol
        elif pat is Pattern.UPPER_ONLY:
            ok = lu > tol and rl >= -tol
        else:
            ok = ll > tol and lu > tol
        if ok:
            found.append(pat)
    return found


def _snap(spec: ReflectionSpec, x: float, y: float, lower: bool, upper: bool):
    p = [x, y]
    if lower:
        ax, c, _ = spec.faces[0]
        p[ax] = c
    if upper:
        ax, c, _ = spec.faces[1]
        p[ax] = c
    return p[0], p[1]


def _step(px, py, dx, dy, spec: ReflectionSpec):
    """Scalar kernel: returns ``(x, y, dl, du, pattern)``."""
    wx = px + dx
    wy = py + dy
    (ax_l, c_l, s_l), (ax_u, c_u, s_u) = spec.faces
    ql = s_l * ((wx, wy)[ax_l] - c_l)
    qu = s_u * ((wx, wy)[ax_u] - c_u)
    if ql >= 0.0 and qu >= 0.0:
        return wx, wy, 0.0, 0.0, Pattern.INTERIOR
    (vlx, vly), (vux, vuy) = spec.v_lower, spec.v_upper
    (_, mlu), (mul, _) = spec.matrix
    if ql < 0.0:
        ll = -ql
        if qu + mul * ll >= 0.0:
            x, y = _snap(spec, wx + ll * vlx, wy + ll * vly, True, False)
            return x, y, ll, 0.0, Pattern.LOWER_ONLY
    if qu < 0.0:
        lu = -qu
        if ql + mlu * lu >= 0.0:
            x, y = _snap(spec, wx + lu * vux, wy + lu * vuy, False, True)
            return x, y, 0.0, lu, Pattern.UPPER_ONLY
    det = 1.0 - mlu * mul
    if det != 0.0:
        ll = (-ql + mlu * qu) / det
        lu = (-qu + mul * ql) / det
        if ll >= 0.0 and lu >= 0.0:
            x, y = _snap(spec, wx + ll * vlx + lu * vux, wy + ll * vly + lu * vuy, True, True)
            return x, y, ll, lu, Pattern.CORNER
    return _step_tolerant(px, py, dx, dy, spec, ql, qu)


def _step_tolerant(px, py, dx, dy, spec, ql, qu):
    # Rounding can push every pattern a hair infeasible; take the least violated one.
    wx, wy = px + dx, py + dy
    scale = 1e-10 * (1.0 + abs(wx) + abs(wy))
    best, best_violation = None, math.inf
    cands = _candidates(ql, qu, spec.matrix)
    for pat, (ll, lu, rl, ru) in zip(Pattern, cands):
        if math.isnan(ll):
            continue
        violation = max(0.0, -ll, -lu, -rl, -ru)
        if violation < best_violation:
            best, best_violation = pat, violation
    if best is None or best_violation > scale:
        residuals = {pat.name: cands[pat][:4] for pat in Pattern}
        raise LcpError(
            f"no feasible complementarity pattern at state ({px}, {py}) + ({dx}, {dy})",
            residuals=residuals,
        )
    ll, lu, _, _ = cands[best]
    ll, lu = max(ll, 0.0), max(lu, 0.0)
    (vlx, vly), (vux, vuy) = spec.v_lower, spec.v_upper
    x, y = _snap(spec, wx + ll * vlx + lu * vux, wy + ll * vly + lu * vuy, ll > 0.0, lu > 0.0)
    return x, y, ll, lu, best


def one_step_reflect(state, displacement, spec: ReflectionSpec) -> LcpStep:
    """Resolve one displacement from ``state`` into the closed domain.

    Examples
    --------
    >>> spec = ReflectionSpec.quadrant(1.0, -1.0)
    >>> step = one_step_reflect((0.5, 0.1), (0.0, -0.3), spec)
    >>> step.pattern.name, round(step.dm_lower, 12), [round(v, 12) for v in step.post_state]
    ('LOWER_ONLY', 0.2, [0.3, 0.0])
    """
    px, py = float(state[0]), float(state[1])
    dx, dy = float(displacement[0]), float(displacement[1])
    if not spec.contains(px, py):
        raise ValueError(f"state ({px}, {py}) is outside the domain")
    x, y, dl, du, pat = _step(px, py, dx, dy, spec)
    return LcpStep((px, py), (dx, dy), (x, y), dl, du, pat)


def reflect_batch(states: np.ndarray, disps: np.ndarray, spec: ReflectionSpec):
    """Vectorized step over ``(n, 2)`` arrays; returns ``(post, dl, du)``.

    Uses the same arithmetic as the scalar kernel, so a row of the batch is
    bitwise equal to :func:`one_step_reflect` on that row.
    """
    wx = states[:, 0] + disps[:, 0]
    wy = states[:, 1] + disps[:, 1]
    w = (wx, wy)
    (ax_l, c_l, s_l), (ax_u, c_u, s_u) = spec.faces
    ql = s_l * (w[ax_l] - c_l)
    qu = s_u * (w[ax_u] - c_u)
    (vlx, vly), (vux, vuy) = spec.v_lower, spec.v_upper
    (_, mlu), (mul, _) = spec.matrix

    dl = np.zeros_like(wx)
    du = np.zeros_like(wx)
    x = wx.copy()
    y = wy.copy()
    done = (ql >= 0.0) & (qu >= 0.0)

    ll = -ql
    lower = ~done & (ql < 0.0) & (qu + mul * ll >= 0.0)
    dl[lower] = ll[lower]
    x[lower] = wx[lower] + ll[lower] * vlx
    y[lower] = wy[lower] + ll[lower] * vly
    done |= lower

    lu = -qu
    upper = ~done & (qu < 0.0) & (ql + mlu * lu >= 0.0)
    du[upper] = lu[upper]
    x[upper] = wx[upper] + lu[upper] * vux
    y[upper] = wy[upper] + lu[upper] * vuy
    done |= upper

    rest = ~done
    corner = np.zeros_like(rest)
    det = 1.0 - mlu * mul
    if rest.any() and det != 0.0:
        cl = (-ql + mlu * qu) / det
        cu = (-qu + mul * ql) / det
        corner = rest & (cl >= 0.0) & (cu >= 0.0)
        dl[corner] = cl[corner]
        du[corner] = cu[corner]
        x[corner] = wx[corner] + cl[corner] * vlx + cu[corner] * vux
        y[corner] = wy[corner] + cl[corner] * vly + cu[corner] * vuy
        rest &= ~corner

    on_l = lower | corner
    on_u = upper | corner
    for on, (ax, c, _) in ((on_l, spec.faces[0]), (on_u, spec.faces[1])):
        if ax == 0:
            x[on] = c
        else:
            y[on] = c
    for i in np.flatnonzero(rest):
        # rounding left every pattern a hair infeasible; the scalar kernel resolves it
        x[i], y[i], dl[i], du[i], _ = _step(states[i, 0], states[i, 1], disps[i, 0], disps[i, 1], spec)
    return np.column_stack((x, y)), dl, du


@dataclass
class ReflectedPath:
    """Reflected states with per-face cumulative local times."""

    t: np.ndarray
    states: np.ndarray
    l_lower: np.ndarray
    l_upper: np.ndarray
    patterns: np.ndarray

    @property
    def events_lower(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.l_lower) > 0.0) + 1

    @property
    def events_upper(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.l_upper) > 0.0) + 1

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("t,x,y,l_lower,l_upper\n")
        data = np.column_stack((self.t, self.states, self.l_lower, self.l_upper))
        np.savetxt(buf, data, delimiter=",", fmt="%.17g")
        return buf.getvalue()


def solve_increments(increments: np.ndarray, x0, spec: ReflectionSpec, t: np.ndarray) -> ReflectedPath:
    n = len(increments)
    states = np.empty((n + 1, 2))
    l_lower = np.zeros(n + 1)
    l_upper = np.zeros(n + 1)
    patterns = np.zeros(n + 1, dtype=np.int8)
    x, y = float(x0[0]), float(x0[1])
    if not spec.contains(x, y):
        raise ValueError(f"x0=({x}, {y}) is outside the domain")
    states[0] = x, y
    cum_l = cum_u = 0.0
    inc = increments.tolist()
    for k, (dx, dy) in enumerate(inc):
        try:
            x, y, dl, du, pat = _step(x, y, dx, dy, spec)
        except LcpError as err:
            err.step = k + 1
            raise
        cum_l += dl
        cum_u += du
        states[k + 1] = x, y
        l_lower[k + 1] = cum_l
        l_upper[k + 1] = cum_u
        patterns[k + 1] = pat
    return ReflectedPath(np.asarray(t, dtype=float), states, l_lower, l_upper, patterns)


def solve_path(driver, x0, spec: ReflectionSpec) -> ReflectedPath:
    """Reflect ``x0 + driver`` step by step on the driver's grid."""
    values = np.asarray(driver.values, dtype=float)
    if np.any(values[0] != 0.0):
        raise ValueError("driver must start at (0, 0)")
    return solve_increments(np.diff(values, axis=0), x0, spec, driver.t)


def _window_osc(points: np.ndarray):
    """Oscillation of every window, yielded for window length 1, 2, ..., n-1."""
    n = len(points)
    osc = np.zeros(n)
    for length in range(1, n):
        d = np.linalg.norm(points[length:] - points[:-length], axis=1)
        osc = np.maximum(np.maximum(osc[:-1], osc[1:]), d)
        yield osc


def oscillation_ratio(driver, path: ReflectedPath) -> float:
    """Max over windows of ``(osc(g) + osc(M)) / osc(f)``; 0 for a constant driver.

    Runs in O(n^2) time and O(n) memory.
    """
    f = np.asarray(driver.values, dtype=float)
    g = path.states
    m = np.column_stack((path.l_lower, path.l_upper))
    best = 0.0
    for of, og, om in zip(_window_osc(f), _window_osc(g), _window_osc(m)):
        ok = of > 0.0
        if ok.any():
            best = max(best, float(np.max((og[ok] + om[ok]) / of[ok])))
    return best


def calibrate_chi1(spec: ReflectionSpec, x0, n_drivers: int = 1000, n_steps: int = 128,
                   seed_base: int = 0, safety: float = 1.1) -> float:
    """Empirical oscillation constant: ``safety`` times the max ratio over seeded drivers."""
    from .drivers import brownian_driver
    from .rng import replica_seed

    worst = 0.0
    for k in range(n_drivers):
        drv = brownian_driver(replica_seed(seed_base, k), 1.0, 1.0 / n_steps)
        worst = max(worst, oscillation_ratio(drv, solve_path(drv, x0, spec)))
    return safety * worst
