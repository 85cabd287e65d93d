"""Two reflected solutions off one driver: gap series, alignment stages and cycle factors.

A stage is a pair of face contacts: one path makes a new contact with a
face, then the other path reaches the same face. While only one path is
pushed, the gap moves along that face's push vector, so a gap that was
perpendicular to the face before the first contact ends parallel to it,
scaled by ``|a1|`` on the x axis and ``|a2|`` on the y axis. A cycle is a
y-axis stage followed by an x-axis stage, with factor ``beta``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .drivers import brownian_driver
from .reflect_core import Domain, ReflectedPath, ReflectionSpec, solve_path
from .sim import DriftKind, DriftSpec, McReport, report_from_values, simulate

ANGLE_TOL = 1e-6
LOWER, UPPER = "lower", "upper"


@dataclass(frozen=True)
class ContactEvent:
    step: int
    path: int  # 0 for X, 1 for Y
    face: str  # "lower", "upper" or "corner"


@dataclass
class Stage:
    face: str
    first: int
    k1: int
    k2: int
    factor: float
    conforming: bool
    orientation_ok: bool

    def as_dict(self) -> dict:
        return {"face": self.face, "first_path": "XY"[self.first], "k1": self.k1, "k2": self.k2,
                "factor": self.factor, "conforming": self.conforming,
                "orientation_ok": self.orientation_ok}


@dataclass
class CouplingReport:
    t: np.ndarray
    gap: np.ndarray
    events: list
    stages: list
    cycle_factors: list
    breaks: list
    attempts: int
    x_path: ReflectedPath | None = field(default=None, repr=False)
    y_path: ReflectedPath | None = field(default=None, repr=False)

    @property
    def factors(self) -> list:
        return [s.factor for s in self.stages if s.conforming]

    @property
    def cycle_factor(self) -> float | None:
        """Product of the measured cycle factors; None when no cycle was realized."""
        if not self.cycle_factors:
            return None
        return math.prod(self.cycle_factors)

    @property
    def pattern_break_rate(self) -> float:
        if self.attempts == 0:
            return 0.0
        return 1.0 - len(self.cycle_factors) / self.attempts

    @property
    def orientation_ok(self) -> bool:
        return all(s.orientation_ok for s in self.stages if s.conforming)

    def gap_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("t,gx,gy\n")
        np.savetxt(buf, np.column_stack((self.t, self.gap)), delimiter=",", fmt="%.17g")
        return buf.getvalue()

    def to_dict(self, gap_csv_path: str | None = None) -> dict:
        return {
            "gap_csv_path": gap_csv_path,
            "stage_events": [s.as_dict() for s in self.stages],
            "factors": self.factors,
            "cycle_factor": self.cycle_factor,
            "cycle_factors": self.cycle_factors,
            "pattern_breaks": self.breaks,
            "pattern_break_rate": self.pattern_break_rate,
            "orientation_ok": self.orientation_ok,
        }

    def to_json(self, gap_csv_path: str | None = None) -> str:
        return json.dumps(self.to_dict(gap_csv_path), indent=2, sort_keys=True)


def contact_events(path: ReflectedPath, which: int) -> list[ContactEvent]:
    """New face contacts of one path: a push on a face other than the last one touched."""
    push_l = np.diff(path.l_lower) > 0.0
    push_u = np.diff(path.l_upper) > 0.0
    events = []
    last = None
    for k in np.flatnonzero(push_l | push_u):
        face = "corner" if push_l[k] and push_u[k] else LOWER if push_l[k] else UPPER
        if face != last:
            events.append(ContactEvent(int(k) + 1, which, face))
            last = face
    return events


def _angle_to(v, axis: int) -> float:
    """Angle between ``v`` and the coordinate axis ``axis`` (0 when aligned)."""
    n = math.hypot(v[0], v[1])
    if n == 0.0:
        return math.inf
    return math.asin(min(1.0, abs(v[1 - axis]) / n))


def _parallel(v, face: str) -> bool:
    # x axis (lower) is horizontal, y axis (upper) vertical
    return _angle_to(v, 0 if face == LOWER else 1) <= ANGLE_TOL


def _perpendicular(v, face: str) -> bool:
    return _angle_to(v, 1 if face == LOWER else 0) <= ANGLE_TOL


def _orientation(gap, face: str, first: int, a1: float, a2: float) -> bool:
    """Sign pattern at alignment: on the x axis the first hitter is to the left
    iff ``a1 > 0``; on the y axis it is above iff ``a2 < 0``."""
    # gap = X - Y; first-hitter coordinate minus the other one's
    d = gap if first == 0 else (-gap[0], -gap[1])
    if face == LOWER:
        return (d[0] < 0.0) == (a1 > 0.0)
    return (d[1] > 0.0) == (a2 < 0.0)


def parse_stages(events: list[ContactEvent], gap: np.ndarray, a1: float, a2: float, pushes=None):
    """Pair merged contact events into stages; returns ``(stages, breaks)``.

    A break is a corner contact, or a contact that does not complete the
    pending stage (same path again, or another face). Both paths may make
    the contact within one step (the gap is smaller than a step): the stage
    is then realized inside the step, and the first hitter is the path with
    the larger push, read from ``pushes[(path, face)]`` (per-step local-time
    increments). A simultaneous contact with a gap already parallel to the
    face before the step is neutral.
    """
    merged = sorted(events, key=lambda e: (e.step, e.path))
    stages, breaks = [], []
    pending = None
    for e in merged:
        if e.face == "corner":
            breaks.append({"step": e.step, "reason": "corner"})
            pending = None
            continue
        if pending is None:
            pending = e
            continue
        if e.face != pending.face or e.path == pending.path:
            breaks.append({"step": e.step, "reason": "out_of_order"})
            pending = e
            continue
        k1, k2 = pending.step, e.step
        before, after = gap[k1 - 1], gap[k2]
        pending_path = pending.path
        pending = None
        if k1 == k2:
            if _parallel(before, e.face) and _parallel(after, e.face):
                continue
            if not _perpendicular(before, e.face) or pushes is None:
                breaks.append({"step": k2, "reason": "simultaneous"})
                continue
            d0, d1 = pushes[(0, e.face)][k1 - 1], pushes[(1, e.face)][k1 - 1]
            pending_path = 0 if d0 >= d1 else 1
        n_before = math.hypot(*before)
        factor = math.hypot(*after) / n_before if n_before > 0.0 else math.nan
        conforming = _perpendicular(before, e.face) and _parallel(after, e.face)
        stages.append(Stage(e.face, pending_path, k1, k2, factor, conforming,
                            bool(_orientation(after, e.face, pending_path, a1, a2))))
    return stages, breaks


def _cycles(stages: list[Stage], breaks: list[dict]):
    """Conforming cycles (y-axis stage then x-axis stage) and the number of attempts."""
    items = [(s.k1, 0, s) for s in stages] + [(b["step"], 1, b) for b in breaks]
    items.sort(key=lambda it: (it[0], it[1]))
    factors, attempts = [], 0
    i = 0
    while i < len(items):
        _, kind, obj = items[i]
        if kind == 0 and obj.face == UPPER:
            attempts += 1
            nxt = items[i + 1] if i + 1 < len(items) else None
            if (obj.conforming and nxt is not None and nxt[1] == 0
                    and nxt[2].face == LOWER and nxt[2].conforming and nxt[2].k1 >= obj.k2):
                d = nxt[2]
                factors.append(obj.factor * d.factor)
                i += 2
                continue
        elif kind == 1 and (i == 0 or not (items[i - 1][1] == 0 and items[i - 1][2].face == UPPER)):
            attempts += 1
        i += 1
    return factors, attempts


def run_pair(driver, x0, y0, spec: ReflectionSpec, drift: DriftSpec | None = None) -> CouplingReport:
    """Solve from ``x0`` and ``y0`` with the same driver and detect alignment stages.

    Each path takes the driver increment plus the drift at its own state.
    """
    if spec.domain is not Domain.QUADRANT:
        raise ValueError("coupling stages are defined on the quadrant")
    drift = drift or DriftSpec()
    if drift.kind is DriftKind.NONE:
        px, py = solve_path(driver, x0, spec), solve_path(driver, y0, spec)
    else:
        px = simulate(x0, spec, drift, driver=driver).path
        py = simulate(y0, spec, drift, driver=driver).path
    gap = px.states - py.states
    events = contact_events(px, 0) + contact_events(py, 1)
    pushes = {(i, face): np.diff(getattr(p, "l_" + face))
              for i, p in enumerate((px, py)) for face in (LOWER, UPPER)}
    stages, breaks = parse_stages(events, gap, spec.a1, spec.a2, pushes)
    cycles, attempts = _cycles(stages, breaks)
    return CouplingReport(px.t, gap, events, stages, cycles, breaks, attempts, px, py)


def tandem_violations(report: CouplingReport, rel_tol: float = 4.0) -> int:
    """Interior-interior steps whose gap moved by more than a few ulps."""
    px, py = report.x_path, report.y_path
    both = (px.patterns[1:] == 0) & (py.patterns[1:] == 0)
    moved = np.abs(np.diff(report.gap, axis=0))
    scale = np.maximum(np.abs(px.states[1:]) + np.abs(py.states[1:]), 1e-300)
    bad = both[:, None] & (moved > rel_tol * np.finfo(float).eps * scale)
    return int(np.any(bad, axis=1).sum())


@dataclass
class GapGrowth:
    cycle_factors: list
    log_mean: McReport | None
    pattern_break_rate: float
    attempts: int


def stochastic_gap_growth(seed: int, params, eta: float, n_cycles: int = 5, dt: float = 1e-4,
                          horizon: float = 20.0, x0=(1.0, 1.0), n_pairs: int = 1) -> GapGrowth:
    """Measured cycle factors of Brownian-driven pairs started ``eta`` apart horizontally.

    Pair ``k`` uses the driver of ``replica_seed(seed, k)`` from ``x0`` and
    ``x0 + (eta, 0)``; at most ``n_cycles`` conforming cycles are kept per
    pair. The log-mean report needs at least two measured cycles.
    """
    if not (params.a1 > 0.0 > params.a2):
        raise ValueError("gap growth needs mixed-sign parameters with a1 > 0 > a2")
    if eta == 0.0:
        return GapGrowth([], None, 0.0, 0)
    spec = ReflectionSpec.from_angles(params.theta1, params.theta2)
    factors, attempts, broken = [], 0, 0
    for k in range(n_pairs):
        drv = brownian_driver(rng.replica_seed(seed, k), horizon, dt)
        rep = run_pair(drv, x0, (x0[0] + eta, x0[1]), spec)
        kept = rep.cycle_factors[:n_cycles]
        factors.extend(kept)
        attempts += rep.attempts
        broken += rep.attempts - len(rep.cycle_factors)
    log_mean = None
    if len(factors) >= 2:
        log_mean = report_from_values(np.log(factors), seed, {"cycles": len(factors)})
    rate = broken / attempts if attempts else 0.0
    return GapGrowth(factors, log_mean, rate, attempts)


def refinement_distances(spec: ReflectionSpec, x0, seed: int, dt: float = 1e-3,
                         horizon: float = 1.0, levels: int = 4) -> list[float]:
    """Sup distances between solutions on grids ``dt, dt/2, ...`` of one Brownian driver.

    The finest driver is sampled once; coarser grids are its subsamples, and
    each distance is taken at the coarser grid's times. A single path's
    distances are noisy; see :func:`mean_refinement_distances`.
    """
    fine = brownian_driver(seed, horizon, dt / 2 ** (levels - 1))
    paths = [solve_path(fine.subsample(2 ** (levels - 1 - i)), x0, spec) for i in range(levels)]
    out = []
    for coarse, finer in zip(paths[:-1], paths[1:]):
        diff = coarse.states - finer.states[::2][: len(coarse.states)]
        out.append(float(np.max(np.hypot(diff[:, 0], diff[:, 1]))))
    return out


def mean_refinement_distances(spec: ReflectionSpec, x0, seed_base: int = 0, n_drivers: int = 32,
                              dt: float = 1e-3, horizon: float = 1.0, levels: int = 4) -> list[float]:
    """Average of :func:`refinement_distances` over drivers ``replica_seed(seed_base, k)``."""
    rows = [refinement_distances(spec, x0, rng.replica_seed(seed_base, k), dt, horizon, levels)
            for k in range(n_drivers)]
    return [math.fsum(col) / n_drivers for col in zip(*rows)]
