"""Drifted reflected simulation, face-hit bookkeeping and the Monte Carlo harness.

Every engine advances with the same Euler step: displacement = driver
increment + capped drift * dt, then one complementarity step. Replica ``k``
of a run keyed by ``seed_base`` draws its increments from
``replica_seed(seed_base, k)``, so per-replica output does not depend on
how replicas are batched or split across workers.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .conformal import MapSpec, h_log_gradient, h_value
from .drivers import n_steps_for
from .reflect_core import Domain, ReflectedPath, ReflectionSpec, reflect_batch

# continuity correction for discretely monitored barriers: -zeta(1/2) / sqrt(2 pi)
BARRIER_SHIFT = 0.5825971579390106


class DriftKind(str, enum.Enum):
    NONE = "None"
    HTRANSFORM = "HTransform"
    STRIP_CONDITIONED = "StripConditioned"


@dataclass(frozen=True)
class DriftSpec:
    kind: DriftKind = DriftKind.NONE
    theta1: float | None = None
    theta2: float | None = None

    @classmethod
    def h_transform(cls, theta1: float, theta2: float) -> "DriftSpec":
        return cls(DriftKind.HTRANSFORM, theta1, theta2)

    @classmethod
    def strip_conditioned(cls) -> "DriftSpec":
        return cls(DriftKind.STRIP_CONDITIONED)

    def evaluate(self, states: np.ndarray) -> np.ndarray:
        """Drift at each row of ``states``."""
        if self.kind is DriftKind.NONE:
            return np.zeros_like(states)
        if self.kind is DriftKind.HTRANSFORM:
            return h_log_gradient(states, MapSpec(self.theta1, self.theta2))
        y = states[:, 1]
        return np.column_stack((np.ones_like(y), np.cos(y) / np.sin(y)))


def drift_cap(dt: float) -> float:
    return 1.0 / (10.0 * math.sqrt(dt))


def origin_guard(dt: float) -> float:
    return 10.0 * math.sqrt(dt)


def default_band(dt: float) -> float:
    """Face band: discrete monitoring of a barrier shifted inward by 0.5826 sqrt(dt)."""
    return BARRIER_SHIFT * math.sqrt(dt)


class _Stepper:
    """One Euler step for a batch of rows.

    With ``bridge`` (strip only) the vertical driver path is refined by its
    Brownian-bridge extremum toward the nearer face, sampled from the
    uniforms passed in: the complementarity step is applied to the
    displacement to that extremum and then to the rest of the increment.
    This captures face contacts that happen strictly inside a step, which
    projection at grid points misses.
    """

    def __init__(self, spec: ReflectionSpec, drift: DriftSpec, dt: float, bridge: bool = False):
        if bridge and spec.domain is not Domain.STRIP:
            raise ValueError("bridge refinement is implemented for the strip only")
        self.spec = spec
        self.drift = drift
        self.dt = dt
        self.cap = drift_cap(dt)
        self.bridge = bridge
        self.mid = 0.5 * (spec.y_lo + spec.y_hi)

    def __call__(self, states, inc, u=None):
        if self.drift.kind is DriftKind.NONE:
            clipped = np.zeros(len(states), dtype=bool)
            disp = inc
        else:
            dr = self.drift.evaluate(states)
            clipped = np.any(np.abs(dr) > self.cap, axis=1)
            if clipped.any():
                dr = np.clip(dr, -self.cap, self.cap)
            disp = inc + dr * self.dt
        if not self.bridge:
            post, dl, du = reflect_batch(states, disp, self.spec)
            return post, dl, du, clipped
        y0 = states[:, 1]
        y1 = y0 + disp[:, 1]
        spread = np.sqrt((y1 - y0) ** 2 - 2.0 * self.dt * np.log(u))
        ext = np.where(y0 + y1 < 2.0 * self.mid, 0.5 * (y0 + y1 - spread), 0.5 * (y0 + y1 + spread))
        first = np.column_stack((np.zeros_like(y0), ext - y0))
        mid, dl1, du1 = reflect_batch(states, first, self.spec)
        rest = np.column_stack((disp[:, 0], y1 - ext))
        post, dl2, du2 = reflect_batch(mid, rest, self.spec)
        return post, dl1 + dl2, du1 + du2, clipped


def _batch_increments(keys, j, sq_dt):
    c = 2 * j
    return sq_dt * np.column_stack((rng.normals(keys, c), rng.normals(keys, c + 1)))


def replica_keys(seed_base: int, replicas, stream: int = rng.GAUSSIAN) -> np.ndarray:
    return rng.stream_keys([rng.replica_seed(seed_base, int(k)) for k in replicas], stream)


# ---------------------------------------------------------------- single paths


class StopReason(str, enum.Enum):
    HORIZON = "horizon"
    LEVEL = "level"
    ORIGIN = "origin"


@dataclass(frozen=True)
class StopRule:
    """Stop at ``horizon``, at the first h-level crossing, or inside the origin guard.

    ``origin_radius=None`` means ``10 sqrt(dt)`` under the h-transform and no
    guard otherwise.
    """

    horizon: float
    h_levels: tuple[float, float] | None = None
    origin_radius: float | None = None


@dataclass
class Trajectory:
    path: ReflectedPath
    drift: DriftSpec
    stop_reason: StopReason
    stop_time: float
    stop_value: float | None = None
    clipped_steps: int = 0
    flags: dict = field(default_factory=dict)

    def to_csv(self, header_lines=()) -> str:
        footer = f"# stop_reason={self.stop_reason.value},stop_time={self.stop_time!r}"
        if self.stop_value is not None:
            footer += f",stop_value={self.stop_value!r}"
        footer += f",clipped_steps={self.clipped_steps}\n"
        return self.path.to_csv(header_lines) + footer


def _map_spec(spec: ReflectionSpec, drift: DriftSpec) -> MapSpec:
    t1 = spec.theta1 if spec.theta1 is not None else drift.theta1
    t2 = spec.theta2 if spec.theta2 is not None else drift.theta2
    if t1 is None or t2 is None:
        raise ValueError("h levels need the reflection angles (build the ReflectionSpec with from_angles)")
    return MapSpec(t1, t2)


def simulate(x0, spec: ReflectionSpec, drift: DriftSpec | None = None, *, driver=None,
             seed: int | None = None, dt: float = 1e-4, stop: StopRule | None = None,
             clip_flag_fraction: float = 0.01, block: int = 4096, bridge: bool = False) -> Trajectory:
    """Euler-Skorokhod path from ``x0`` driven by ``driver`` or by the Brownian path of ``seed``.

    Parameters
    ----------
    x0 : pair
        Start, inside the closed domain (not the origin under the h-transform).
    spec : ReflectionSpec
    drift : DriftSpec, optional
        Defaults to no drift.
    driver : DrivingPath, optional
        Fixed driver; its grid sets ``dt`` and caps the horizon.
    seed : int, optional
        Used when no driver is given; increments are drawn lazily in blocks.
    stop : StopRule
        Required with ``seed``; defaults to the driver length otherwise.
    bridge : bool
        Strip only, seeded runs only: refine each step through the sampled
        bridge extremum of the vertical coordinate (uniforms from the
        ``BRIDGE`` stream of ``seed``, counter = step index).

    Returns
    -------
    Trajectory
        ``flags['drift_blowup']`` is set when the drift cap fired on more than
        ``clip_flag_fraction`` of the steps.
    """
    drift = drift or DriftSpec()
    if driver is not None:
        dt = driver.dt
        driver_inc = driver.increments
        if stop is None:
            stop = StopRule(horizon=len(driver_inc) * dt)
        n_max = min(len(driver_inc), n_steps_for(stop.horizon, dt))
    else:
        if seed is None:
            raise ValueError("give a driver or a seed")
        if stop is None:
            raise ValueError("a seeded run needs a stop rule")
        driver_inc = None
        n_max = n_steps_for(stop.horizon, dt)

    x = np.array([[float(x0[0]), float(x0[1])]])
    if not spec.contains(x[0, 0], x[0, 1]):
        raise ValueError(f"x0={tuple(x[0])} is outside the domain")
    radius = stop.origin_radius
    if radius is None:
        radius = origin_guard(dt) if drift.kind is DriftKind.HTRANSFORM else 0.0
    if drift.kind is DriftKind.HTRANSFORM and math.hypot(*x[0]) <= radius:
        raise ValueError("h-transform start lies inside the origin guard")
    m = None
    if stop.h_levels is not None:
        if spec.domain is not Domain.QUADRANT:
            raise ValueError("h levels apply to quadrant runs")
        m = _map_spec(spec, drift)
        lo, hi = stop.h_levels
        h_prev = float(h_value(x[0], m))
        if not lo < h_prev < hi:
            raise ValueError(f"h(x0)={h_prev} is not strictly between the levels {stop.h_levels}")

    if bridge and seed is None:
        raise ValueError("bridge refinement needs a seeded run")
    step = _Stepper(spec, drift, dt, bridge)
    bkey = np.uint64(rng.stream_key(seed, rng.BRIDGE)) if bridge else None
    states = [x[0].copy()]
    ll, lu, pats = [0.0], [0.0], [0]
    cum_l = cum_u = 0.0
    clipped = 0
    reason, stop_time, stop_value = StopReason.HORIZON, n_max * dt, None
    inc = None
    for j in range(n_max):
        if driver_inc is not None:
            d = driver_inc[j:j + 1]
        else:
            if j % block == 0:
                inc = rng.gaussian_increments(seed, min(block, n_max - j), dt, start=j)
            d = inc[j % block:j % block + 1]
        u = rng.uniforms(bkey, np.array([j])) if bridge else None
        post, dl, du, clip = step(x, d, u)
        clipped += int(clip[0])
        cum_l += float(dl[0])
        cum_u += float(du[0])
        x = post
        states.append(post[0].copy())
        ll.append(cum_l)
        lu.append(cum_u)
        pats.append(int(dl[0] > 0) + 2 * int(du[0] > 0))
        if radius > 0.0 and math.hypot(*post[0]) < radius:
            reason, stop_time = StopReason.ORIGIN, (j + 1) * dt
            break
        if m is not None:
            h_new = float(h_value(post[0], m))
            level = lo if h_new <= lo else hi if h_new >= hi else None
            if level is not None:
                frac = (h_prev - level) / (h_prev - h_new)
                reason, stop_time, stop_value = StopReason.LEVEL, (j + frac) * dt, level
                break
            h_prev = h_new
    n = len(states)
    path = ReflectedPath(np.arange(n) * dt, np.array(states), np.array(ll), np.array(lu),
                         np.array(pats, dtype=np.int8))
    flags = {"drift_blowup": clipped > clip_flag_fraction * max(n - 1, 1)}
    return Trajectory(path, drift, reason, stop_time, stop_value, clipped, flags)


# ------------------------------------------------------------ excursion stats


def face_coords(states: np.ndarray, spec: ReflectionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Distance-like coordinates to the lower and upper faces (0 on the face)."""
    (ax_l, c_l, s_l), (ax_u, c_u, s_u) = spec.faces
    return s_l * (states[:, ax_l] - c_l), s_u * (states[:, ax_u] - c_u)


def log_scale(states: np.ndarray, spec: ReflectionSpec) -> np.ndarray:
    """``log h``: ``x + log sin y`` on the strip, ``log h(z)`` on the quadrant."""
    if spec.domain is Domain.STRIP:
        return states[:, 0] + np.log(np.sin(states[:, 1]))
    return np.log(h_value(states, MapSpec(spec.theta1, spec.theta2)))


def face_hits(q_lower, q_upper, band: float, touch_lower=None, touch_upper=None):
    """Alternating first entries into the face bands, lower face first.

    ``touch_*[j]`` marks a face contact during the step ending at ``j``
    (local time grew); such a step counts as a band entry at ``j``.
    Returns ``(s_down, s_up, s_up_minus)``; ``s_up_minus[k]`` is the last
    index at or before ``s_up[k]`` inside the lower band.
    """
    n = len(q_lower)
    tl = np.zeros(n, dtype=bool) if touch_lower is None else np.asarray(touch_lower, dtype=bool)
    tu = np.zeros(n, dtype=bool) if touch_upper is None else np.asarray(touch_upper, dtype=bool)
    in_lower = ((np.asarray(q_lower) <= band) | tl).tolist()
    in_upper = ((np.asarray(q_upper) <= band) | tu).tolist()
    s_down, s_up, s_minus = [], [], []
    seek_up = False
    last_lower = -1
    for j, (in_l, in_u) in enumerate(zip(in_lower, in_upper)):
        if in_l:
            last_lower = j
        if not seek_up and in_l:
            s_down.append(j)
            seek_up = True
        if seek_up and in_u:
            s_up.append(j)
            s_minus.append(last_lower)
            seek_up = False
    as_int = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    return as_int(s_down), as_int(s_up), as_int(s_minus)


def level_passages(zeta: np.ndarray, step: float = 1.0):
    """First-passage indices of the levels ``k * step`` above the start value."""
    top = np.maximum.accumulate(zeta)
    k0 = math.floor(zeta[0] / step) + 1
    k1 = math.floor(top[-1] / step)
    levels = np.arange(k0, k1 + 1)
    idx = np.searchsorted(top, levels * step, side="left")
    return levels, idx


def window_counts(s_up, s_up_minus, passages):
    """``(N^d, N^D)`` per window ``[T_m, T_m+1)`` of consecutive passages."""
    s_up = np.asarray(s_up)
    s_up_minus = np.asarray(s_up_minus)
    n_d, n_big = [], []
    for lo, hi in zip(passages[:-1], passages[1:]):
        inside = (s_up >= lo) & (s_up < hi)
        n_big.append(int(inside.sum()))
        n_d.append(int((inside & (s_up_minus >= lo)).sum()))
    return np.array(n_d, dtype=np.int64), np.array(n_big, dtype=np.int64)


@dataclass
class ExcursionStats:
    s_down: np.ndarray
    s_up: np.ndarray
    s_up_minus: np.ndarray
    levels: np.ndarray
    passages: np.ndarray
    n_d: np.ndarray
    n_D: np.ndarray
    displacements: np.ndarray

    def alternation_holds(self) -> bool:
        d, u = self.s_down, self.s_up
        if len(u) > len(d) or len(d) > len(u) + 1:
            return False
        ok = np.all(d[:len(u)] <= u)
        if len(d) > 1:
            ok = ok and np.all(u[:len(d) - 1] <= d[1:])
        return bool(ok)


def excursion_stats(traj, spec: ReflectionSpec, band: float | None = None,
                    window: float = 1.0) -> ExcursionStats:
    """Face-hit sequences, window counts on the log scale, and per-cycle displacements.

    ``traj`` is a :class:`Trajectory` or :class:`ReflectedPath`. The band
    defaults to :func:`default_band` of the path's grid step; any step on
    which a face's local time grew also counts as an entry to that face.
    """
    path = traj.path if isinstance(traj, Trajectory) else traj
    states = path.states
    if band is None:
        band = default_band(float(path.t[1] - path.t[0])) if len(path.t) > 1 else 0.0
    ql, qu = face_coords(states, spec)
    touch_l = np.concatenate(([False], np.diff(path.l_lower) > 0.0))
    touch_u = np.concatenate(([False], np.diff(path.l_upper) > 0.0))
    s_down, s_up, s_minus = face_hits(ql, qu, band, touch_l, touch_u)
    levels, passages = level_passages(log_scale(states, spec), window)
    n_d, n_big = window_counts(s_up, s_minus, passages)
    x = states[s_down, 0]
    return ExcursionStats(s_down, s_up, s_minus, levels, passages, n_d, n_big, np.diff(x))


# ----------------------------------------------------------------- MC harness


@dataclass
class McReport:
    estimate: float
    std_error: float
    n_replicas: int
    seed_base: int
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error, "n": self.n_replicas,
                "seed_base": self.seed_base, "flags": self.flags}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def z_score(self, target: float) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.estimate == target else math.inf
        return (self.estimate - target) / self.std_error


class ReplicaFailureError(RuntimeError):
    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


def report_from_values(values, seed_base: int, flags: dict | None = None,
                       max_failure_rate: float = 0.01) -> McReport:
    """Mean and ``std / sqrt(n)`` of the finite entries; NaN marks a failed replica."""
    values = np.asarray(values, dtype=float)
    ok = np.isfinite(values)
    failures = np.flatnonzero(~ok)
    flags = dict(flags or {})
    flags["failed_replicas"] = int(len(failures))
    if len(values) and len(failures) > max_failure_rate * len(values):
        raise ReplicaFailureError(
            f"{len(failures)} of {len(values)} replicas failed (first: {failures[:10].tolist()})",
            failures.tolist(),
        )
    good = values[ok]
    n = len(good)
    if n < 2:
        raise ValueError("need at least two successful replicas")
    mean = math.fsum(good.tolist()) / n
    var = math.fsum(((good - mean) ** 2).tolist()) / (n - 1)
    return McReport(mean, math.sqrt(var / n), n, seed_base, flags)


def ratio_report(sums, counts, seed_base: int, flags: dict | None = None) -> McReport:
    """Pooled ratio ``sum(sums) / sum(counts)`` with a replica-clustered delta-method error."""
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n = len(sums)
    total = math.fsum(counts.tolist())
    if n < 2 or total == 0.0:
        raise ValueError("ratio estimate needs at least two replicas and a positive count")
    est = math.fsum(sums.tolist()) / total
    resid = sums - est * counts
    var = n / (n - 1) * math.fsum((resid**2).tolist())
    flags = dict(flags or {})
    flags["pooled_count"] = int(total)
    return McReport(est, math.sqrt(var) / total, n, seed_base, flags)


def _call_statistic(args):
    statistic, seed = args
    try:
        return float(statistic(seed))
    except Exception:  # a failed replica is recorded, not fatal
        return math.nan


def monte_carlo(statistic: Callable[[int], float], n: int, seed_base: int = 0, *,
                threads: int = 1, max_failure_rate: float = 0.01) -> McReport:
    """Run ``statistic(replica_seed(seed_base, k))`` for ``k < n`` and summarize.

    Results are aggregated in replica order with exact summation, so the
    report does not depend on ``threads``. ``statistic`` must be picklable
    when ``threads > 1``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    jobs = [(statistic, rng.replica_seed(seed_base, k)) for k in range(n)]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            values = list(pool.map(_call_statistic, jobs, chunksize=max(1, n // (4 * threads))))
    else:
        values = [_call_statistic(job) for job in jobs]
    return report_from_values(values, seed_base, max_failure_rate=max_failure_rate)


def _chunks(n: int, chunk: int):
    return [range(s, min(n, s + chunk)) for s in range(0, n, chunk)]


def fan_out(fn, n: int, threads: int = 1, chunk: int = 2048, **kwargs) -> list:
    """Apply ``fn(replicas=range, **kwargs)`` to consecutive replica ranges, in order."""
    ranges = _chunks(n, chunk)
    if threads > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(threads) as pool:
            futures = [pool.submit(fn, replicas=r, **kwargs) for r in ranges]
            return [f.result() for f in futures]
    return [fn(replicas=r, **kwargs) for r in ranges]


# ------------------------------------------------------ 1D exit probabilities


def exit_upper_batch(a: float, b: float, y0: float, replicas, seed_base: int, dt: float,
                     horizon: float = 50.0, bridge: bool = True) -> np.ndarray:
    """Indicators of ``T_b < T_a`` for ``dY = cot(Y) dt + dW`` from ``y0``; NaN if unfinished.

    The noise is the second coordinate of each replica's planar driver. With
    ``bridge`` a Brownian-bridge crossing test between grid points catches
    excursions past a level inside one step.
    """
    if not 0.0 < a < y0 < b < math.pi:
        raise ValueError("need 0 < a < y0 < b < pi")
    replicas = np.asarray(list(replicas))
    keys = replica_keys(seed_base, replicas)
    bkeys = replica_keys(seed_base, replicas, rng.BRIDGE)
    out = np.full(len(replicas), np.nan)
    active = np.arange(len(replicas))
    y = np.full(len(replicas), float(y0))
    sq = math.sqrt(dt)
    cap = drift_cap(dt)
    for j in range(n_steps_for(horizon, dt)):
        if not len(active):
            break
        z = rng.normals(keys[active], 2 * j + 1)
        drift = np.clip(np.cos(y) / np.sin(y), -cap, cap)
        y_new = y + drift * dt + sq * z
        hit_a = y_new <= a
        hit_b = y_new >= b
        if bridge:
            inside = ~(hit_a | hit_b)
            u = rng.uniforms(bkeys[active], j)
            pa = np.exp(-2.0 * (y - a) * (y_new - a) / dt)
            pb = np.exp(-2.0 * (b - y) * (b - y_new) / dt)
            hit_a |= inside & (u < pa)
            hit_b |= inside & (u >= pa) & (u < pa + pb)
        out[active[hit_a]] = 0.0
        out[active[hit_b]] = 1.0
        keep = ~(hit_a | hit_b)
        active, y = active[keep], y_new[keep]
    return out


def exit_probability_mc(a: float, b: float, y0: float, n: int, seed_base: int = 0,
                        dt: float = 1e-4, threads: int = 1, bridge: bool = True) -> McReport:
    parts = fan_out(exit_upper_batch, n, threads, chunk=16384, a=a, b=b, y0=y0,
                    seed_base=seed_base, dt=dt, bridge=bridge)
    return report_from_values(np.concatenate(parts), seed_base, {"bridge": bridge, "dt": dt})


def exit_law_mc(theta1: float, theta2: float, delta: float = 0.01, n: int = 100_000,
                seed_base: int = 0, dt: float = 1e-4, threads: int = 1) -> McReport:
    """``delta**-1 P(hit b before a | start a + delta)`` on the strip's vertical diffusion."""
    a, b = math.pi / 2 - theta1, math.pi / 2 + theta2
    rep = exit_probability_mc(a, b, a + delta, n, seed_base, dt, threads)
    flags = dict(rep.flags, delta=delta, probability=rep.estimate)
    return McReport(rep.estimate / delta, rep.std_error / delta, rep.n_replicas, seed_base, flags)


# ------------------------------------------------- quadrant level-stopped runs


@dataclass
class LevelBatch:
    replicas: np.ndarray
    reason: np.ndarray  # 0 horizon, 1 level, 2 origin
    stop_value: np.ndarray
    stop_time: np.ndarray
    clipped: np.ndarray

    @classmethod
    def merge(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("replicas", "reason", "stop_value", "stop_time", "clipped")))


def level_batch(theta1: float, theta2: float, drift_kind: DriftKind | str, x0, levels,
                replicas, seed_base: int, dt: float, horizon: float,
                guard: float | None = None) -> LevelBatch:
    """Quadrant replicas from ``x0`` stopped when ``h`` leaves ``(lo, hi)``.

    Row ``i`` matches :func:`simulate` with ``seed=replica_seed(seed_base, k_i)``.
    """
    drift_kind = DriftKind(drift_kind)
    spec = ReflectionSpec.from_angles(theta1, theta2)
    drift = DriftSpec(drift_kind, theta1, theta2)
    m = MapSpec(theta1, theta2)
    lo, hi = levels
    if guard is None:
        guard = origin_guard(dt) if drift_kind is DriftKind.HTRANSFORM else 0.0
    replicas = np.asarray(list(replicas))
    n = len(replicas)
    keys = replica_keys(seed_base, replicas)
    step = _Stepper(spec, drift, dt)
    reason = np.zeros(n, dtype=np.int8)
    value = np.full(n, np.nan)
    time = np.full(n, np.nan)
    clipped = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    h_prev = h_value(x, m)
    if not np.all((lo < h_prev) & (h_prev < hi)):
        raise ValueError("h(x0) must lie strictly between the levels")
    sq = math.sqrt(dt)
    n_max = n_steps_for(horizon, dt)
    for j in range(n_max):
        if not len(active):
            break
        post, _, _, clip = step(x, _batch_increments(keys[active], j, sq))
        clipped[active] += clip
        out_guard = np.hypot(post[:, 0], post[:, 1]) < guard
        h_new = h_value(post, m)
        low = ~out_guard & (h_new <= lo)
        high = ~out_guard & ~low & (h_new >= hi)
        for mask, level in ((low, lo), (high, hi)):
            if mask.any():
                frac = (h_prev[mask] - level) / (h_prev[mask] - h_new[mask])
                idx = active[mask]
                reason[idx] = 1
                value[idx] = level
                time[idx] = (j + frac) * dt
        reason[active[out_guard]] = 2
        time[active[out_guard]] = (j + 1) * dt
        keep = ~(out_guard | low | high)
        active, x, h_prev = active[keep], post[keep], h_new[keep]
    time[active] = n_max * dt
    return LevelBatch(replicas, reason, value, time, clipped)


def _level_summary(batch: LevelBatch) -> dict:
    n = len(batch.reason)
    return {
        "level_hits": int(np.sum(batch.reason == 1)),
        "horizon_stops": int(np.sum(batch.reason == 0)),
        "origin_entries": int(np.sum(batch.reason == 2)),
        "origin_entry_rate": float(np.mean(batch.reason == 2)) if n else 0.0,
        "clipped_steps": int(batch.clipped.sum()),
    }


def martingale_mc(theta1: float, theta2: float, levels=(0.9, 1.1), h0: float = 1.0,
                  n: int = 10_000, seed_base: int = 0, dt: float = 1e-4, horizon: float = 100.0,
                  threads: int = 1) -> tuple[McReport, float]:
    """Mean of ``h`` at the level-stopping time without drift; returns ``(report, h(x0))``.

    The start point has ``h = h0`` with its wedge image on the bisector.
    Replicas that reach the horizon are reported in the flags and excluded.
    """
    from .conformal import wedge_point_on_level

    m = MapSpec(theta1, theta2)
    x0 = wedge_point_on_level(h0, m)
    parts = fan_out(level_batch, n, threads, theta1=theta1, theta2=theta2,
                    drift_kind=DriftKind.NONE, x0=x0, levels=levels, seed_base=seed_base,
                    dt=dt, horizon=horizon)
    batch = LevelBatch.merge(parts)
    vals = np.where(batch.reason == 1, batch.stop_value, np.nan)
    rep = report_from_values(vals, seed_base, _level_summary(batch))
    return rep, float(h_value(x0, m))


def hitting_law_mc(theta1: float, theta2: float, a: float = 0.9, b: float = 1.0,
                   n: int = 10_000, seed_base: int = 0, dt: float = 1e-4, horizon: float = 100.0,
                   threads: int = 1) -> McReport:
    """``P(h reaches a from b)`` under the h-transform, from a finite-horizon experiment.

    Under the h-transform ``1/h`` is a time-changed martingale, so with the
    upper level ``L = b**2 / a`` the two-sided probability is
    ``p = P(T_a < T_L) = a / (a + b)`` and ``p / (1 - p)`` equals the
    one-sided ``a / b``. The estimate is ``p_hat / (1 - p_hat)`` with a
    delta-method standard error. Origin-guard entries are excluded and
    their rate reported.
    """
    from .conformal import wedge_point_on_level

    if not 0.0 < a < b:
        raise ValueError("need 0 < a < b")
    upper = b * b / a
    m = MapSpec(theta1, theta2)
    x0 = wedge_point_on_level(b, m)
    parts = fan_out(level_batch, n, threads, theta1=theta1, theta2=theta2,
                    drift_kind=DriftKind.HTRANSFORM, x0=x0, levels=(a, upper),
                    seed_base=seed_base, dt=dt, horizon=horizon)
    batch = LevelBatch.merge(parts)
    hit = np.where(batch.reason == 1, (batch.stop_value == a).astype(float), np.nan)
    flags = _level_summary(batch)
    p_rep = report_from_values(hit, seed_base, flags)
    p = p_rep.estimate
    flags = dict(p_rep.flags, two_sided_probability=p, two_sided_std_error=p_rep.std_error,
                 upper_level=upper)
    return McReport(p / (1.0 - p), p_rep.std_error / (1.0 - p) ** 2, p_rep.n_replicas, seed_base, flags)


# ------------------------------------------------------------- strip batches


@dataclass
class StripBatch:
    """Face-hit events and log-scale passages of strip replicas.

    Event arrays are parallel: replica, kind (0 lower, 1 upper), grid index,
    x at the event, cumulative lower local time at the event and just
    before its step, and (upper events) the last lower-band index.
    ``finished`` marks replicas that met the requested event counts before
    the horizon.
    """

    replicas: np.ndarray
    dt: float
    band: float
    window: float
    bridge: bool
    ev_rep: np.ndarray
    ev_kind: np.ndarray
    ev_index: np.ndarray
    ev_x: np.ndarray
    ev_ll: np.ndarray
    ev_ll_before: np.ndarray
    ev_minus: np.ndarray
    pa_rep: np.ndarray
    pa_level: np.ndarray
    pa_index: np.ndarray
    clipped: np.ndarray
    finished: np.ndarray
    y_range: tuple

    _ARRAYS = ("replicas", "ev_rep", "ev_kind", "ev_index", "ev_x", "ev_ll", "ev_ll_before",
               "ev_minus", "pa_rep", "pa_level", "pa_index", "clipped", "finished")

    @classmethod
    def merge(cls, parts):
        first = parts[0]
        arrays = {f: np.concatenate([getattr(p, f) for p in parts]) for f in cls._ARRAYS}
        y_range = (min(p.y_range[0] for p in parts), max(p.y_range[1] for p in parts))
        return cls(dt=first.dt, band=first.band, window=first.window, bridge=first.bridge,
                   y_range=y_range, **arrays)

    def replica_events(self, k: int) -> dict:
        """Events of replica ``k`` in time order."""
        lo, hi = np.searchsorted(self.ev_rep, [k, k + 1])
        plo, phi = np.searchsorted(self.pa_rep, [k, k + 1])
        kind = self.ev_kind[lo:hi]
        d, u = kind == 0, kind == 1
        return {
            "s_down": self.ev_index[lo:hi][d],
            "s_up": self.ev_index[lo:hi][u],
            "s_up_minus": self.ev_minus[lo:hi][u],
            "x_down": self.ev_x[lo:hi][d],
            "ll_down_before": self.ev_ll_before[lo:hi][d],
            "ll_up": self.ev_ll[lo:hi][u],
            "levels": self.pa_level[plo:phi],
            "passages": self.pa_index[plo:phi],
        }


def strip_batch(theta1: float, theta2: float, replicas, seed_base: int, dt: float, horizon: float,
                y0: float | None = None, band: float | None = None, window: float = 1.0,
                bridge: bool = True, min_down: int | None = None,
                min_passages: int | None = None) -> StripBatch:
    """Conditioned strip replicas (drift ``(1, cot y)``) from ``(0, y0)``, midline by default.

    A replica stops once it has ``min_down`` lower hits and ``min_passages``
    level passages (when given), or at ``horizon``. The band defaults to 0
    with ``bridge`` (contacts are detected through the local time) and to
    :func:`default_band` without. Replica ``k`` matches :func:`simulate` on
    the strip ReflectionSpec with ``seed=replica_seed(seed_base, k)`` and the same
    ``bridge`` flag; its events match :func:`excursion_stats`.
    """
    spec = ReflectionSpec.strip(theta1, theta2)
    drift = DriftSpec.strip_conditioned()
    if y0 is None:
        y0 = 0.5 * (spec.y_lo + spec.y_hi)
    if band is None:
        band = 0.0 if bridge else default_band(dt)
    labels = np.asarray(list(replicas), dtype=np.int64)
    n = len(labels)
    keys = replica_keys(seed_base, labels)
    bkeys = replica_keys(seed_base, labels, rng.BRIDGE) if bridge else None
    step = _Stepper(spec, drift, dt, bridge)
    sq = math.sqrt(dt)
    n_steps = n_steps_for(horizon, dt)
    need_down = min_down or 0
    need_pass = min_passages or 0
    targets = min_down is not None or min_passages is not None

    rows = np.arange(n)
    x = np.tile(np.array([0.0, float(y0)]), (n, 1))
    cum_l = np.zeros(n)
    seek_up = np.zeros(n, dtype=bool)
    last_lower = np.full(n, -1, dtype=np.int64)
    next_level = np.floor(log_scale(x, spec) / window).astype(np.int64) + 1
    n_down = np.zeros(n, dtype=np.int64)
    n_pass = np.zeros(n, dtype=np.int64)
    clipped = np.zeros(n, dtype=np.int64)
    finished = np.zeros(n, dtype=bool)
    ev, pa = [], []
    y_min = y_max = float(y0)
    no_touch = np.zeros(n, dtype=bool)

    def record(j, before, touch_l, touch_u):
        ql, qu = face_coords(x, spec)
        in_l = (ql <= band) | touch_l
        last_lower[in_l] = j
        d = ~seek_up & in_l
        seek_up[d] = True
        u = seek_up & ((qu <= band) | touch_u)
        seek_up[u] = False
        n_down[d] += 1
        for kind, mask in ((0, d), (1, u)):
            idx = np.flatnonzero(mask)
            if len(idx):
                ev.append((labels[rows[idx]], np.full(len(idx), kind), np.full(len(idx), j),
                           x[idx, 0], cum_l[idx], before[idx], last_lower[idx]))
        z = log_scale(x, spec)
        passed = z >= next_level * window
        while passed.any():
            idx = np.flatnonzero(passed)
            pa.append((labels[rows[idx]], next_level[idx].copy(), np.full(len(idx), j)))
            next_level[idx] += 1
            n_pass[idx] += 1
            passed = z >= next_level * window

    record(0, cum_l.copy(), no_touch, no_touch)
    for j in range(n_steps):
        if not len(rows):
            break
        before = cum_l.copy()
        u = rng.uniforms(bkeys[rows], j) if bridge else None
        x, dl, du, clip = step(x, _batch_increments(keys[rows], j, sq), u)
        cum_l += dl
        clipped[rows] += clip
        y_min = min(y_min, float(x[:, 1].min()))
        y_max = max(y_max, float(x[:, 1].max()))
        record(j + 1, before, dl > 0.0, du > 0.0)
        if targets:
            done = (n_down >= need_down) & (n_pass >= need_pass)
            if done.any():
                finished[rows[done]] = True
                keep = ~done
                rows, x, cum_l, seek_up, last_lower, next_level, n_down, n_pass = (
                    a[keep] for a in (rows, x, cum_l, seek_up, last_lower, next_level, n_down, n_pass))
    if not targets:
        finished[:] = True

    def cat(items, i, dtype):
        return np.concatenate([it[i] for it in items]).astype(dtype) if items else np.zeros(0, dtype)

    # stable sort by replica keeps time order within each replica
    order = np.argsort(cat(ev, 0, np.int64), kind="stable")
    porder = np.argsort(cat(pa, 0, np.int64), kind="stable")
    return StripBatch(
        replicas=labels, dt=dt, band=band, window=window, bridge=bridge,
        ev_rep=cat(ev, 0, np.int64)[order], ev_kind=cat(ev, 1, np.int8)[order],
        ev_index=cat(ev, 2, np.int64)[order], ev_x=cat(ev, 3, float)[order],
        ev_ll=cat(ev, 4, float)[order], ev_ll_before=cat(ev, 5, float)[order],
        ev_minus=cat(ev, 6, np.int64)[order],
        pa_rep=cat(pa, 0, np.int64)[porder], pa_level=cat(pa, 1, np.int64)[porder],
        pa_index=cat(pa, 2, np.int64)[porder], clipped=clipped, finished=finished,
        y_range=(y_min, y_max),
    )


@dataclass
class StripCycleResult:
    down_to_up: McReport
    up_to_down: McReport
    displacement: McReport
    local_time_lower: McReport
    kappa_rate: McReport
    kappa_rate_constrained: McReport
    window_discrepancy: tuple[int, int]
    n_windows: int
    flags: dict


def summarize_strip(batch: StripBatch, seed_base: int, burn_in: int = 5,
                    cycles: int | None = None, windows: int | None = None) -> StripCycleResult:
    """Per-cycle statistics of a strip batch.

    Cycle ``k`` (counting lower hits from 0) runs from ``S^d_k`` to
    ``S^d_{k+1}`` and contains the leg ``S^d_k -> S^u_k``; cycles
    ``burn_in, ..., burn_in + cycles - 1`` of each replica are used (all
    complete ones when ``cycles`` is None). A leg's lower local time
    includes the push of the step that entered the face. The excursion
    rate counts upper hits in the first ``windows`` log-scale windows.
    """
    dt = batch.dt
    cols = {k: ([], []) for k in ("d2u", "u2d", "disp", "lt", "kap", "kap_d")}

    def add(key, values, count):
        cols[key][0].append(math.fsum(np.asarray(values, dtype=float).tolist()))
        cols[key][1].append(count)

    dmin, dmax, n_windows = 0, 0, 0
    for k in batch.replicas:
        e = batch.replica_events(int(k))
        sd, su = e["s_down"], e["s_up"]
        hi = len(sd) - 1 if cycles is None else min(len(sd) - 1, burn_in + cycles)
        idx = np.arange(burn_in, max(burn_in, hi))
        idx = idx[idx < len(su)]
        add("d2u", (su[idx] - sd[idx]) * dt, len(idx))
        add("lt", e["ll_up"][idx] - e["ll_down_before"][idx], len(idx))
        add("u2d", (sd[idx + 1] - su[idx]) * dt, len(idx))
        add("disp", e["x_down"][idx + 1] - e["x_down"][idx], len(idx))
        passages = e["passages"] if windows is None else e["passages"][:windows + 1]
        n_d, n_big = window_counts(su, e["s_up_minus"], passages)
        if len(n_big):
            diff = n_big - n_d
            dmin, dmax = min(dmin, int(diff.min())), max(dmax, int(diff.max()))
            n_windows += len(n_big)
        add("kap", n_big, len(n_big) * batch.window)
        add("kap_d", n_d, len(n_big) * batch.window)
    flags = {"burn_in_cycles": burn_in, "burn_in_heuristic": True, "dt": dt, "band": batch.band,
             "bridge": batch.bridge, "cycles_per_replica": cycles, "windows_per_replica": windows,
             "unfinished_replicas": int(np.sum(~batch.finished)),
             "clipped_steps": int(batch.clipped.sum()), "y_range": list(batch.y_range)}

    def rep(key):
        return ratio_report(cols[key][0], cols[key][1], seed_base, flags)

    return StripCycleResult(
        down_to_up=rep("d2u"), up_to_down=rep("u2d"), displacement=rep("disp"),
        local_time_lower=rep("lt"), kappa_rate=rep("kap"), kappa_rate_constrained=rep("kap_d"),
        window_discrepancy=(dmin, dmax), n_windows=n_windows, flags=flags,
    )


def strip_cycle_mc(theta1: float, theta2: float, n: int = 1000, seed_base: int = 0,
                   dt: float = 1e-4, cycles: int = 10, burn_in: int = 5, windows: int | None = None,
                   window: float = 1.0, horizon: float = 200.0, bridge: bool = True,
                   threads: int = 1) -> StripCycleResult:
    """Strip replicas run until each has ``burn_in + cycles`` complete cycles (and
    ``windows`` complete log-scale windows when given)."""
    parts = fan_out(strip_batch, n, threads, chunk=1024, theta1=theta1, theta2=theta2,
                    seed_base=seed_base, dt=dt, horizon=horizon, window=window, bridge=bridge,
                    min_down=burn_in + cycles + 1,
                    min_passages=None if windows is None else windows + 1)
    return summarize_strip(StripBatch.merge(parts), seed_base, burn_in, cycles, windows)
