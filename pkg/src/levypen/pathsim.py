"""Discretized Levy paths with tracked local times and clock realizations.

Local time at a level is accumulated by the occupation-window rule
``dL = dt/(2 eps) * 1{|X - level| < eps}`` evaluated at the left endpoint
of every step, the natural discretisation of the occupation-density
definition.  Point hitting is realized as window entry plus, for models
with a Gaussian component, a Brownian-bridge correction that detects
sub-step crossings; for pure-jump models no crossing correction is
applied because a step straddling the level usually means the path
jumped over it without touching.

Two layers live here:

* the ``Path`` object and the operations on it (``simulate_path``,
  ``first_hitting``, ``inverse_local_time``, ``realize_clock``) used by
  the CLI dumps and the unit tests;
* a chunked per-path walker (``walk_ensembles`` via ``PathPlan``) that
  the statistical harness uses so that ensembles never materialize whole
  trajectories.  Every path owns a private stream derived from
  ``(master seed, tag, path index)``, which makes results reproducible
  regardless of execution order or sharding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import LevyModel

__all__ = [
    "SimGrid",
    "MCConfig",
    "Path",
    "ExponentialClock",
    "HittingClock",
    "TwoPointHittingClock",
    "InverseLocalTimeClock",
    "HitDetector",
    "default_detector",
    "simulate_path",
    "first_hitting",
    "inverse_local_time",
    "realize_clock",
    "PathPlan",
    "PathRecord",
    "walk_one",
    "path_stream",
]

_MAX_STEPS = 1_000_000_000
_CHUNK = 8192
NOT_HIT = np.iinfo(np.int64).max


class BudgetError(RuntimeError):
    """Step budget of the simulation grid exceeded."""


@dataclass(frozen=True)
class SimGrid:
    """Time step, horizon and occupation window of a simulation.

    ``eps`` defaults to 5 sqrt(dt); the constraint dt <= eps^2 keeps the
    window wide enough that the occupation estimator sees O(eps/dt)
    samples per excursion through the window.
    """

    dt: float
    horizon: float
    eps: float = 0.0

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.eps == 0.0:
            object.__setattr__(self, "eps", 5.0 * math.sqrt(self.dt))
        if self.dt > self.eps**2 * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} must not exceed eps^2={self.eps**2}")
        if self.horizon / self.dt > _MAX_STEPS:
            raise ValueError("step budget horizon/dt exceeds 1e9")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def delta(self) -> float:
        """Default hit-detection window half-width."""
        return 0.5 * self.eps


@dataclass(frozen=True)
class MCConfig:
    """Ensemble size, seeding and acceptance thresholds of one MC run."""

    n_paths: int
    master_seed: int
    grid: SimGrid
    z: float = 3.0
    censor_budget: float = 0.25
    n_batches: int = 50

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError("n_paths must be at least 100")
        if not 0 <= self.censor_budget < 1:
            raise ValueError("censor_budget must lie in [0, 1)")
        if self.n_batches < 2 or self.n_paths % self.n_batches:
            raise ValueError("n_batches must divide n_paths")


# ---------------------------------------------------------------------------
# clocks

@dataclass(frozen=True)
class ExponentialClock:
    """Independent exponential time with rate q."""

    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("exponential clock rate must be positive")


@dataclass(frozen=True)
class HittingClock:
    """First hitting time of the level c."""

    c: float


@dataclass(frozen=True)
class TwoPointHittingClock:
    """Earlier of the hitting times of c and -d, both thresholds positive."""

    c: float
    d: float

    def __post_init__(self):
        if not (self.c > 0 and self.d > 0):
            raise ValueError("two-point clock thresholds must be positive")


@dataclass(frozen=True)
class InverseLocalTimeClock:
    """First time the local time at c exceeds u."""

    c: float
    u: float

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("local-time threshold must be positive")


@dataclass(frozen=True)
class HitDetector:
    """Point-hitting detection rule for discretized paths.

    ``delta`` is the entry-window half-width (0 disables the window),
    ``straddle`` counts sign changes across a step as crossings, and a
    positive ``bridge_sigma`` adds the Brownian-bridge sub-step crossing
    draw for same-side steps.
    """

    delta: float
    straddle: bool
    bridge_sigma: float = 0.0


def default_detector(model: LevyModel, grid: SimGrid) -> HitDetector:
    """Detection rule the harness uses for a model.

    Gaussian-component models get exact crossing detection (straddle +
    bridge, no window): the bridge law makes the first-crossing time
    exact in distribution, while an entry window would systematically
    advance hits by its half-width.  Pure-jump models keep the entry
    window, the honest event under overshoot.
    """
    if model.has_gaussian_part:
        return HitDetector(delta=0.0, straddle=True, bridge_sigma=model.gaussian_sigma)
    return HitDetector(delta=grid.delta, straddle=False)


# ---------------------------------------------------------------------------
# full-path objects

@dataclass
class Path:
    """A realized trajectory on the simulation grid with local times."""

    model: LevyModel | None
    grid: SimGrid
    x0: float
    values: np.ndarray                  # X at grid points 0..n
    tracked_levels: tuple
    local_times: dict                   # level -> L at grid points 0..n

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.grid.dt

    def state_at(self, t: float):
        k = min(int(t / self.grid.dt), len(self.values) - 1)
        return self.values[k], {lv: lt[k] for lv, lt in self.local_times.items()}


def simulate_path(model: LevyModel, x0: float, grid: SimGrid, tracked,
                  stream: np.random.Generator) -> Path:
    """Simulate one path with exact increments and occupation local times."""
    n = grid.n_steps
    if n > _MAX_STEPS:
        raise BudgetError(f"{n} steps exceed the grid cap")
    tracked = tuple(sorted(set(float(t) for t in tracked)))
    values = np.empty(n + 1)
    values[0] = x0
    values[1:] = x0 + np.cumsum(model.sample_increments(stream, grid.dt, n))
    unit = grid.dt / (2.0 * grid.eps)
    local_times = {}
    left = values[:-1]
    for lv in tracked:
        inc = unit * (np.abs(left - lv) < grid.eps)
        lt = np.empty(n + 1)
        lt[0] = 0.0
        np.cumsum(inc, out=lt[1:])
        local_times[lv] = lt
    return Path(model=model, grid=grid, x0=x0, values=values,
                tracked_levels=tracked, local_times=local_times)


def _detect_hit(values: np.ndarray, level: float, det: HitDetector, dt: float,
                stream: np.random.Generator | None):
    """First detection index into the grid-point array, or None.

    Window entry detects at the grid point itself, crossings (straddle
    or bridge) at the right endpoint of the offending step.
    """
    d = values - level
    n_steps = len(values) - 1
    first_win = None
    if det.delta > 0:
        win = np.abs(d[:-1]) <= det.delta
        if win.any():
            first_win = int(np.argmax(win))
    first_cross = None
    if det.straddle or det.bridge_sigma > 0:
        prod = d[:-1] * d[1:]
        cand = prod <= 0.0 if det.straddle else np.zeros(n_steps, bool)
        if det.bridge_sigma > 0 and stream is not None:
            p = np.exp(-2.0 * np.maximum(prod, 0.0) / (det.bridge_sigma**2 * dt))
            same = ~cand & (p > 1e-14)
            if same.any():
                u = stream.random(int(same.sum()))
                fire = np.zeros(n_steps, bool)
                fire[same] = u < p[same]
                cand |= fire
        if cand.any():
            first_cross = int(np.argmax(cand)) + 1
    if first_win is None and first_cross is None:
        return None
    if first_win is None:
        return first_cross
    if first_cross is None:
        return first_win
    return min(first_win, first_cross)


def first_hitting(path: Path, level: float, delta: float | None = None,
                  stream: np.random.Generator | None = None) -> float | None:
    """First grid time at which the path is detected at the level.

    Detection is window entry within ``delta`` (default eps/2) or a step
    crossing; when the generating model has a Gaussian component and a
    stream is supplied, same-side steps may also fire via the
    Brownian-bridge probability.  Returns None when never detected.
    """
    if delta is None:
        delta = path.grid.delta
    if delta <= 0:
        raise ValueError("delta must be positive")
    model = path.model
    if model is not None and not model.has_gaussian_part:
        det = HitDetector(delta=delta, straddle=False)
    else:
        sigma = model.gaussian_sigma if (model is not None and stream is not None) else 0.0
        det = HitDetector(delta=delta, straddle=True, bridge_sigma=sigma)
    idx = _detect_hit(path.values, level, det, path.grid.dt, stream)
    return None if idx is None else idx * path.grid.dt


def inverse_local_time(path: Path, level: float, u: float) -> float | None:
    """First grid time at which the tracked local time exceeds u."""
    lv = float(level)
    if lv not in path.local_times:
        raise ValueError(f"level {level} is not tracked on this path")
    above = path.local_times[lv] > u
    if not above.any():
        return None
    return int(np.argmax(above)) * path.grid.dt


def realize_clock(path: Path, clock, stream: np.random.Generator,
                  delta: float | None = None) -> float | None:
    """Realize one of the four clock families on a path.

    Returns the clock time, or None when the clock did not ring within
    the horizon (censoring; callers account for it explicitly).
    """
    horizon = path.grid.horizon
    if isinstance(clock, ExponentialClock):
        t = stream.exponential(1.0 / clock.q)
        return t if t <= horizon else None
    if isinstance(clock, HittingClock):
        return first_hitting(path, clock.c, delta, stream)
    if isinstance(clock, TwoPointHittingClock):
        up = first_hitting(path, clock.c, delta, stream)
        down = first_hitting(path, -clock.d, delta, stream)
        if up is None:
            return down
        if down is None:
            return up
        return min(up, down)
    if isinstance(clock, InverseLocalTimeClock):
        return inverse_local_time(path, clock.c, clock.u)
    raise TypeError(f"unknown clock spec {clock!r}")


# ---------------------------------------------------------------------------
# ensemble walker

@dataclass(frozen=True)
class PathPlan:
    """What a walked path must track, record and stop on.

    Stops arm when any of three event kinds fires: detection of a level
    in ``stop_hit_levels``, the last local-time threshold crossing (when
    ``lt_stop``), or the personal clock step ``clock_step`` (e.g. an
    exponential clock drawn per path).  The walk halts at the first
    armed event, but never before the last fixed snapshot step, so
    snapshots are always taken on the live path.  The state at the clock
    step is recorded separately whenever the walk reaches it.
    """

    tracked_levels: tuple = ()
    hit_levels: tuple = ()
    stop_hit_levels: tuple = ()
    record_hit_levels: tuple = ()            # record full state at first detection
    lt_level: float | None = None          # level whose local time is thresholded
    lt_thresholds: tuple = ()               # ascending; each crossing is recorded
    lt_stop: bool = False                    # stop after the last threshold
    snapshot_steps: tuple = ()               # sorted global step indices
    clock_step: int | None = None            # personal clock (records and arms)

    def __post_init__(self):
        if self.lt_thresholds and list(self.lt_thresholds) != sorted(self.lt_thresholds):
            raise ValueError("lt_thresholds must be ascending")
        if any(lv not in self.hit_levels for lv in self.stop_hit_levels):
            raise ValueError("stop_hit_levels must be a subset of hit_levels")
        if any(lv not in self.hit_levels for lv in self.record_hit_levels):
            raise ValueError("record_hit_levels must be a subset of hit_levels")
        if self.lt_thresholds and (self.lt_level is None
                                   or self.lt_level not in self.tracked_levels):
            raise ValueError("thresholded level must be tracked")


@dataclass
class PathRecord:
    """Per-path outcome of a walk.

    Hit steps later than ``final_step`` mean only "not hit by any step
    the checks compare against"; detection past the stop is partial.
    """

    final_step: int
    x_final: float
    local_times: np.ndarray          # per tracked level, at the final step
    hit_steps: np.ndarray            # per hit level; NOT_HIT when undetected
    snapshots: dict = field(default_factory=dict)   # step -> (x, lt copy, hit copy)
    crossings: dict = field(default_factory=dict)   # threshold -> (step, lt copy, hit copy)
    hit_states: dict = field(default_factory=dict)  # level -> (step, x, lt copy, hit copy)
    clock_state: tuple | None = None  # (step, x, lt copy, hit copy) at the clock step
    stopped: bool = False            # a stop rule fired at or before the horizon


def path_stream(master_seed: int, tag: int, index: int) -> np.random.Generator:
    """Private stream of one path: reproducible under any scheduling."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(tag, index))))


def walk_one(model: LevyModel, x0: float, grid: SimGrid, plan: PathPlan,
             rng: np.random.Generator, detector: HitDetector | None = None) -> PathRecord:
    """Walk a single path under a plan, chunk by chunk, never storing it."""
    det = detector if detector is not None else default_detector(model, grid)
    dt = grid.dt
    unit = dt / (2.0 * grid.eps)
    horizon_step = grid.n_steps
    snap_iter = [s for s in plan.snapshot_steps if s <= horizon_step]
    arm_step = snap_iter[-1] if snap_iter else 0
    clock_step = plan.clock_step
    if clock_step is not None and clock_step > horizon_step:
        clock_step = None  # clock did not ring within the horizon

    n_track = len(plan.tracked_levels)
    track = np.array(plan.tracked_levels, dtype=float)
    hits = np.array(plan.hit_levels, dtype=float)
    stop_hit = np.array([lv in plan.stop_hit_levels for lv in plan.hit_levels])
    lt_idx = (plan.tracked_levels.index(plan.lt_level)
              if plan.lt_level is not None else -1)

    lt = np.zeros(n_track)
    hit_steps = np.full(len(hits), NOT_HIT, dtype=np.int64)
    rec = PathRecord(final_step=0, x_final=x0, local_times=lt, hit_steps=hit_steps)
    pending_thresholds = list(plan.lt_thresholds)
    earliest_stop: int | None = clock_step

    def state_at(off, x_entry, lt_entry, pos, cums, step):
        xs = x_entry if off == 0 else pos[off - 1]
        lts = lt_entry if off == 0 else lt_entry + cums[:, off - 1]
        hsnap = hit_steps.copy()
        hsnap[hsnap > step] = NOT_HIT
        return xs, lts.copy(), hsnap

    x = x0
    g = 0  # global step at the chunk start
    snap_pos = 0
    while g < horizon_step:
        n = min(_CHUNK, horizon_step - g)
        dx = model.sample_increments(rng, dt, n)
        pos = np.empty(n)
        np.cumsum(dx, out=pos)
        pos += x

        # hit detection for levels not yet detected
        seg = np.empty(n + 1)
        seg[0] = x
        seg[1:] = pos
        new_hits = []
        for k in range(len(hits)):
            if hit_steps[k] != NOT_HIT:
                continue
            idx = _detect_hit(seg, hits[k], det, dt, rng)
            if idx is not None:
                hit_steps[k] = g + idx
                new_hits.append(k)

        # occupation local times (left-endpoint rule), cumulative in-chunk
        left = seg[:-1]
        cums = np.empty((n_track, n))
        for j in range(n_track):
            np.cumsum(unit * (np.abs(left - track[j]) < grid.eps), out=cums[j])

        for k in new_hits:
            if hits[k] in plan.record_hit_levels:
                step = int(hit_steps[k])
                rec.hit_states[float(hits[k])] = (
                    step, *state_at(step - g, x, lt, pos, cums, step))

        # local-time threshold crossings: L at grid point g+i+1 equals
        # lt[lt_idx] + cums[lt_idx, i]
        while pending_thresholds:
            u = pending_thresholds[0]
            above = lt[lt_idx] + cums[lt_idx] > u
            if not above.any():
                break
            i = int(np.argmax(above))
            step = g + i + 1
            rec.crossings[u] = (step, (lt + cums[:, i]).copy(), hit_steps.copy())
            pending_thresholds.pop(0)
            if not pending_thresholds and plan.lt_stop:
                if earliest_stop is None or step < earliest_stop:
                    earliest_stop = step

        # personal clock state, recorded when the walk passes its step
        if clock_step is not None and rec.clock_state is None and g <= clock_step <= g + n:
            off = clock_step - g
            rec.clock_state = (clock_step, *state_at(off, x, lt, pos, cums, clock_step))

        # armed stop events from hits
        if stop_hit.any():
            armed = hit_steps[stop_hit]
            if armed.min() != NOT_HIT:
                first_armed = int(armed.min())
                if earliest_stop is None or first_armed < earliest_stop:
                    earliest_stop = first_armed

        stop_at = None
        if earliest_stop is not None:
            stop_at = max(earliest_stop, arm_step)
            if stop_at > g + n:
                stop_at = None

        # snapshots due in this chunk, up to the stop step if any
        chunk_end = g + n if stop_at is None else stop_at
        while snap_pos < len(snap_iter) and snap_iter[snap_pos] <= chunk_end:
            s = snap_iter[snap_pos]
            rec.snapshots[s] = state_at(s - g, x, lt, pos, cums, s)
            snap_pos += 1

        if stop_at is not None:
            xs, lts, _ = state_at(stop_at - g, x, lt, pos, cums, stop_at)
            rec.final_step = stop_at
            rec.x_final = xs
            rec.local_times = lts
            rec.hit_steps = hit_steps
            rec.stopped = True
            return rec

        x = pos[-1]
        if n_track:
            lt = lt + cums[:, -1]
        g += n

    rec.final_step = horizon_step
    rec.x_final = x
    rec.local_times = lt
    rec.hit_steps = hit_steps
    rec.stopped = False
    return rec
