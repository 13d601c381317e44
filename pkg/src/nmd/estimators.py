"""Trajectory-based estimators of excited-state probability and observables.

The central routine is :func:`pe_md`, the two-phase estimator: a ground-
surface trajectory is scanned for re-initialization events (hitting-plane
crossings or Poisson-distributed times), then the mean-field wave function
is restarted in the ground state at each event and the running average of
|<psi_t, Psi_plus(X_t)>| over the whole time horizon is returned.

Also here: rejection-sampled microcanonical space averages (g_MD), running
time averages along trajectories (g_BO), and the statistical scans used to
probe ergodicity, path-independence and hitting-time statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import dynamics, model
from .dynamics import PhasePoint, Trajectory
from .errors import EmptyEventsError, InsufficientDataError
from .model import PotentialSpec

__all__ = [
    "PlaneMode",
    "PoissonMode",
    "EventList",
    "McEstimate",
    "PeMdResult",
    "HittingTimeStats",
    "generate_events",
    "pe_md",
    "default_ehrenfest_dt",
    "gmd_monte_carlo",
    "gbo_time_average",
    "ergodicity_scan",
    "multipath_sampling_error",
    "hitting_time_histogram",
    "gap_statistics",
    "loglog_slope",
]


@dataclass(frozen=True)
class PlaneMode:
    """Re-initialize whenever the path crosses the plane (X - point).normal = 0."""

    point: tuple
    normal: tuple


@dataclass(frozen=True)
class PoissonMode:
    """Re-initialize at Poisson-distributed times with the given rate."""

    rate: float
    seed: int = 0


@dataclass
class EventList:
    X: np.ndarray  # (count, dim)
    P: np.ndarray
    t: np.ndarray
    mode: str

    @property
    def count(self) -> int:
        return int(self.t.shape[0])


def _plane_crossings(traj: Trajectory, point, normal):
    """Sign changes of (X - point).normal, located by linear interpolation.

    Returns (t, X, P) arrays of the crossing records (trajectory start not
    included).
    """
    normal = np.asarray(normal, dtype=float)
    point = np.asarray(point, dtype=float)
    if not np.any(normal != 0.0):
        raise ValueError("plane normal must be nonzero")
    f = (traj.X - point) @ normal
    ts, Xs, Ps = [], [], []
    for i in np.nonzero((f[:-1] * f[1:] < 0.0) | (f[1:] == 0.0))[0]:
        tau = f[i] / (f[i] - f[i + 1]) if f[i] != f[i + 1] else 1.0
        ts.append(traj.t[i] + tau * (traj.t[i + 1] - traj.t[i]))
        Xs.append(traj.X[i] + tau * (traj.X[i + 1] - traj.X[i]))
        Ps.append(traj.P[i] + tau * (traj.P[i + 1] - traj.P[i]))
    if not ts:
        return np.empty(0), np.empty((0, traj.X.shape[1])), np.empty((0, traj.X.shape[1]))
    return np.array(ts), np.array(Xs), np.array(Ps)


def generate_events(traj: Trajectory, mode: Union[PlaneMode, PoissonMode]) -> EventList:
    """Event records along a trajectory; the first record is the start state.

    Plane mode locates each sign change by linear interpolation between
    steps; Poisson mode draws one exponential-gap stream from the seed and
    maps each time to the nearest trajectory sample.  Raises
    EmptyEventsError when no event falls strictly inside the horizon.
    """
    if isinstance(mode, PlaneMode):
        ts, Xs, Ps = _plane_crossings(traj, mode.point, mode.normal)
        inside = (ts > traj.t[0]) & (ts < traj.t[-1])
        ts, Xs, Ps = ts[inside], Xs[inside], Ps[inside]
        label = "plane"
    elif isinstance(mode, PoissonMode):
        if mode.rate <= 0:
            raise ValueError("poisson rate must be positive")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(mode.seed),
                                                           spawn_key=(7,)))
        horizon = traj.t[-1] - traj.t[0]
        n_guess = max(int(mode.rate * horizon * 1.5) + 16, 16)
        times = []
        acc = 0.0
        while True:
            for gap in rng.exponential(1.0 / mode.rate, size=n_guess):
                acc += gap
                if acc >= horizon:
                    break
                times.append(acc)
            else:
                continue
            break
        idx = np.clip(np.round(np.asarray(times) / (traj.dt * traj.stride)).astype(int),
                      0, traj.n_samples - 1)
        idx = np.unique(idx)
        idx = idx[(idx > 0) & (idx < traj.n_samples - 1)]
        ts, Xs, Ps = traj.t[idx], traj.X[idx], traj.P[idx]
        label = "poisson"
    else:
        raise TypeError(f"unknown events mode {mode!r}")
    if ts.size == 0:
        raise EmptyEventsError("no re-initialization events inside the horizon")
    t0 = np.concatenate([[traj.t[0]], ts])
    X0 = np.vstack([traj.X[:1], Xs])
    P0 = np.vstack([traj.P[:1], Ps])
    return EventList(X0, P0, t0, label)


def default_ehrenfest_dt(M: float) -> float:
    """Step matched to the electronic phase speed, normalized to the 1D runs."""
    return 0.01 * math.sqrt(20000.0 / M)


@dataclass
class PeMdResult:
    pe_hat: float
    segments: np.ndarray  # rows (t1, t2, integral)
    events: EventList
    T: float


def pe_md(spec: PotentialSpec, E: float, init: PhasePoint,
          events_mode: Union[PlaneMode, PoissonMode], M: float, dt: float,
          T: float, *, ehrenfest_dt: Optional[float] = None,
          ehrenfest_mode: str = "canonical",
          _segment_integrand: Optional[Callable] = None) -> PeMdResult:
    """Two-phase excited-probability estimate along a single trajectory.

    Phase 1 integrates the ground-surface dynamics over [0, T] and collects
    re-initialization events.  Phase 2 reruns each inter-event stretch with
    mean-field dynamics, the wave function restarted as the unit-norm ground
    state at the left event, and accumulates the trapezoid integral of
    |<psi_t, Psi_plus(X_t)>| / |psi_t|; the sum over segments (including the
    final stretch up to T) divided by T is returned.

    ``_segment_integrand`` is a test seam: when given, it replaces the
    mean-field run for a segment and must return its time integral.
    """
    if ehrenfest_dt is None:
        ehrenfest_dt = default_ehrenfest_dt(M)
    traj = dynamics.bo_trajectory(spec, init, dt, T, stride=1)
    events = generate_events(traj, events_mode)
    bounds_t = np.concatenate([events.t, [traj.t[-1]]])
    bounds_X = np.vstack([events.X, traj.X[-1:]])
    bounds_P = np.vstack([events.P, traj.P[-1:]])
    total = 0.0
    rows = []
    for k in range(len(bounds_t) - 1):
        t1, t2 = float(bounds_t[k]), float(bounds_t[k + 1])
        if t2 - t1 <= 0.0:
            continue
        if _segment_integrand is not None:
            part = float(_segment_integrand(t1, t2, bounds_X[k], bounds_P[k]))
        else:
            part = _segment_overlap_integral(spec, bounds_X[k], bounds_P[k],
                                             t2 - t1, ehrenfest_dt, M,
                                             ehrenfest_mode)
        total += part
        rows.append((t1, t2, part))
    horizon = float(traj.t[-1] - traj.t[0])
    return PeMdResult(total / horizon, np.array(rows), events, horizon)


def _segment_overlap_integral(spec, X0, P0, span, ehrenfest_dt, M, mode) -> float:
    """Trapezoid of |<psi, Psi_plus(X)>| over one mean-field segment."""
    n = max(int(math.ceil(span / ehrenfest_dt)), 1)
    dt_seg = span / n
    state = dynamics.ehrenfest_init(spec, X0, P0, M, branch="-",
                                    norm_convention="unit")
    terms_at = dynamics._point_terms_factory(spec)
    acc = {"sum": 0.0, "last": 0.0}

    def overlap(idx, x, p, pr, pi):
        _, d, o, *_ = terms_at(x)
        s = math.hypot(d, o)
        if d >= 0.0:
            e0, e1 = s + d, o
        else:
            e0, e1 = o, s - d
        nrm = math.hypot(e0, e1)
        nsq = pr[0] ** 2 + pr[1] ** 2 + pi[0] ** 2 + pi[1] ** 2
        if nrm == 0.0 or nsq == 0.0:
            y = acc["last"]
        else:
            re = (e0 * pr[0] + e1 * pr[1]) / nrm
            im = (e0 * pi[0] + e1 * pi[1]) / nrm
            y = math.hypot(re, im) / math.sqrt(nsq)
        acc["last"] = y
        weight = 0.5 if idx in (0, n) else 1.0
        acc["sum"] += weight * y

    dynamics._ehrenfest_loop(spec, state.phase.X, state.phase.P, state.psi_r,
                             state.psi_i, dt_seg, n, M, mode, 1, overlap)
    return acc["sum"] * dt_seg


@dataclass
class McEstimate:
    value: float
    standard_error: float
    n_samples: int
    seed: int
    n_accepted: int = 0
    boundary_warning: bool = False


_CHUNK = 1_000_000


def gmd_monte_carlo(spec: PotentialSpec, g: Callable, E: float, n_samples: int,
                    seed: int, bounding_box: Optional[Sequence] = None) -> McEstimate:
    """Uniform average of g over the classically allowed region.

    Rejection sampling: draw uniformly in the bounding box, accept where
    lambda_minus(X) <= E.  Streams are counter-based per fixed-size chunk,
    so the result is bit-identical for a given (seed, n_samples) regardless
    of how chunks are scheduled.  A flag warns when accepted points hug the
    box boundary (the box may be clipping the region).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    if bounding_box is None:
        bounding_box = ((-2.0 * np.pi, 2.0 * np.pi),) if spec.dim == 1 else \
            ((-4.0, 4.0), (-4.0, 4.0))
    los = np.array([b[0] for b in bounding_box])
    his = np.array([b[1] for b in bounding_box])
    margin = 1e-3 * np.max(his - los)
    n_acc = 0
    sum_g = 0.0
    sum_g2 = 0.0
    warn = False
    done = 0
    chunk_idx = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                           spawn_key=(11, chunk_idx)))
        pts = los + (his - los) * rng.random((m, spec.dim))
        lm = model.lambda_minus(spec, pts if spec.dim == 2 else pts[:, 0])
        acc = pts[lm <= E]
        if acc.shape[0]:
            gv = np.asarray(g(acc), dtype=float).reshape(-1)
            n_acc += acc.shape[0]
            sum_g += float(np.sum(gv))
            sum_g2 += float(np.sum(gv * gv))
            if np.any((acc < los + margin) | (acc > his - margin)):
                warn = True
        done += m
        chunk_idx += 1
    if n_acc == 0:
        raise ValueError("no samples accepted: check the box and energy")
    mean = sum_g / n_acc
    var = max(sum_g2 / n_acc - mean * mean, 0.0)
    se = math.sqrt(var / n_acc)
    return McEstimate(mean, se, n_samples, seed, n_acc, warn)


def gbo_time_average(traj: Trajectory, g: Callable,
                     window: str = "full") -> float:
    """Trapezoid time average of g(X_t) over the window ("full" | "tail_half")."""
    if traj.n_samples < 2:
        raise ValueError("trajectory has fewer than two samples")
    vals = np.asarray(g(traj.X), dtype=float).reshape(-1)
    if window == "full":
        lo = 0
    elif window == "tail_half":
        lo = (traj.n_samples - 1) // 2
    else:
        raise ValueError(f"unknown window {window!r}")
    t = traj.t[lo:]
    return float(np.trapezoid(vals[lo:], t) / (t[-1] - t[0]))


def loglog_slope(xs, ys) -> Optional[float]:
    """Least-squares slope of log|y| against log x; None for < 2 points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.abs(np.asarray(ys, dtype=float))
    keep = ys > 0
    if np.count_nonzero(keep) < 2:
        return None
    return float(np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0])


@dataclass
class ErgodicityScan:
    T: np.ndarray
    g_bo: np.ndarray
    error: np.ndarray
    slope: Optional[float]


def ergodicity_scan(spec: PotentialSpec, g: Callable, E: float,
                    init: PhasePoint, dt: float, T_list: Sequence[float],
                    g_md_ref: float) -> ErgodicityScan:
    """|g_BO(T) - g_MD| over a list of horizons, from one trajectory.

    The scan reuses a single path up to max(T_list), reading off the running
    full-window time average at each horizon; the log-log slope of the error
    is fitted when more than one horizon is given.
    """
    T_list = sorted(float(T) for T in T_list)
    T_max = T_list[-1]
    traj = dynamics.bo_trajectory(spec, init, dt, T_max, stride=1)
    vals = np.asarray(g(traj.X), dtype=float).reshape(-1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(traj.t))])
    g_bo = []
    for T in T_list:
        i = int(round(T / dt))
        g_bo.append(cum[i] / (traj.t[i] - traj.t[0]))
    g_bo = np.array(g_bo)
    err = np.abs(g_bo - g_md_ref)
    slope = loglog_slope(T_list, err) if len(T_list) > 1 else None
    return ErgodicityScan(np.array(T_list), g_bo, err, slope)


def multipath_sampling_error(spec: PotentialSpec, g: Callable, E: float,
                             N_list: Sequence[int], delta_v: float,
                             base_angle: float, dt: float, T: float,
                             g_md_ref: float) -> np.ndarray:
    """Averaged tail-half error over fans of nearby initial momenta.

    Path n starts at the origin with |P| on the energy shell and direction
    angle base_angle + n*delta_v; for each N the signed error
    (1/N) sum_n [tail-half average along path n] - g_md_ref is returned as
    rows (N, error).
    """
    if spec.dim != 2:
        raise ValueError("multipath scan is defined for 2D specs")
    N_max = int(max(N_list))
    speed = dynamics.momentum_on_shell(spec, E, (0.0, 0.0))
    angles = base_angle + delta_v * np.arange(1, N_max + 1)
    X = np.zeros((N_max, 2))
    P = speed * np.column_stack([np.cos(angles), np.sin(angles)])
    n_steps = int(round(T / dt))
    lo = n_steps // 2
    acc = np.zeros(N_max)
    gcur = np.asarray(g(X), dtype=float).reshape(-1)
    if lo == 0:
        acc += 0.5 * gcur
    grad = dynamics._grad_lm_many(spec, X)
    for k in range(n_steps):
        P -= 0.5 * dt * grad
        X += dt * P
        grad = dynamics._grad_lm_many(spec, X)
        P -= 0.5 * dt * grad
        if k + 1 >= lo:
            gcur = np.asarray(g(X), dtype=float).reshape(-1)
            acc += gcur * (0.5 if k + 1 in (lo, n_steps) else 1.0)
    tail_avg = acc * dt / ((n_steps - lo) * dt)
    means = np.cumsum(tail_avg) / np.arange(1, N_max + 1)
    return np.array([(N, means[int(N) - 1] - g_md_ref) for N in N_list])


@dataclass
class HittingTimeStats:
    counts: np.ndarray
    bin_edges: np.ndarray
    rate: float
    ks_distance: float
    n_gaps: int


def gap_statistics(times: Sequence[float], n_bins: int) -> HittingTimeStats:
    """Histogram + exponential fit of successive gaps of an event-time list."""
    times = np.sort(np.asarray(times, dtype=float))
    if times.size < 20:
        raise InsufficientDataError(f"need >= 20 crossings, got {times.size}")
    gaps = np.diff(times)
    counts, edges = np.histogram(gaps, bins=n_bins)
    rate = 1.0 / float(np.mean(gaps))
    srt = np.sort(gaps)
    n = srt.size
    cdf = 1.0 - np.exp(-rate * srt)
    ks = float(np.max(np.maximum(cdf - np.arange(n) / n,
                                 np.arange(1, n + 1) / n - cdf)))
    return HittingTimeStats(counts, edges, rate, ks, n)


def hitting_time_histogram(traj: Trajectory, plane: PlaneMode,
                           n_bins: int) -> HittingTimeStats:
    """Gap statistics of the trajectory's crossings of one plane."""
    ts, _, _ = _plane_crossings(traj, plane.point, plane.normal)
    return gap_statistics(ts, n_bins)
