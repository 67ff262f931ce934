"""Deterministic integration of coupled consensus dynamics.

simulate_ode advances dx/dt = A(t) x with the classical fixed-step
fourth-order Runge-Kutta scheme.  Step boundaries are aligned to the
schedule breakpoints, so no step ever straddles a coupling discontinuity,
and every internal step is stored (dense output).

simulate_dde handles the delayed variant

    dx/dt = diag(A(t)) x(t) + (A(t) - diag(A(t))) x(t - tau)

by the method of steps: the horizon is cut into windows of length tau, and
inside each window the delayed values are read from the already-computed
trajectory via cubic Hermite interpolation on the stored grid, whose order
matches the integrator.  Instantaneous (diagonal) terms always use the
current state.

Trajectories keep two derivative arrays.  The solution has corners at
coupling discontinuities, so a node carries the derivative valid to its
right (derivs) and to its left (derivs_left); they differ only at
breakpoints.  Interpolation over an interval uses the right derivative of
its left node and the left derivative of its right node, which keeps the
Hermite reads at integrator order across switches.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    HistoryGap,
    OutOfHorizon,
    StepTooLargeWarning,
    WindowNotCovered,
)
from .metzler_core import CouplingSchedule, evaluate_schedule


@dataclass(frozen=True)
class StepControl:
    """Integration step request.  max_step bounds the step from above; the
    actual step inside each schedule piece divides the piece exactly.  When
    max_step is None a default is derived from the schedule bound (and the
    delay, for delayed runs)."""

    max_step: Optional[float] = None

    def __post_init__(self):
        if self.max_step is not None and not (self.max_step > 0.0):
            raise ValueError(f"max_step must be positive, got {self.max_step!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense integrator output: states and one-sided derivatives on a
    strictly increasing grid."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    derivs_left: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise ValueError("times must be 1-d and states 2-d")
        if not (len(self.times) == len(self.states)
                == len(self.derivs) == len(self.derivs_left)):
            raise ValueError("times, states, derivative array lengths disagree")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        for arr in (self.times, self.states, self.derivs, self.derivs_left):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def _normalize_step(step: Union[None, float, StepControl]) -> StepControl:
    if step is None:
        return StepControl()
    if isinstance(step, StepControl):
        return step
    return StepControl(max_step=float(step))


def _default_step(schedule: CouplingSchedule, span: float, n: int,
                  tau: Optional[float] = None) -> float:
    candidates = []
    if schedule.bound > 0.0:
        candidates.append(1.0 / (10.0 * n * schedule.bound))
    if tau is not None:
        candidates.append(tau / 20.0)
    if not candidates:
        candidates.append(span / 100.0)
    return min(min(candidates), span)


def _advise_on_step(h: float, n: int, bound: float):
    if bound > 0.0 and h > 2.0 / (n * bound):
        warnings.warn(
            f"step {h} exceeds the stability budget 2/(n*M) = {2.0 / (n * bound)}",
            StepTooLargeWarning,
            stacklevel=3,
        )


def _pieces(schedule: CouplingSchedule, t0: float, t1: float):
    """Yield (a, b, segment) covering [t0, t1], cut at schedule breakpoints."""
    for seg in schedule.segments:
        a = max(t0, seg.t_start)
        b = min(t1, seg.t_end)
        if b - a > 1e-15 * max(1.0, abs(b)):
            yield a, b, seg


def _check_horizon(schedule: CouplingSchedule, t0: float, t1: float):
    if not (t1 > t0):
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    s0, s1 = schedule.horizon
    edge = 1e-9 * max(1.0, abs(s0), abs(s1))
    if t0 < s0 - edge or t1 > s1 + edge:
        raise OutOfHorizon(
            f"integration horizon [{t0}, {t1}] outside schedule horizon [{s0}, {s1}]")


def _rk4_transfer(A: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for constant A equals the degree-4 Taylor
    polynomial of exp(hA); evaluated in Horner form."""
    eye = np.eye(A.shape[0])
    hA = h * A
    phi = eye + hA / 4.0
    phi = eye + (hA / 3.0) @ phi
    phi = eye + (hA / 2.0) @ phi
    return eye + hA @ phi


def _substeps(a: float, b: float, h_target: float):
    m = max(1, int(math.ceil((b - a) / h_target - 1e-9)))
    h = (b - a) / m
    grid = a + h * np.arange(1, m + 1)
    grid[-1] = b
    return m, h, grid


class _NodeStore:
    """Grow-only buffer of integration nodes with one-sided derivatives.

    Backed by preallocated numpy arrays with doubling, so per-step appends
    are cheap and a read-only snapshot of everything stored so far is a
    constant-time slice."""

    def __init__(self, n: int, capacity: int = 256):
        self.size = 0
        self._t = np.empty(capacity)
        self._x = np.empty((capacity, n))
        self._dr = np.empty((capacity, n))
        self._dl = np.empty((capacity, n))

    def _grow(self):
        cap = 2 * len(self._t)
        for name in ("_t", "_x", "_dr", "_dl"):
            old = getattr(self, name)
            shape = (cap,) + old.shape[1:]
            new = np.empty(shape)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def append(self, t, x, dx_right, dx_left=None):
        if self.size == len(self._t):
            self._grow()
        i = self.size
        self._t[i] = t
        self._x[i] = x
        self._dr[i] = dx_right
        self._dl[i] = dx_right if dx_left is None else dx_left
        self.size = i + 1

    def patch_right(self, dx_right):
        # A new piece begins at the last stored node: its right derivative
        # belongs to the new piece.
        self._dr[self.size - 1] = dx_right

    @property
    def last_time(self) -> float:
        return float(self._t[self.size - 1])

    def view(self):
        s = self.size
        return self._t[:s], self._x[:s], self._dr[:s], self._dl[:s]

    def arrays(self):
        t, x, dr, dl = self.view()
        return t.copy(), x.copy(), dr.copy(), dl.copy()


def simulate_ode(
    schedule: CouplingSchedule,
    x0: Sequence,
    t0: float,
    t1: float,
    step: Union[None, float, StepControl] = None,
) -> Trajectory:
    """Integrate dx/dt = A(t) x from x(t0) = x0 up to t1.

    Fixed-step classical RK4; inside each schedule piece the step divides
    the piece exactly, so breakpoints land on grid nodes.  Deterministic:
    identical inputs give identical output arrays.
    """
    _check_horizon(schedule, t0, t1)
    x = np.array(x0, dtype=float)
    n = schedule.n
    if x.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x.shape}")
    control = _normalize_step(step)
    h_target = control.max_step
    if h_target is None:
        h_target = _default_step(schedule, t1 - t0, n)
    _advise_on_step(h_target, n, schedule.bound)

    store = _NodeStore(n)
    store.append(t0, x.copy(), evaluate_schedule(schedule, t0).entries @ x)
    for a, b, seg in _pieces(schedule, t0, t1):
        m, h, grid = _substeps(a, b, h_target)
        if seg.is_constant:
            A = seg.generator.entries
            store.patch_right(A @ x)
            phi = _rk4_transfer(A, h)
            for tt in grid:
                x = phi @ x
                store.append(tt, x, A @ x)
        else:
            gen = seg.generator
            store.patch_right(gen.entries_at(a) @ x)
            tprev = a
            for tt in grid:
                k1 = gen.entries_at(tprev) @ x
                a_mid = gen.entries_at(tprev + 0.5 * h)
                k2 = a_mid @ (x + 0.5 * h * k1)
                k3 = a_mid @ (x + 0.5 * h * k2)
                a_end = gen.entries_at(tt)
                k4 = a_end @ (x + h * k3)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                store.append(tt, x, a_end @ x)
                tprev = tt
    times, states, derivs, derivs_left = store.arrays()
    meta = {
        "method": "rk4",
        "requested_step": control.max_step,
        "effective_step_target": h_target,
        "schedule_bound": schedule.bound,
    }
    return Trajectory(times=times, states=states, derivs=derivs,
                      derivs_left=derivs_left, meta=meta)


# --------------------------------------------------------------------------
# Hermite interpolation on a stored grid
# --------------------------------------------------------------------------

def _hermite_many(
    queries: np.ndarray,
    times: np.ndarray,
    states: np.ndarray,
    derivs_right: np.ndarray,
    derivs_left: np.ndarray,
    clamp_slack: float,
) -> np.ndarray:
    """Piecewise cubic Hermite evaluation at an array of query times.

    Each interval uses the right derivative of its left node and the left
    derivative of its right node.  Queries below the grid by at most
    clamp_slack are clamped to the first node."""
    q = np.asarray(queries, dtype=float)
    lo, hi = times[0], times[-1]
    if np.any(q < lo - clamp_slack) or np.any(q > hi + clamp_slack):
        raise HistoryGap(
            f"query range [{q.min()}, {q.max()}] outside stored grid [{lo}, {hi}]")
    q = np.clip(q, lo, hi)
    idx = np.searchsorted(times, q, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 2)
    h = times[idx + 1] - times[idx]
    s = (q - times[idx]) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return (h00[:, None] * states[idx]
            + (h10 * h)[:, None] * derivs_right[idx]
            + h01[:, None] * states[idx + 1]
            + (h11 * h)[:, None] * derivs_left[idx + 1])


def interpolate_state(trajectory: Trajectory, t: float) -> np.ndarray:
    """State at time t by cubic Hermite interpolation of the stored grid."""
    span = trajectory.t_end - trajectory.t_start
    slack = 1e-12 * max(1.0, span)
    return _hermite_many(
        np.array([t]), trajectory.times, trajectory.states,
        trajectory.derivs, trajectory.derivs_left, clamp_slack=slack,
    )[0]


# --------------------------------------------------------------------------
# Delayed dynamics
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DelayHistory:
    """Initial segment for a delayed run: x(s) on [t_end - tau, t_end], as
    samples with derivatives (so the segment interpolates at integrator
    order)."""

    tau: float
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        if not (self.tau > 0.0):
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("history times must be strictly increasing")
        covered = self.times[-1] - self.times[0]
        if covered < self.tau * (1.0 - 1e-9):
            raise HistoryGap(
                f"history covers {covered}, needs the full delay {self.tau}")

    @classmethod
    def constant(cls, value: Sequence, tau: float, t_end: float = 0.0) -> "DelayHistory":
        x = np.array(value, dtype=float)
        times = np.array([t_end - tau, t_end])
        return cls(
            tau=float(tau),
            times=times,
            states=np.vstack([x, x]),
            derivs=np.zeros((2, len(x))),
        )


def _coerce_history(history, tau: float, t0: float) -> DelayHistory:
    if isinstance(history, DelayHistory):
        slack = 1e-9 * max(1.0, tau)
        if history.times[0] > t0 - tau + slack or history.times[-1] < t0 - slack:
            raise HistoryGap(
                f"history grid [{history.times[0]}, {history.times[-1]}] does not "
                f"cover [{t0 - tau}, {t0}]")
        return history
    return DelayHistory.constant(history, tau, t_end=t0)


def _split_diag(entries: np.ndarray):
    d = np.diag(entries).copy()
    off = entries.copy()
    np.fill_diagonal(off, 0.0)
    return d, off


def simulate_dde(
    schedule: CouplingSchedule,
    tau: float,
    history,
    t0: float,
    t1: float,
    step: Union[None, float, StepControl] = None,
    delay_diagonal: bool = False,
) -> Trajectory:
    """Integrate the delayed dynamics by the method of steps.

    ``history`` is either a constant vector (held on [t0 - tau, t0]) or a
    DelayHistory covering that interval.  With delay_diagonal=True the
    instantaneous terms are delayed as well, i.e. dx/dt = A(t) x(t - tau);
    that variant exists to expose the destabilising effect of delaying the
    self terms and is not covered by the contraction theory.
    """
    if not (tau > 0.0):
        raise ValueError(f"tau must be positive, got {tau!r}")
    _check_horizon(schedule, t0, t1)
    hist = _coerce_history(history, tau, t0)
    n = schedule.n
    if hist.states.shape[1] != n:
        raise ValueError(
            f"history has {hist.states.shape[1]} components, schedule has {n}")
    control = _normalize_step(step)
    h_target = control.max_step
    if h_target is None:
        h_target = _default_step(schedule, t1 - t0, n, tau=tau)
    h_target = min(h_target, tau)
    _advise_on_step(h_target, n, schedule.bound)
    clamp_slack = 1e-12 * tau

    def rhs_parts(entries: np.ndarray):
        if delay_diagonal:
            return np.zeros(n), entries
        return _split_diag(entries)

    # Past grid: history samples first, then every computed node.
    past = _NodeStore(n)
    for i in range(len(hist.times)):
        past.append(hist.times[i], hist.states[i], hist.derivs[i])

    def interp_past(queries, snap=None):
        t_arr, x_arr, dr_arr, dl_arr = snap if snap is not None else past.view()
        return _hermite_many(np.asarray(queries, dtype=float), t_arr, x_arr,
                             dr_arr, dl_arr, clamp_slack=clamp_slack)

    x = interp_past([t0])[0]
    xd0 = interp_past([t0 - tau])[0]
    d, off = rhs_parts(evaluate_schedule(schedule, t0).entries)
    dx0 = d * x + off @ xd0

    store = _NodeStore(n)
    store.append(t0, x.copy(), dx0)
    if abs(past.last_time - t0) <= clamp_slack:
        past.patch_right(dx0)
    else:
        past.append(t0, x.copy(), dx0)

    w0 = t0
    span_tiny = 1e-12 * max(1.0, abs(t1 - t0))
    while w0 < t1 - span_tiny:
        w1 = min(w0 + tau, t1)
        # All delayed lookups for this window live in [w0 - tau, w1 - tau],
        # which is already computed: snapshot the past grid once per window.
        snap = past.view()
        for a, b, seg in _pieces(schedule, w0, w1):
            m, h, grid = _substeps(a, b, h_target)
            node_q = np.empty(m + 1)
            node_q[0] = a - tau
            node_q[1:] = grid - tau
            half_q = (grid - 0.5 * h) - tau
            xd_nodes = interp_past(node_q, snap)
            xd_half = interp_past(half_q, snap)
            if seg.is_constant:
                d, off = rhs_parts(seg.generator.entries)
                patch = d * x + off @ xd_nodes[0]
                store.patch_right(patch)
                past.patch_right(patch)
            else:
                d0p, off0p = rhs_parts(seg.generator.entries_at(a))
                patch = d0p * x + off0p @ xd_nodes[0]
                store.patch_right(patch)
                past.patch_right(patch)
            tprev = a
            for i, tt in enumerate(grid):
                if seg.is_constant:
                    d1 = d2 = d4 = d
                    off1 = off2 = off4 = off
                else:
                    d1, off1 = rhs_parts(seg.generator.entries_at(tprev))
                    d2, off2 = rhs_parts(seg.generator.entries_at(tprev + 0.5 * h))
                    d4, off4 = rhs_parts(seg.generator.entries_at(tt))
                k1 = d1 * x + off1 @ xd_nodes[i]
                k2 = d2 * (x + 0.5 * h * k1) + off2 @ xd_half[i]
                k3 = d2 * (x + 0.5 * h * k2) + off2 @ xd_half[i]
                k4 = d4 * (x + h * k3) + off4 @ xd_nodes[i + 1]
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                dx = d4 * x + off4 @ xd_nodes[i + 1]
                store.append(tt, x, dx)
                past.append(tt, x, dx)
                tprev = tt
        w0 = w1
    times, states, derivs, derivs_left = store.arrays()
    meta = {
        "method": "rk4-method-of-steps",
        "tau": tau,
        "delay_diagonal": delay_diagonal,
        "requested_step": control.max_step,
        "effective_step_target": h_target,
        "schedule_bound": schedule.bound,
    }
    return Trajectory(times=times, states=states, derivs=derivs,
                      derivs_left=derivs_left, meta=meta)


# --------------------------------------------------------------------------
# Series extracted from trajectories
# --------------------------------------------------------------------------

def spread_series(trajectory: Trajectory) -> list:
    """(time, max - min) at every stored node."""
    values = trajectory.states.max(axis=1) - trajectory.states.min(axis=1)
    return [(float(t), float(v)) for t, v in zip(trajectory.times, values)]


def delayed_functional_series(trajectory: Trajectory, tau: float) -> list:
    """Sliding-window spread: max over [t - tau, t] minus min over it.

    Reported for every stored node t with the full window inside the
    trajectory.  The window edge t - tau generally falls between grid nodes
    and is interpolated at integrator order.
    """
    if not (tau > 0.0):
        raise ValueError(f"tau must be positive, got {tau!r}")
    times = trajectory.times
    states = trajectory.states
    tiny = 1e-12 * max(1.0, tau)
    first = int(np.searchsorted(times, times[0] + tau - tiny, side="left"))
    if first >= len(times):
        raise WindowNotCovered(
            f"trajectory spans {times[-1] - times[0]}, needs at least tau = {tau}")
    edge_q = times[first:] - tau
    edge_states = _hermite_many(
        edge_q, times, states, trajectory.derivs, trajectory.derivs_left,
        clamp_slack=tiny)
    out = []
    lo_idx = np.searchsorted(times, edge_q, side="left")
    for j, i in enumerate(range(first, len(times))):
        window = states[lo_idx[j]: i + 1]
        w_max = max(float(window.max()), float(edge_states[j].max()))
        w_min = min(float(window.min()), float(edge_states[j].min()))
        out.append((float(times[i]), w_max - w_min))
    return out
