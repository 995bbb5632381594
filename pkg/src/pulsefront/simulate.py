"""IMEX time integration of the two-species competition system.

    u1_t =   u1_xx + u1 f1(u1, x) -   k u1 u2
    u2_t = d u2_xx + u2 f2(u2, x) - a k u1 u2      (a = alpha)

Diffusion is implicit (one constant tridiagonal solve per species and step,
homogeneous Neumann at the window edges); growth and competition are
explicit.  The window follows the front by whole periods so that the
periodic coefficients stay aligned with the grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.special import expit

from .errors import BlowupError, NumericalFailure, WindowOverflowError
from .reaction import PeriodicReaction

log = logging.getLogger(__name__)

BOX_EPS = 1e-8


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid over ``periods`` whole periods.

    Node ``j`` sits at ``(offset + j) * dx``; ``offset`` is an integer so
    that window shifts never accumulate rounding error.
    """

    period: float = 1.0
    nodes_per_period: int = 256
    periods: int = 40
    offset: int = 0

    def __post_init__(self):
        if self.nodes_per_period < 64:
            raise ValueError("nodes_per_period must be at least 64")

    @property
    def dx(self) -> float:
        return self.period / self.nodes_per_period

    @property
    def n(self) -> int:
        return self.periods * self.nodes_per_period + 1

    @property
    def x0(self) -> float:
        return self.offset * self.dx

    @property
    def length(self) -> float:
        return self.periods * self.period

    @property
    def x(self) -> np.ndarray:
        return (self.offset + np.arange(self.n)) * self.dx

    def shifted(self, periods: int) -> "Grid1D":
        return replace(self, offset=self.offset + periods * self.nodes_per_period)


@dataclass(frozen=True)
class SystemParams:
    d: float
    alpha: float
    k: float
    r1: PeriodicReaction
    r2: PeriodicReaction

    def default_dt(self) -> float:
        a1, a2 = self.r1.zero_level, self.r2.zero_level
        return 0.5 / (self.k * max(a1 * self.alpha, a2) + max(self.r1.m_max, self.r2.m_max))


@dataclass
class SystemState:
    t: float
    u1: np.ndarray
    u2: np.ndarray
    grid: Grid1D

    def combined(self, params: SystemParams):
        """``(v_d, v_1) = (alpha u1 - d u2, alpha u1 - u2)``."""
        v_d = params.alpha * self.u1 - params.d * self.u2
        v_1 = params.alpha * self.u1 - self.u2
        return v_d, v_1

    def in_box(self, a1, a2, eps=BOX_EPS) -> bool:
        return bool(
            np.all(np.isfinite(self.u1)) and np.all(np.isfinite(self.u2))
            and self.u1.min() >= -eps and self.u2.min() >= -eps
            and self.u1.max() <= a1 + eps and self.u2.max() <= a2 + eps
        )


def _sigmoid(y):
    return expit(y)


def initial_front(grid: Grid1D, a1: float, a2: float, interface_x: float, width: float) -> SystemState:
    """Species 1 on the left, species 2 on the right, smooth sigmoid transition."""
    x = grid.x
    if not (x[0] < interface_x < x[-1]):
        raise ValueError(f"interface {interface_x} outside the domain [{x[0]}, {x[-1]}]")
    if not width > 0:
        raise ValueError("width must be positive")
    u1 = a1 * _sigmoid((interface_x - x) / width)
    u2 = a2 * _sigmoid((x - interface_x) / width)
    return SystemState(0.0, np.clip(u1, 0.0, a1), np.clip(u2, 0.0, a2), grid)


# ---------------------------------------------------------------------------
# tridiagonal solve with a factorisation reused over all steps


def _factorize(n, r):
    """Thomas factors of ``I - r D2`` with ghost-node Neumann rows."""
    sub = np.full(n, -r)
    sup = np.full(n, -r)
    diag = np.full(n, 1 + 2 * r)
    sup[0] = -2 * r
    sub[-1] = -2 * r
    cp = np.empty(n)
    inv = np.empty(n)
    inv[0] = 1.0 / diag[0]
    cp[0] = sup[0] * inv[0]
    for i in range(1, n):
        den = diag[i] - sub[i] * cp[i - 1]
        if den == 0:
            raise NumericalFailure("singular diffusion matrix")
        inv[i] = 1.0 / den
        cp[i] = sup[i] * inv[i]
    return sub, cp, inv


@njit(cache=True)
def _thomas(sub, cp, inv, rhs, out):
    n = rhs.shape[0]
    out[0] = rhs[0] * inv[0]
    for i in range(1, n):
        out[i] = (rhs[i] - sub[i] * out[i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        out[i] -= cp[i] * out[i + 1]


class ImexStepper:
    """Fixed-step integrator for one parameter set on one grid size."""

    def __init__(self, params: SystemParams, grid: Grid1D, dt: float | None = None):
        self.params = params
        self.dt = params.default_dt() if dt is None else dt
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.n = grid.n
        h2 = grid.dx**2
        self._f1 = _factorize(self.n, self.dt / h2)
        self._f2 = _factorize(self.n, self.dt * params.d / h2)
        # coefficients are periodic and the window moves by whole periods,
        # so f evaluated on the initial x grid stays valid
        self._x = grid.x
        self.clamps = 0
        self.node_steps = 0

    def rhs(self, u1, u2):
        p = self.params
        comp = p.k * u1 * u2
        g1 = u1 * p.r1.eval(u1, self._x) - comp
        g2 = u2 * p.r2.eval(u2, self._x) - p.alpha * comp
        return g1, g2

    def step(self, state: SystemState) -> SystemState:
        dt = self.dt
        g1, g2 = self.rhs(state.u1, state.u2)
        b1 = state.u1 + dt * g1
        b2 = state.u2 + dt * g2
        u1 = np.empty_like(b1)
        u2 = np.empty_like(b2)
        _thomas(*self._f1, b1, u1)
        _thomas(*self._f2, b2, u2)
        if not (np.isfinite(u1).all() and np.isfinite(u2).all()):
            raise BlowupError("non-finite values in the solution", state.t + dt)
        u1, u2 = self._clamp(u1, u2)
        self.node_steps += 2 * self.n
        return SystemState(state.t + dt, u1, u2, state.grid)

    def _clamp(self, u1, u2):
        a1, a2 = self.params.r1.zero_level, self.params.r2.zero_level
        bad1 = (u1 < 0) | (u1 > a1)
        bad2 = (u2 < 0) | (u2 > a2)
        nbad = int(bad1.sum() + bad2.sum())
        if nbad:
            # sub-roundoff excursions are not counted as clamp events
            big = int(((u1 < -BOX_EPS) | (u1 > a1 + BOX_EPS)).sum() + ((u2 < -BOX_EPS) | (u2 > a2 + BOX_EPS)).sum())
            self.clamps += big
            u1 = np.clip(u1, 0.0, a1)
            u2 = np.clip(u2, 0.0, a2)
        return u1, u2

    @property
    def clamp_fraction(self) -> float:
        return self.clamps / max(self.node_steps, 1)


def step(state: SystemState, params: SystemParams, dt: float) -> SystemState:
    """Single IMEX step (builds a throwaway stepper; use :class:`ImexStepper` in loops)."""
    return ImexStepper(params, state.grid, dt).step(state)


# ---------------------------------------------------------------------------
# front tracking


def crossing_u1(u1, x, level):
    """Leftmost position where ``u1`` drops below ``level`` (linear interpolation)."""
    below = np.nonzero(u1 < level)[0]
    if below.size == 0 or below[0] == 0:
        return np.nan
    i = below[0]
    w = (u1[i - 1] - level) / (u1[i - 1] - u1[i])
    return x[i - 1] + w * (x[i] - x[i - 1])


def crossing_u2(u2, x, level):
    """Rightmost position where ``u2`` is below ``level`` (linear interpolation)."""
    below = np.nonzero(u2 < level)[0]
    if below.size == 0 or below[-1] == len(u2) - 1:
        return np.nan
    j = below[-1]
    w = (level - u2[j]) / (u2[j + 1] - u2[j])
    return x[j] + w * (x[j + 1] - x[j])


def shift_window(state: SystemState, periods: int) -> SystemState:
    """Move the window by whole periods (positive = to the right).

    Retained nodes are copied exactly; uncovered nodes repeat the edge value,
    which is the far-field extinction state.
    """
    if periods == 0:
        return state
    m = periods * state.grid.nodes_per_period
    n = state.grid.n
    if abs(m) >= n:
        raise WindowOverflowError("shift larger than the window")

    def move(u):
        out = np.empty_like(u)
        if m > 0:
            out[: n - m] = u[m:]
            out[n - m :] = u[-1]
        else:
            out[-m:] = u[: n + m]
            out[:-m] = u[0]
        return out

    return SystemState(state.t, move(state.u1), move(state.u2), state.grid.shifted(periods))


@dataclass
class ProbeConfig:
    output_dt: float = 0.05
    guard_periods: int = 5
    snapshot_every: int = 1
    # half-width (in periods) of the stored field window around the front
    snapshot_half_periods: int = 4


@dataclass
class Snapshot:
    t: float
    start: int  # absolute node index of the first stored node
    u1: np.ndarray
    u2: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    crossing1: np.ndarray
    crossing2: np.ndarray
    snapshots: list
    segregation: np.ndarray
    final: SystemState
    previous: SystemState
    dt: float
    clamps: int
    clamp_fraction: float
    shifts: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.clamp_fraction < 1e-3


def run_until_front(state: SystemState, params: SystemParams, horizon: float,
                    probe: ProbeConfig | None = None, dt: float | None = None,
                    stepper: ImexStepper | None = None) -> Trajectory:
    """Integrate to ``horizon`` logging level-set crossings and field snapshots."""
    probe = probe or ProbeConfig()
    stepper = stepper or ImexStepper(params, state.grid, dt)
    dt = stepper.dt
    a1, a2 = params.r1.zero_level, params.r2.zero_level
    grid = state.grid
    npp = grid.nodes_per_period
    per_out = max(1, int(round(probe.output_dt / dt)))
    n_out = int(np.ceil(horizon / (per_out * dt)))
    guard = probe.guard_periods * grid.period
    half = probe.snapshot_half_periods * npp

    times, c1, c2, snaps, seg = [], [], [], [], []
    shifts = 0

    def record(s: SystemState, idx):
        x = s.grid.x
        p1 = crossing_u1(s.u1, x, a1 / 2)
        p2 = crossing_u2(s.u2, x, a2 / 2)
        if not (np.isfinite(p1) and np.isfinite(p2)):
            raise WindowOverflowError(f"front left the window at t={s.t:.4g}")
        times.append(s.t)
        c1.append(p1)
        c2.append(p2)
        seg.append(float(np.trapezoid(s.u1 * s.u2, dx=s.grid.dx)))
        if idx % probe.snapshot_every == 0:
            centre = int(round((0.5 * (p1 + p2)) / s.grid.dx)) - s.grid.offset
            lo = max(0, centre - half)
            hi = min(s.grid.n, centre + half + 1)
            snaps.append(Snapshot(s.t, s.grid.offset + lo, s.u1[lo:hi].copy(), s.u2[lo:hi].copy()))
        return p1, p2

    def recentre(s: SystemState, p1, p2):
        nonlocal shifts
        mid = 0.5 * (p1 + p2)
        centre = s.grid.x0 + 0.5 * s.grid.length
        k = int(np.round((mid - centre) / s.grid.period))
        if k != 0:
            s = shift_window(s, k)
            shifts += 1
        x0, x1 = s.grid.x0, s.grid.x0 + s.grid.length
        if min(p1, p2) - x0 < guard or x1 - max(p1, p2) < guard:
            raise WindowOverflowError(
                f"front within {probe.guard_periods} periods of the window edge at t={s.t:.4g}"
            )
        return s

    p1, p2 = record(state, 0)
    state = recentre(state, p1, p2)
    previous = state
    for j in range(1, n_out + 1):
        previous = state
        for _ in range(per_out):
            state = stepper.step(state)
        p1, p2 = record(state, j)
        state = recentre(state, p1, p2)

    if stepper.clamp_fraction >= 1e-3:
        log.warning("clamp fraction %.3g exceeds 0.1%%: run flagged invalid", stepper.clamp_fraction)
    return Trajectory(
        times=np.asarray(times), crossing1=np.asarray(c1), crossing2=np.asarray(c2),
        snapshots=snaps, segregation=np.asarray(seg), final=state, previous=previous, dt=dt, clamps=stepper.clamps,
        clamp_fraction=stepper.clamp_fraction, shifts=shifts,
    )


def dump_snapshot(state: SystemState, params: SystemParams, directory) -> str:
    """Write ``snap_t<t>.csv`` with columns t, x, u1, u2, v_d; returns the path."""
    from pathlib import Path

    path = Path(directory) / f"snap_t{state.t:.6f}.csv"
    v_d, _ = state.combined(params)
    data = np.column_stack([np.full(state.grid.n, state.t), state.grid.x, state.u1, state.u2, v_d])
    np.savetxt(path, data, delimiter=",", header="t,x,u1,u2,v_d", comments="", fmt="%.10g")
    return str(path)


def extend(traj: Trajectory, params: SystemParams, extra: float, stepper: ImexStepper,
           probe: ProbeConfig | None = None) -> Trajectory:
    """Continue a trajectory by ``extra`` time units with the same stepper."""
    more = run_until_front(traj.final, params, extra, probe, stepper=stepper)
    return Trajectory(
        times=np.concatenate([traj.times, more.times[1:]]),
        crossing1=np.concatenate([traj.crossing1, more.crossing1[1:]]),
        crossing2=np.concatenate([traj.crossing2, more.crossing2[1:]]),
        snapshots=traj.snapshots + more.snapshots[1:],
        segregation=np.concatenate([traj.segregation, more.segregation[1:]]),
        final=more.final, previous=more.previous, dt=more.dt, clamps=more.clamps,
        clamp_fraction=more.clamp_fraction, shifts=traj.shifts + more.shifts,
    )
