"""Explicit time integration: Lax-Friedrichs with dimensional splitting.

Each step freezes the nonlocal quantities computed from the pre-step
state, then performs an x sweep followed by a y sweep of conservative
Lax-Friedrichs for every population.  For the deviation family the flux
is q(rho) * (dir + I) with the speed law inside the flux; for the
differentiable family the speed is folded into the advection field and
the flux is linear in rho.  Mass crossing the domain boundary is
accounted per step so that conservation is an exact identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import (BoundViolationError, ConfigurationError, NumericError)
from .grid import GridSpec, PopulationField
from .kernel import SampledKernel
from .nonlocal_ops import NonlocalOperator
from .velocity import (DirectionField, SpeedLaw, clamped_speed_arg,
                       smoothed_total_density)

DIFFERENTIABLE = "differentiable"
DEVIATION = "deviation"

MAX_PRINCIPLE_TOL = 1e-6
DT_FLOOR = 1e-12


@dataclass
class ModelSpec:
    family: str
    grid: GridSpec
    laws: tuple[SpeedLaw, ...]
    dirs: tuple[DirectionField, ...]
    kernels: tuple[SampledKernel, ...] = ()
    ops: tuple[NonlocalOperator, ...] = ()
    R: float = 1.0
    cfl: float = 0.9
    t_max: float = 1.0
    snapshot_times: tuple[float, ...] = ()
    strict: bool = False

    def __post_init__(self):
        if self.family not in (DIFFERENTIABLE, DEVIATION):
            raise ConfigurationError(f"unknown model family {self.family!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigurationError("CFL number must be in (0, 1]")
        if self.t_max < 0:
            raise ConfigurationError("t_max must be nonnegative")
        if self.family == DIFFERENTIABLE and len(self.kernels) != self.n:
            raise ConfigurationError("differentiable family needs one kernel "
                                     "per population")
        if self.family == DEVIATION and len(self.ops) != self.n:
            raise ConfigurationError("deviation family needs one nonlocal "
                                     "operator per population")
        if any(t < 0 or t > self.t_max + 1e-12 for t in self.snapshot_times):
            raise ConfigurationError("snapshot times must lie in [0, t_max]")

    @property
    def n(self) -> int:
        return len(self.laws)


@dataclass(frozen=True)
class StepReport:
    t: float
    dt: float
    mass: np.ndarray
    min: np.ndarray
    max: np.ndarray
    outflow: np.ndarray


@dataclass
class Trajectory:
    """Per-step snapshots of a run, for the linearized solver."""

    model: ModelSpec
    times: list[float]          # step start times, plus the final time
    dts: list[float]
    states: list[PopulationField]  # states[k] is the state at times[k]

    @property
    def t_final(self) -> float:
        return self.times[-1]


@dataclass
class RunResult:
    state: PopulationField
    reports: list[StepReport]
    escaped: np.ndarray
    trajectory: Trajectory | None = None


@lru_cache(maxsize=32)
def _boundary_layout(grid: GridSpec):
    """Exit-copy masks for the four boundary sides and wall face masks."""
    tol = 1e-9 * max(grid.width, grid.height)
    copy = {s: np.zeros(grid.ny if s in ("left", "right") else grid.nx,
                        dtype=bool) for s in ("left", "right", "bottom", "top")}
    for side, lo, hi in grid.exits:
        coords = grid.yc if side in ("left", "right") else grid.xc
        copy[side] |= (coords > lo - tol) & (coords < hi + tol)
    # wall faces: room edges strictly inside the domain
    xwall = np.zeros((grid.nx + 1, grid.ny), dtype=bool)
    ywall = np.zeros((grid.nx, grid.ny + 1), dtype=bool)
    rx0, ry0, rx1, ry1 = grid.room
    inx = (grid.xc > rx0 - tol) & (grid.xc < rx1 + tol)
    iny = (grid.yc > ry0 - tol) & (grid.yc < ry1 + tol)
    for xe in (rx0, rx1):
        if grid.x0 + tol < xe < grid.x1 - tol:
            i = int(round((xe - grid.x0) / grid.dx))
            if abs(grid.x0 + i * grid.dx - xe) <= tol:
                xwall[i, iny] = True
    for ye in (ry0, ry1):
        if grid.y0 + tol < ye < grid.y1 - tol:
            j = int(round((ye - grid.y0) / grid.dy))
            if abs(grid.y0 + j * grid.dy - ye) <= tol:
                ywall[inx, j] = True
    return copy, xwall, ywall


def apply_boundary(state: PopulationField, grid: GridSpec) -> np.ndarray:
    """State padded with one ghost layer, shape (n, nx+2, ny+2).

    Ghost cells copy the adjacent interior cell on exit segments
    (zero-gradient outflow) and are zero elsewhere.  Corners are zero.
    """
    copy, _, _ = _boundary_layout(grid)
    n = state.n
    padded = np.zeros((n, grid.nx + 2, grid.ny + 2))
    padded[:, 1:-1, 1:-1] = state.data
    padded[:, 0, 1:-1] = state.data[:, 0, :] * copy["left"]
    padded[:, -1, 1:-1] = state.data[:, -1, :] * copy["right"]
    padded[:, 1:-1, 0] = state.data[:, :, 0] * copy["bottom"]
    padded[:, 1:-1, -1] = state.data[:, :, -1] * copy["top"]
    return padded


def advection_field(state: PopulationField, model: ModelSpec) -> np.ndarray:
    """Frozen per-step field multiplying the scalar flux, shape (n, 2, nx, ny).

    Differentiable family: the full velocity v_i(smoothed total) * dir_i
    (the flux is then linear in rho).  Deviation family: dir_i + I_i(rho)
    (the flux is q_i(rho) times this field).
    """
    n, g = model.n, model.grid
    W = np.empty((n, 2, g.nx, g.ny))
    if model.family == DIFFERENTIABLE:
        arg = clamped_speed_arg(smoothed_total_density(state, model.kernels))
        for i in range(n):
            W[i] = model.laws[i].v(arg)[None, :, :] * model.dirs[i].total
    else:
        for i in range(n):
            W[i] = model.dirs[i].total + model.ops[i](state)
    return W


def _flux_is_linear(model: ModelSpec) -> bool:
    return model.family == DIFFERENTIABLE


def cfl_dt(state: PopulationField, V: np.ndarray, laws: Sequence[SpeedLaw],
           cfl: float, dt_cap: float = np.inf,
           linear_flux: bool = False) -> float:
    """Stable time step for the split Lax-Friedrichs sweeps.

    V is the advection field of `advection_field`.  The characteristic
    speed is |q'(rho)| |V component| (q' = 1 when the flux is linear);
    dt = cfl * min(dx, dy) / sup speed, floored at 1e-12 and capped at
    dt_cap when no wave moves.
    """
    g = state.grid
    smax = 0.0
    for i in range(state.n):
        vmax = np.abs(V[i]).max()
        if linear_flux:
            s = float(vmax)
        else:
            dq = np.abs(laws[i].dq(np.clip(state.data[i], 0.0, laws[i].R)))
            s = float((dq[None, :, :] * np.abs(V[i])).max())
        smax = max(smax, s)
    if smax <= 0.0:
        if not np.isfinite(dt_cap):
            raise ConfigurationError("zero maximal speed and no time-step cap")
        return dt_cap
    return float(min(max(cfl * min(g.dx, g.dy) / smax, DT_FLOOR), dt_cap))


def _sweep(rho: np.ndarray, a: np.ndarray, qfun, lam: float,
           copy_lo: np.ndarray, copy_hi: np.ndarray,
           wall_faces: np.ndarray) -> tuple[np.ndarray, float]:
    """One conservative LxF sweep along axis 0.

    Returns the updated field and the net outgoing boundary flux (per
    unit time and unit transverse length).  A population whose advection
    component vanishes identically has zero flux and is left untouched.
    """
    if not a.any():
        return rho, 0.0
    m = rho.shape[0]
    rho_pad = np.empty((m + 2, rho.shape[1]))
    rho_pad[1:-1] = rho
    rho_pad[0] = rho[0] * copy_lo
    rho_pad[-1] = rho[-1] * copy_hi
    a_pad = np.empty_like(rho_pad)
    a_pad[1:-1] = a
    a_pad[0] = a[0] * copy_lo
    a_pad[-1] = a[-1] * copy_hi
    f = qfun(rho_pad) * a_pad
    F = 0.5 * (f[:-1] + f[1:]) - 0.5 * lam * (rho_pad[1:] - rho_pad[:-1])
    F[wall_faces] = 0.0
    new = rho - (1.0 / lam) * (F[1:] - F[:-1])
    out = float(F[-1].sum() - F[0].sum())
    return new, out


def split_step(state: PopulationField, model: ModelSpec, dt: float,
               W: np.ndarray | None = None,
               ) -> tuple[PopulationField, np.ndarray]:
    """Advance all populations by dt: x sweep then y sweep, frozen W.

    Returns the new state and the per-population mass that crossed the
    domain boundary during the step (positive means outflow).
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    if W is None:
        W = advection_field(state, model)
    g = state.grid
    copy, xwall, ywall = _boundary_layout(g)
    linear = _flux_is_linear(model)
    lam_x = g.dx / dt
    lam_y = g.dy / dt
    new = np.empty_like(state.data)
    outflow = np.zeros(state.n)
    for i in range(state.n):
        qfun = (lambda r: r) if linear else model.laws[i].q
        r, out_x = _sweep(state.data[i], W[i, 0], qfun, lam_x,
                          copy["left"], copy["right"], xwall)
        r, out_y = _sweep(r.T, W[i, 1].T, qfun, lam_y,
                          copy["bottom"], copy["top"], ywall.T)
        new[i] = r.T
        outflow[i] = dt * (g.dy * out_x + g.dx * out_y)
        if not np.all(np.isfinite(new[i])):
            bad = np.argwhere(~np.isfinite(new[i]))[0]
            raise NumericError(
                f"non-finite density in population {i} at cell "
                f"({g.xc[bad[0]]:.4g}, {g.yc[bad[1]]:.4g})")
    return PopulationField(g, new), outflow


def run(model: ModelSpec, datum: PopulationField,
        on_snapshot: Callable[[float, PopulationField], None] | None = None,
        on_step: Callable[[StepReport, PopulationField, np.ndarray], None] | None = None,
        forced_dts: Sequence[float] | None = None,
        record: bool = False) -> RunResult:
    """Integrate the model from the datum to t_max.

    Snapshot times are hit exactly (dt truncated at them).  on_step
    receives (report, state, frozen advection field) after every step.
    When forced_dts is given the recorded sequence is replayed instead of
    the CFL controller; it must reach t_max.
    """
    if datum.grid is not model.grid and datum.grid != model.grid:
        raise ConfigurationError("datum grid does not match model grid")
    state = datum.copy()
    if model.family == DEVIATION:
        lo, hi = state.data.min(), state.data.max()
        if lo < -MAX_PRINCIPLE_TOL or hi > model.R + MAX_PRINCIPLE_TOL:
            raise ConfigurationError(
                f"deviation-family datum must lie in [0, R]; got [{lo}, {hi}]")
    events = sorted({float(s) for s in model.snapshot_times} | {model.t_max})
    reports: list[StepReport] = []
    escaped = np.zeros(model.n)
    traj = Trajectory(model, [0.0], [], [state.copy()]) if record else None

    t = 0.0
    if on_snapshot is not None and any(abs(e) <= 1e-12 for e in events):
        on_snapshot(0.0, state)
    events = [e for e in events if e > 1e-12]
    step = 0
    linear = _flux_is_linear(model)
    while t < model.t_max - 1e-12:
        next_event = events[0]
        W = advection_field(state, model)
        if forced_dts is not None:
            if step >= len(forced_dts):
                raise ConfigurationError("forced dt sequence too short")
            dt = float(forced_dts[step])
        else:
            dt = cfl_dt(state, W, model.laws, model.cfl,
                        dt_cap=next_event - t, linear_flux=linear)
            dt = min(dt, next_event - t)
        state, outflow = split_step(state, model, dt, W)
        escaped += outflow
        t += dt
        step += 1
        report = StepReport(
            t=t, dt=dt, mass=state.mass(),
            min=state.data.min(axis=(1, 2)), max=state.data.max(axis=(1, 2)),
            outflow=outflow)
        reports.append(report)
        if record:
            traj.times.append(t)
            traj.dts.append(dt)
            traj.states.append(state.copy())
        if model.strict and model.family == DEVIATION:
            if (report.min.min() < -MAX_PRINCIPLE_TOL
                    or report.max.max() > model.R + MAX_PRINCIPLE_TOL):
                raise BoundViolationError(
                    f"maximum principle violated at t={t:.6g}: "
                    f"range [{report.min.min():.3e}, {report.max.max():.6f}]")
        if on_step is not None:
            on_step(report, state, W)
        while events and t >= events[0] - 1e-12:
            if on_snapshot is not None:
                on_snapshot(events[0], state)
            events.pop(0)
    return RunResult(state=state, reports=reports, escaped=escaped,
                     trajectory=traj)
