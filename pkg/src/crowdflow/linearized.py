"""Linearized semigroup of the differentiable model and cost functionals.

The directional derivative of the solution map is obtained by evolving a
(signed) perturbation with the formally linearized flux along a stored
trajectory of the nonlinear run, using the same split Lax-Friedrichs
scheme and the recorded time-step sequence so that exact cancellations
survive discretization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, UnsupportedModelError
from .grid import PopulationField
from .kernel import convolve
from .solver import (DIFFERENTIABLE, ModelSpec, Trajectory, _boundary_layout,
                     _sweep, run)
from .velocity import clamped_speed_arg, smoothed_total_density


@dataclass
class CostSpec:
    """Integral cost at time t: J = sum f(rho(t)) psi dx dy.

    f maps the (n, nx, ny) density stack to an (nx, ny) array; fprime
    returns its gradient with respect to each population, (n, nx, ny).
    psi is a scalar or an (nx, ny) weight array.
    """

    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    psi: np.ndarray | float
    t: float


def linearized_velocity(rho: PopulationField, sigma: PopulationField,
                        model: ModelSpec) -> np.ndarray:
    """Perturbation flux (rho_i v'(arg) (sigma conv) + sigma_i v(arg)) dir_i.

    Shape (n, 2, nx, ny); arg is the total smoothed density of rho.
    """
    _require_differentiable(model)
    arg = clamped_speed_arg(smoothed_total_density(rho, model.kernels))
    sconv = smoothed_total_density(sigma, model.kernels)
    out = np.empty((model.n, 2, model.grid.nx, model.grid.ny))
    for i in range(model.n):
        coeff = (rho.data[i] * model.laws[i].dv(arg) * sconv
                 + sigma.data[i] * model.laws[i].v(arg))
        out[i] = coeff[None, :, :] * model.dirs[i].total
    return out


def _linearized_step(sigma: PopulationField, rho: PopulationField,
                     model: ModelSpec, dt: float) -> PopulationField:
    """One split LxF step of the linearized system with frozen rho."""
    g = model.grid
    copy, xwall, ywall = _boundary_layout(g)
    arg = clamped_speed_arg(smoothed_total_density(rho, model.kernels))
    sconv = smoothed_total_density(sigma, model.kernels)
    lam_x, lam_y = g.dx / dt, g.dy / dt
    new = np.empty_like(sigma.data)
    for i in range(model.n):
        a = model.laws[i].v(arg)  # advection speed of sigma_i
        e = rho.data[i] * model.laws[i].dv(arg) * sconv  # sigma-independent part
        vx, vy = model.dirs[i].total
        # flux along x: sigma * (a vx) + e vx; treated as q(s) = s with an
        # additive source flux, both carried through the same face average
        s, _ = _affine_sweep(sigma.data[i], a * vx, e * vx, lam_x,
                             copy["left"], copy["right"], xwall)
        s, _ = _affine_sweep(s.T, (a * vy).T, (e * vy).T, lam_y,
                             copy["bottom"], copy["top"], ywall.T)
        new[i] = s.T
    return PopulationField(g, new)


def _affine_sweep(s, a, e, lam, copy_lo, copy_hi, wall_faces):
    if not (a.any() or e.any()):
        return s, 0.0

    def pad(arr, lo_mask, hi_mask):
        p = np.empty((arr.shape[0] + 2, arr.shape[1]))
        p[1:-1] = arr
        p[0] = arr[0] * lo_mask
        p[-1] = arr[-1] * hi_mask
        return p

    s_pad = pad(s, copy_lo, copy_hi)
    f = s_pad * pad(a, copy_lo, copy_hi) + pad(e, copy_lo, copy_hi)
    F = 0.5 * (f[:-1] + f[1:]) - 0.5 * lam * (s_pad[1:] - s_pad[:-1])
    F[wall_faces] = 0.0
    new = s - (1.0 / lam) * (F[1:] - F[:-1])
    return new, float(F[-1].sum() - F[0].sum())


def solve_linearized(traj: Trajectory, sigma0: PopulationField,
                     t: float) -> PopulationField:
    """Evolve a perturbation to time t along the stored trajectory."""
    model = traj.model
    _require_differentiable(model)
    if t < -1e-12 or t > traj.t_final + 1e-12:
        raise ConfigurationError(
            f"time {t} outside trajectory span [0, {traj.t_final}]")
    sigma = sigma0.copy()
    elapsed = 0.0
    for k, dt in enumerate(traj.dts):
        if elapsed >= t - 1e-12:
            break
        step_dt = min(dt, t - elapsed)
        sigma = _linearized_step(sigma, traj.states[k], model, step_dt)
        elapsed += step_dt
    return sigma


def gateaux_residual(model: ModelSpec, rho0: PopulationField,
                     sigma0: PopulationField, t: float, h: float,
                     base_traj: Trajectory | None = None) -> float:
    """L1 defect of the first-order expansion at step h.

    r(h) = || S_t(rho0 + h sigma0) - S_t rho0 - h Sigma_t sigma0 ||_L1,
    with the perturbed run replaying the base run's dt sequence.
    """
    _require_differentiable(model)
    if h <= 0:
        raise ConfigurationError("h must be positive")
    m = _until(model, t)
    if base_traj is None:
        base_traj = run(m, rho0, record=True).trajectory
    perturbed = PopulationField(rho0.grid, rho0.data + h * sigma0.data)
    res_h = run(m, perturbed, forced_dts=base_traj.dts)
    sigma_t = solve_linearized(base_traj, sigma0, t)
    defect = res_h.state.data - base_traj.states[-1].data - h * sigma_t.data
    return float(np.abs(defect).sum()) * rho0.grid.cell_area


def _until(model: ModelSpec, t: float) -> ModelSpec:
    if abs(t - model.t_max) <= 1e-12:
        return model
    from dataclasses import replace
    return replace(model, t_max=t, snapshot_times=())


def cost_and_gradient(traj: Trajectory, cost: CostSpec,
                      sigma0: PopulationField) -> tuple[float, float]:
    """Evaluate the cost and its directional derivative along sigma0."""
    model = traj.model
    _require_differentiable(model)
    if cost.t < -1e-12 or cost.t > traj.t_final + 1e-12:
        raise ConfigurationError("cost time outside trajectory span")
    rho_t = _state_at(traj, cost.t)
    area = model.grid.cell_area
    psi = np.asarray(cost.psi)
    fval = cost.f(rho_t.data)
    if not np.all(np.isfinite(fval)):
        raise ConfigurationError("cost integrand not finite on attained range")
    J = float((fval * psi).sum()) * area
    sigma_t = solve_linearized(traj, sigma0, cost.t)
    fp = cost.fprime(rho_t.data)
    if not np.all(np.isfinite(fp)):
        raise ConfigurationError("cost derivative not finite on attained range")
    DJ = float((fp * sigma_t.data * psi).sum()) * area
    return J, DJ


def _state_at(traj: Trajectory, t: float) -> PopulationField:
    times = np.asarray(traj.times)
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9:
        raise ConfigurationError(
            f"time {t} not recorded in trajectory (nearest {times[k]})")
    return traj.states[k]


def _require_differentiable(model: ModelSpec) -> None:
    if model.family != DIFFERENTIABLE:
        raise UnsupportedModelError(
            "linearization is only available for the differentiable family")
