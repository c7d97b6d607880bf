"""A-priori bound evaluators and measured-vs-bound comparisons.

All estimates are worst-case envelopes: comparisons assert domination
only, never tightness, and slack factors of several orders of magnitude
are normal.  Exponents can exceed float range for rough data; the
stability evaluator therefore also reports the bound in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import ConfigurationError
from .grid import GridSpec, PopulationField
from .kernel import KernelSpec
from .solver import DEVIATION, Trajectory
from .velocity import DirectionField

LOG_MAX = 700.0  # exp argument beyond which float64 overflows


def wd(d: int) -> float:
    """int_0^{pi/2} cos(theta)^d dtheta, by adaptive quadrature."""
    if d < 0 or int(d) != d:
        raise ConfigurationError("dimension must be a nonnegative integer")
    val, _ = quad(lambda th: math.cos(th) ** d, 0.0, math.pi / 2,
                  epsabs=1e-13, epsrel=1e-13)
    return val


@dataclass
class BoundInputs:
    """Norms feeding the bound evaluators; unused entries may stay NaN.

    Data norms are of the initial datum; speed-law norms are over the
    certified density range; direction and kernel norms are continuum
    sup/L1 norms (computed analytically or by dense scan, see the
    *_norms helpers).  grad_v_sup is the measured running sup of the
    gradient of the assembled advection field.
    """

    d: int = 2
    n1: float = math.nan          # L1 norm of the datum (all populations)
    linf0: float = math.nan
    tv0: float = math.nan
    v_sup: float = math.nan
    dv_sup: float = math.nan
    ddv_sup: float = math.nan
    dv_l1: float = math.nan       # L1 norm of v' over the density range
    q_sup: float = math.nan
    dq_sup: float = math.nan
    vec_sup: float = math.nan
    vec_l1: float = math.nan
    vec_grad_sup: float = math.nan
    vec_grad_l1: float = math.nan
    div_sup: float = math.nan
    divvec_l1: float = math.nan
    graddiv_l1: float = math.nan
    eta_sup: float = math.nan
    grad_eta_sup: float = math.nan
    hess_eta_sup: float = math.nan
    ci: float = math.nan
    grad_v_sup: float = math.nan

    @property
    def v_w1inf(self) -> float:
        return self.v_sup + self.dv_sup

    @property
    def vec_w1inf(self) -> float:
        return self.vec_sup + self.vec_grad_sup

    @property
    def vec_w11(self) -> float:
        return self.vec_l1 + self.vec_grad_l1

    @property
    def grad_eta_w1inf(self) -> float:
        return self.grad_eta_sup + self.hess_eta_sup


def kappa0(inputs: BoundInputs) -> float:
    """(2d + 1) sup|q'| sup|grad V|."""
    return (2 * inputs.d + 1) * inputs.dq_sup * inputs.grad_v_sup


def tv_bound_deviation(t: float, inputs: BoundInputs) -> float:
    """TV envelope of the deviation model at time t."""
    k0 = kappa0(inputs)
    cd = inputs.d * wd(inputs.d)
    growth = _exp(k0 * t)
    return (inputs.tv0 * growth
            + cd * growth * inputs.q_sup * (inputs.ci + inputs.div_sup) * t)


def k1_constant(inputs: BoundInputs) -> float:
    return inputs.v_w1inf * inputs.vec_w1inf * (inputs.n1 * inputs.grad_eta_sup + 1.0)


def k2_constant(inputs: BoundInputs) -> float:
    return (inputs.v_w1inf * inputs.vec_w11
            * (inputs.n1 ** 2 * inputs.grad_eta_sup ** 2
               + 2.0 * inputs.n1 * inputs.grad_eta_w1inf + 1.0))


def bounds_differentiable(t: float, inputs: BoundInputs) -> tuple[float, float]:
    """(L-infinity bound, TV bound) for the differentiable model at time t."""
    k1 = k1_constant(inputs)
    k2 = k2_constant(inputs)
    d = inputs.d
    linf_bound = inputs.linf0 * _exp(k1 * t)
    tv_bound = (inputs.tv0 * _exp((2 * d + 1) * k1 * t)
                + t * _exp(k1 * t) * d * wd(d) * k2 * inputs.linf0)
    return linf_bound, tv_bound


@dataclass
class ParameterDeltas:
    """Norms of the differences between two model configurations."""

    drho0_l1: float = 0.0
    dq_sup: float = 0.0       # sup |q1 - q2|
    ddq_sup: float = 0.0      # sup |q1' - q2'|
    dvec_sup: float = 0.0     # sup |vec v1 - vec v2|
    ddivvec_l1: float = 0.0   # L1 of div(vec v1 - vec v2)
    deta_w1inf: float = 0.0   # W1,inf norm of eta1 - eta2
    dv_w1inf: float = 0.0     # W1,inf norm of v1 - v2
    dvec_w11: float = 0.0     # W1,1 norm of vec v1 - vec v2


@dataclass(frozen=True)
class StabilityBound:
    value: float       # may be inf when the exponent overflows
    log_value: float   # always finite; log of the bound
    a: float
    b: float


def stability_bound_deviation(t: float, inputs1: BoundInputs,
                              inputs2: BoundInputs,
                              deltas: ParameterDeltas) -> StabilityBound:
    """Gronwall-type L1 distance envelope for two deviation-model runs.

    Evaluates the growth functions a(t) (parameter-difference forcing)
    and b(t) (Lipschitz feedback rate) and returns
    (1 + t exp(t b)) (||rho0 difference||_L1 + a(t)).
    """
    ci = inputs1.ci
    k0 = kappa0(inputs1)
    cd = inputs1.d * wd(inputs1.d)
    tv_growth = (inputs1.tv0
                 + t * cd * inputs1.q_sup * (ci + inputs1.graddiv_l1))
    ek = _exp(k0 * t)
    a = t * ((ci + inputs2.vec_sup) * ek * tv_growth * deltas.ddq_sup
             + (ci + inputs2.divvec_l1) * deltas.dq_sup
             + inputs1.q_sup * deltas.ddivvec_l1
             + ek * inputs1.dq_sup * tv_growth * deltas.dvec_sup)
    b = ci * (ek * inputs1.dq_sup * tv_growth + inputs1.q_sup)
    base = deltas.drho0_l1 + a
    x = t * b
    if x < LOG_MAX:
        factor = 1.0 + t * math.exp(x)
        value = factor * base
        log_value = math.log(value) if value > 0 else -math.inf
    else:
        value = math.inf if base > 0 else 0.0
        log_value = (math.log(t) + x + math.log(base)
                     if base > 0 and t > 0 else -math.inf)
    return StabilityBound(value=value, log_value=log_value, a=a, b=b)


def stability_bound_differentiable(t: float, inputs1: BoundInputs,
                                   inputs2: BoundInputs,
                                   deltas: ParameterDeltas) -> StabilityBound:
    """Companion envelope for the differentiable model.

    Same interface as stability_bound_deviation; realizes the explicit
    coefficient functions of the datum/parameter stability estimate.
    """
    d = inputs1.d
    k1 = k1_constant(inputs1)
    k2 = k2_constant(inputs1)
    f = _exp((2 * d + 1) * k1 * t) * (inputs1.tv0
                                      + t * d * wd(d) * k2 * inputs1.linf0)
    bigk = max(
        inputs1.v_w1inf * inputs1.vec_w1inf * (inputs1.n1 * inputs1.grad_eta_sup + 1.0),
        inputs2.v_w1inf * inputs2.vec_w1inf * (inputs2.n1 * inputs2.grad_eta_sup + 1.0))
    rmax = max(inputs1.linf0, inputs2.linf0)
    ekt = _exp(bigk * t)
    alpha = (inputs1.ddv_sup * inputs1.eta_sup * inputs1.n1
             * inputs1.grad_eta_sup * inputs1.vec_l1
             + inputs2.dv_sup * inputs1.grad_eta_sup * inputs1.vec_l1
             + inputs1.dv_sup * inputs1.eta_sup * inputs1.divvec_l1)
    beta = (inputs1.ddv_sup * inputs2.n1 * inputs1.n1
            * inputs1.grad_eta_sup * inputs1.vec_l1
            + inputs1.dv_l1 * inputs2.n1 * inputs1.divvec_l1
            + inputs2.dv_sup * inputs2.n1 * inputs1.vec_l1)
    gamma = inputs1.divvec_l1 + inputs1.n1 * inputs1.grad_eta_sup * inputs1.vec_l1
    delta = inputs2.dv_sup * inputs2.n1 * inputs2.grad_eta_sup + inputs2.v_sup
    alpha_p = inputs1.dv_sup * inputs1.eta_sup
    beta_p = inputs1.dv_sup * inputs2.n1 * inputs1.vec_sup
    gamma_p = inputs1.vec_sup
    delta_p = inputs2.v_sup
    a_eta = beta_p * f + beta * rmax * ekt
    a_v = gamma_p * f + gamma * rmax * ekt
    a_vec = delta_p * f + delta * rmax * ekt
    base = (deltas.drho0_l1 + t * a_eta * deltas.deta_w1inf
            + t * a_v * deltas.dv_w1inf
            + t * a_vec * (deltas.dvec_sup + deltas.dvec_w11))
    rate = f * alpha_p + rmax * ekt * alpha
    x = t * rate
    if x < LOG_MAX and np.isfinite(rate):
        factor = 1.0 + t * rate * math.exp(x)
        value = factor * base
        log_value = math.log(value) if value > 0 else -math.inf
    else:
        value = math.inf if base > 0 else 0.0
        log_value = math.inf if base > 0 else -math.inf
    return StabilityBound(value=value, log_value=log_value, a=base, b=rate)


@dataclass
class InvarianceReport:
    times: list[float]
    mins: list[np.ndarray]
    maxs: list[np.ndarray]
    ok: bool
    tol: float = 1e-6


def check_invariance(traj: Trajectory, R: float,
                     tol: float = 1e-6) -> InvarianceReport:
    """Min/max per population per snapshot; pass iff within [-tol, R+tol]."""
    if traj.model.family != DEVIATION:
        raise ConfigurationError("invariance check targets the deviation family")
    times, mins, maxs = [], [], []
    ok = True
    for t, st in zip(traj.times, traj.states):
        lo = st.data.min(axis=(1, 2))
        hi = st.data.max(axis=(1, 2))
        times.append(t)
        mins.append(lo)
        maxs.append(hi)
        if lo.min() < -tol or hi.max() > R + tol:
            ok = False
    return InvarianceReport(times=times, mins=mins, maxs=maxs, ok=ok, tol=tol)


# ---------------------------------------------------------------------------
# norm helpers feeding BoundInputs


def sup_gradient(V: np.ndarray, grid: GridSpec) -> float:
    """Sup over cells of the entrywise 1-norm of the velocity Jacobian.

    Accepts (2, nx, ny) or (n, 2, nx, ny); central differences.
    """
    if V.ndim == 3:
        V = V[None]
    best = 0.0
    for vi in V:
        total = np.zeros(vi.shape[1:])
        for comp in vi:
            total += np.abs(np.gradient(comp, grid.dx, axis=0))
            total += np.abs(np.gradient(comp, grid.dy, axis=1))
        best = max(best, float(total.max()))
    return best


def kernel_norms(spec: KernelSpec, samples: int = 1201) -> dict:
    """Sup norms of eta and its first two derivatives by dense scan."""
    xs = np.linspace(-spec.half_width_x, spec.half_width_x, samples)
    ys = np.linspace(-spec.half_width_y, spec.half_width_y, samples)
    ax, dax = spec.fx(xs), spec.dfx(xs)
    by, dby = spec.fy(ys), spec.dfy(ys)
    ddax = np.gradient(dax, xs)
    ddby = np.gradient(dby, ys)
    eta_sup = float(np.abs(ax).max() * np.abs(by).max())
    grad = (np.abs(dax)[:, None] * np.abs(by)[None, :]
            + np.abs(ax)[:, None] * np.abs(dby)[None, :])
    grad_eta_sup = float(grad.max())
    hess = (np.abs(ddax)[:, None] * np.abs(by)[None, :]
            + 2.0 * np.abs(dax)[:, None] * np.abs(dby)[None, :]
            + np.abs(ax)[:, None] * np.abs(ddby)[None, :])
    hess_eta_sup = float(hess.max())
    return dict(eta_sup=eta_sup, grad_eta_sup=grad_eta_sup,
                hess_eta_sup=hess_eta_sup, source="scan")


def direction_norms(direction: DirectionField, grid: GridSpec) -> dict:
    """Discrete sup/L1 norms of a sampled direction field (central diffs)."""
    v = direction.total
    area = grid.cell_area
    absv = np.abs(v[0]) + np.abs(v[1])
    grads = [np.gradient(v[c], grid.dx if ax == 0 else grid.dy, axis=ax)
             for c in (0, 1) for ax in (0, 1)]
    gradsum = sum(np.abs(gv) for gv in grads)
    div = np.gradient(v[0], grid.dx, axis=0) + np.gradient(v[1], grid.dy, axis=1)
    graddiv = (np.abs(np.gradient(div, grid.dx, axis=0))
               + np.abs(np.gradient(div, grid.dy, axis=1)))
    return dict(
        vec_sup=float(absv.max()),
        vec_l1=float(absv.sum()) * area,
        vec_grad_sup=float(gradsum.max()),
        vec_grad_l1=float(gradsum.sum()) * area,
        div_sup=float(np.abs(div).max()),
        divvec_l1=float(np.abs(div).sum()) * area,
        graddiv_l1=float(graddiv.sum()) * area,
        source="grid differences",
    )


def _exp(x: float) -> float:
    return math.exp(x) if x < LOG_MAX else math.inf
