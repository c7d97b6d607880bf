"""Nonlocal deviation operators and their algebra.

Operators map a multi-population density field to a 2-vector field per
cell.  Leaves are gradient avoidance (steer away from increasing smoothed
density) and flux push (get dragged by another population's smoothed
flux); they compose through saturation and weighted sums, which preserve
the Lipschitz hypothesis controlling all deviation-model bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .errors import EstimationError
from .grid import GridSpec, PopulationField
from .kernel import SampledKernel, convolve, convolve_gradient
from .velocity import DirectionField, SpeedLaw

NonlocalOperator = Callable[[PopulationField], np.ndarray]


def saturate(u: np.ndarray) -> np.ndarray:
    """Cellwise u / sqrt(1 + |u|^2); output magnitude strictly below 1."""
    mag2 = u[0] ** 2 + u[1] ** 2
    return u / np.sqrt(1.0 + mag2)[None, :, :]


def gradient_avoidance(state: PopulationField, j: int, eps: float,
                       k: SampledKernel, saturated: bool = True) -> np.ndarray:
    """-eps * N(grad(rho_j conv eta)); magnitude at most eps."""
    g = convolve_gradient(state.data[j], k)
    if saturated:
        g = saturate(g)
    return -eps * g


def flux_push(state: PopulationField, j: int, law: SpeedLaw,
              direction: DirectionField, k: SampledKernel) -> np.ndarray:
    """N of the componentwise convolution of rho_j v(rho_j) dir_j."""
    q = law.q(state.data[j])
    flux = q[None, :, :] * direction.total
    conv = np.stack([convolve(flux[0], k), convolve(flux[1], k)])
    return saturate(conv)


@dataclass(frozen=True)
class GradientAvoidance:
    j: int
    eps: float
    kernel: SampledKernel
    saturated: bool = True

    def __call__(self, state: PopulationField) -> np.ndarray:
        return gradient_avoidance(state, self.j, self.eps, self.kernel,
                                  self.saturated)


@dataclass(frozen=True)
class FluxPush:
    j: int
    law: SpeedLaw
    direction: DirectionField
    kernel: SampledKernel

    def __call__(self, state: PopulationField) -> np.ndarray:
        return flux_push(state, self.j, self.law, self.direction, self.kernel)


@dataclass(frozen=True)
class Saturated:
    child: NonlocalOperator

    def __call__(self, state: PopulationField) -> np.ndarray:
        return saturate(self.child(state))


@dataclass(frozen=True)
class WeightedSum:
    """sum_k w_k * op_k with scalar or smooth-field weights."""

    terms: tuple  # of (weight, operator)

    def __call__(self, state: PopulationField) -> np.ndarray:
        out = np.zeros((2, state.grid.nx, state.grid.ny))
        for w, op in self.terms:
            out += np.asarray(w) * op(state)
        return out


@dataclass(frozen=True)
class ZeroOp:
    def __call__(self, state: PopulationField) -> np.ndarray:
        return np.zeros((2, state.grid.nx, state.grid.ny))


def _cd_gradient(f: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    gx = np.gradient(f, grid.dx, axis=0)
    gy = np.gradient(f, grid.dy, axis=1)
    return gx, gy


def _divergence(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.gradient(u[0], grid.dx, axis=0) + np.gradient(u[1], grid.dy, axis=1)


def estimate_ci(op: NonlocalOperator,
                samples: Sequence[PopulationField]) -> float:
    """Empirical lower bound for the Lipschitz constant of the operator.

    Maximizes the four defining ratios over sample pairs (sup and L1-of-
    divergence Lipschitz quotients) and single samples (sup of gradient
    and L1 of gradient-of-divergence against the L1 norm of the density).
    Divergences and gradients use second-order central differences.
    """
    if len(samples) < 2:
        raise EstimationError("need at least two density samples")
    grid = samples[0].grid
    area = grid.cell_area
    vals = [op(s) for s in samples]
    best = 0.0
    # single-sample ratios
    for s, I in zip(samples, vals):
        l1 = float(np.abs(s.data).sum()) * area
        if l1 == 0.0:
            continue
        grad_sup = 0.0
        for comp in I:
            gx, gy = _cd_gradient(comp, grid)
            grad_sup = max(grad_sup, float((np.abs(gx) + np.abs(gy)).max()))
        div = _divergence(I, grid)
        dgx, dgy = _cd_gradient(div, grid)
        graddiv_l1 = float((np.abs(dgx) + np.abs(dgy)).sum()) * area
        best = max(best, grad_sup / l1, graddiv_l1 / l1)
    # pair ratios
    used_pair = False
    for (s1, I1), (s2, I2) in combinations(zip(samples, vals), 2):
        dl1 = float(np.abs(s1.data - s2.data).sum()) * area
        if dl1 == 0.0:
            continue
        used_pair = True
        dI = I1 - I2
        sup = float((np.abs(dI[0]) + np.abs(dI[1])).max())
        ddiv_l1 = float(np.abs(_divergence(dI, grid)).sum()) * area
        best = max(best, sup / dl1, ddiv_l1 / dl1)
    if not used_pair:
        raise EstimationError("all sample pairs are identical")
    return best
