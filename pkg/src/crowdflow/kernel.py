"""Separable smoothing kernels and matrix-product convolution.

A kernel eta(x, y) = a(x) b(y) with compact support is sampled at cell
center offsets into banded Toeplitz matrices A (x axis) and B (y axis),
so that the discrete convolution of a field F is A @ F @ B.  Derivative
matrices built from a' and b' give the gradient of the convolution
without differencing the convolved field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec

Profile = Callable[[np.ndarray], np.ndarray]


def _bump(x: np.ndarray) -> np.ndarray:
    u = 1.0 - (2.0 * x) ** 2
    return np.where(u > 0.0, np.maximum(u, 0.0) ** 3, 0.0)


def _bump_deriv(x: np.ndarray) -> np.ndarray:
    u = 1.0 - (2.0 * x) ** 2
    return np.where(u > 0.0, -24.0 * x * np.maximum(u, 0.0) ** 2, 0.0)


@dataclass(frozen=True)
class KernelSpec:
    """Separable kernel description: per-axis profile, derivative, half-width."""

    fx: Profile
    dfx: Profile
    fy: Profile
    dfy: Profile
    half_width_x: float
    half_width_y: float
    normalize: bool = False

    def __call__(self, x, y):
        return self.fx(np.asarray(x, dtype=float)) * self.fy(np.asarray(y, dtype=float))


def bump_kernel(half_width: float = 0.5, normalize: bool = False) -> KernelSpec:
    """Polynomial bump [1-(2x/w)^2]_+^3 per axis, support [-w/2, w/2]^2.

    With half_width 0.5 this is the experiments' kernel; its continuum
    1D mass is 16/35 per axis.
    """
    s = 0.5 / half_width

    def f(x, _s=s):
        return _bump(_s * x)

    def df(x, _s=s):
        return _s * _bump_deriv(_s * x)

    return KernelSpec(fx=f, dfx=df, fy=f, dfy=df,
                      half_width_x=half_width, half_width_y=half_width,
                      normalize=normalize)


@dataclass(frozen=True)
class SampledKernel:
    """Kernel sampled on a grid: convolution and derivative matrices.

    A[i, h] = a(x_i - x_h) dx          (nx, nx)
    B[k, j] = b(y_j - y_k) dy          (ny, ny)
    Ax, By: same with a', b'.
    """

    A: np.ndarray
    B: np.ndarray
    Ax: np.ndarray
    By: np.ndarray
    mass: float
    bandwidth_x: int
    bandwidth_y: int
    spec: KernelSpec
    grid: GridSpec


def _axis_matrices(profile: Profile, deriv: Profile, n: int, h: float,
                   half_width: float) -> tuple[np.ndarray, np.ndarray, float, int]:
    # offsets between cell centers are integer multiples of h
    idx = np.arange(n)
    off = (idx[:, None] - idx[None, :]) * h
    band = int(np.ceil(half_width / h))
    inside = np.abs(off) <= half_width + 1e-12 * half_width
    m = np.where(inside, profile(off), 0.0) * h
    md = np.where(inside, deriv(off), 0.0) * h
    ks = np.arange(-band, band + 1) * h
    mass1d = float(np.sum(np.where(np.abs(ks) <= half_width + 1e-12 * half_width,
                                   profile(ks), 0.0)) * h)
    return m, md, mass1d, band


def sample_kernel(spec: KernelSpec, grid: GridSpec) -> SampledKernel:
    if spec.half_width_x < grid.dx or spec.half_width_y < grid.dy:
        raise ConfigurationError("kernel support smaller than one cell")
    if 2 * spec.half_width_x > grid.width or 2 * spec.half_width_y > grid.height:
        raise ConfigurationError("kernel support does not fit inside the grid")
    A, Ax, mx, bx = _axis_matrices(spec.fx, spec.dfx, grid.nx, grid.dx,
                                   spec.half_width_x)
    By_base, By, my, by = _axis_matrices(spec.fy, spec.dfy, grid.ny, grid.dy,
                                         spec.half_width_y)
    # B acts from the right: B[k, j] = b(y_j - y_k) dy.  The profile b is
    # sampled on (y_k - y_j), so transpose; for even b this is a no-op but
    # the derivative matrix changes sign under it.
    B = By_base.T
    By = By.T
    if spec.normalize:
        if mx <= 0 or my <= 0:
            raise ConfigurationError("cannot normalize a kernel with zero mass")
        A, Ax = A / mx, Ax / mx
        B, By = B / my, By / my
        mass = 1.0
    else:
        mass = mx * my
    if mass <= 0:
        raise ConfigurationError("kernel mass must be positive")
    return SampledKernel(A=A, B=B, Ax=Ax, By=By, mass=mass,
                         bandwidth_x=bx, bandwidth_y=by, spec=spec, grid=grid)


def convolve(field: np.ndarray, k: SampledKernel) -> np.ndarray:
    """Discrete 2D convolution of a (nx, ny) field with the sampled kernel.

    Equals sum_{h,l} eta(x_i - x_h, y_j - y_l) field[h, l] dx dy with the
    field extended by zero outside the domain.
    """
    _check_shape(field, k)
    return k.A @ field @ k.B


def convolve_gradient(field: np.ndarray, k: SampledKernel) -> np.ndarray:
    """Gradient of the convolved field, shape (2, nx, ny).

    Computed as field * grad(eta) with analytically differentiated kernel
    factors: x component uses (Ax, B), y component uses (A, By).
    """
    _check_shape(field, k)
    gx = k.Ax @ field @ k.B
    gy = k.A @ field @ k.By
    return np.stack([gx, gy])


def _check_shape(field: np.ndarray, k: SampledKernel) -> None:
    if field.shape != (k.A.shape[0], k.B.shape[0]):
        raise ConfigurationError(
            f"field shape {field.shape} does not match kernel grid "
            f"({k.A.shape[0]}, {k.B.shape[0]})")
