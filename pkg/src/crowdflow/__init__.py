"""Finite-volume simulation of nonlocal multi-population crowd models.

Two model families on a common 2D grid: a "differentiable" family whose
speed depends on the total smoothed density (with a linearized semigroup
and cost-gradient machinery), and a "deviation" family whose direction
is deflected by nonlocal avoidance operators (with maximum-principle
and total-variation envelopes).  The `cli` module exposes the
`crowdflow` command.
"""

from .analysis import (BoundInputs, InvarianceReport, ParameterDeltas,
                       StabilityBound, bounds_differentiable, check_invariance,
                       direction_norms, kappa0, kernel_norms,
                       stability_bound_deviation,
                       stability_bound_differentiable, sup_gradient,
                       tv_bound_deviation, wd)
from .config import PopulationConfig, RunConfig, parse_config, preset
from .errors import (BoundViolationError, ConfigurationError, CrowdflowError,
                     EstimationError, NumericError, UnsupportedModelError)
from .grid import (GridSpec, NormRecord, PopulationField, indicator_datum,
                   make_grid, norms)
from .kernel import (KernelSpec, SampledKernel, bump_kernel, convolve,
                     convolve_gradient, sample_kernel)
from .linearized import (CostSpec, cost_and_gradient, gateaux_residual,
                         linearized_velocity, solve_linearized)
from .nonlocal_ops import (FluxPush, GradientAvoidance, Saturated, WeightedSum,
                           ZeroOp, estimate_ci, flux_push, gradient_avoidance,
                           saturate)
from .solver import (DEVIATION, DIFFERENTIABLE, ModelSpec, RunResult,
                     StepReport, Trajectory, advection_field, apply_boundary,
                     cfl_dt, run, split_step)
from .velocity import (DirectionField, SpeedLaw, assemble_deviation,
                       assemble_differentiable, constant_direction,
                       constant_speed_law, discomfort, linear_speed_law,
                       room_mask, smoothed_total_density)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
