"""Path transformations with Kac-type potentials and their Feynman-Kac checks."""

__version__ = "0.1.0"

from .diffusion import DiffusionSpec, McConfig, PathBatch, brownian, ornstein_uhlenbeck, simulate_sde
from .errors import (
    ConvergenceError,
    KacOverflowError,
    LifetimeError,
    PartitionError,
    PathkacError,
    PathRangeError,
    ProjectionError,
    ShapeError,
    SolverError,
    WindowError,
)
from .feynman_kac import pt_v_f, pt_v_star, spde_weak_residual, translation_semigroup_u
from .hermite import HermiteState, delta_coeffs, pair, project, translate
from .paths import GridPath, concat, restrict, sup_norm
from .pde import pde_reference
from .potential import PotentialSpec, validate_potential
from .transform import forward_map, roundtrip_error, solve_hat, stability_bound

__all__ = [
    "ConvergenceError",
    "DiffusionSpec",
    "GridPath",
    "HermiteState",
    "KacOverflowError",
    "LifetimeError",
    "McConfig",
    "PartitionError",
    "PathBatch",
    "PathRangeError",
    "PathkacError",
    "PotentialSpec",
    "ProjectionError",
    "ShapeError",
    "SolverError",
    "WindowError",
    "brownian",
    "concat",
    "delta_coeffs",
    "forward_map",
    "ornstein_uhlenbeck",
    "pair",
    "pde_reference",
    "project",
    "pt_v_f",
    "pt_v_star",
    "restrict",
    "roundtrip_error",
    "simulate_sde",
    "solve_hat",
    "spde_weak_residual",
    "stability_bound",
    "sup_norm",
    "translate",
    "translation_semigroup_u",
    "validate_potential",
]
