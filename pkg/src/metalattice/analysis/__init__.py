"""Bounds, density checks and convergence experiments."""

from .bounds import (
    BoundAudit,
    BoundConstants,
    PolygonConstants,
    TriangleConstants,
    audit_cell_bounds,
    audit_d4,
    audit_polygon,
    cell_bound_constants,
    chain_energies,
    d4_gamma,
    polygon_bound_constants,
    polygon_energy,
    polygon_gradient_norm,
    random_gradients,
    triangle_bound_constants,
)
from .experiments import (
    DEFAULT_SLACK,
    ConvergenceReport,
    GrowthReport,
    LipschitzReport,
    RankOneReport,
    SoftModeReport,
    default_lipschitz_constant,
    growth_check,
    jensen_floor,
    lipschitz_check,
    rank_one_convexity_check,
    recovery_sequence_energy,
    soft_mode_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
