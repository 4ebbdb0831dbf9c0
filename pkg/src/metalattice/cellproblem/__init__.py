"""Cell problem: supercell minimization and explicit mechanisms."""

from .mechanisms import (
    Corrector,
    MechanismReport,
    MechanismState,
    accordion_fold_state,
    mechanism_deformation,
    mechanism_starts,
    rotation,
    twisted_kagome_state,
    verify_mechanism,
)
from .supercell import (
    BC_MODES,
    DensityEstimate,
    DensityQuery,
    EffectiveDensity,
    OptimizerConfig,
    SupercellProblem,
    assemble_supercell,
    effective_density,
    minimize_density,
    nearest_node_distance,
)

__all__ = [
    "BC_MODES",
    "Corrector",
    "DensityEstimate",
    "DensityQuery",
    "EffectiveDensity",
    "MechanismReport",
    "MechanismState",
    "OptimizerConfig",
    "SupercellProblem",
    "accordion_fold_state",
    "assemble_supercell",
    "effective_density",
    "mechanism_deformation",
    "mechanism_starts",
    "minimize_density",
    "nearest_node_distance",
    "rotation",
    "twisted_kagome_state",
    "verify_mechanism",
]
