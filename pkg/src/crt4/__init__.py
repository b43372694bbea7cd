"""Design and validation engine for four-level cluster randomized trials.

Closed-form power and sample-size calculators on the block-exchangeable
correlation structure, a GEE/MAEE estimation engine with small-sample
variance corrections, a correlated binary data generator, and a Monte Carlo
harness that checks the calculators against simulation.  Exposed as a
library, a CLI (crt4) and an HTTP service.
"""

from .correlation import (
    BlockDims,
    CorrelationParams,
    EigenSpectrum,
    ValidityReport,
    build_matrix,
    eigen_spectrum,
    inverse_matrix,
    inverse_quadratic_sum,
    is_valid,
)
from .design import (
    DesignSpec,
    EffectSize,
    OutcomeModel,
    clusters_via_design_effect,
    design_effect,
    effect_size,
    optimal_allocation,
    predicted_power,
    required_clusters,
    sensitivity_grid,
    variance_sigma_beta2,
)
from .datagen import PanelSizeModel, generate_binary, make_layout
from .errors import (
    AllocationError,
    CapExceededError,
    ConvergenceError,
    DomainError,
    GenerationRangeError,
    InvalidCorrelationError,
    NoSolutionError,
)
from .estimation import ESTIMATOR_NAMES, GeeFit, fit, wald_t_test
from .harness import (
    ICC_PRESETS,
    GridReport,
    Scenario,
    ScenarioResult,
    load_scenarios,
    run_grid,
    run_scenario,
    scenario_seed,
)

__version__ = "0.1.0"

__all__ = [
    "BlockDims",
    "CorrelationParams",
    "EigenSpectrum",
    "ValidityReport",
    "build_matrix",
    "eigen_spectrum",
    "inverse_matrix",
    "inverse_quadratic_sum",
    "is_valid",
    "DesignSpec",
    "EffectSize",
    "OutcomeModel",
    "clusters_via_design_effect",
    "design_effect",
    "effect_size",
    "optimal_allocation",
    "predicted_power",
    "required_clusters",
    "sensitivity_grid",
    "variance_sigma_beta2",
    "PanelSizeModel",
    "generate_binary",
    "make_layout",
    "AllocationError",
    "CapExceededError",
    "ConvergenceError",
    "DomainError",
    "GenerationRangeError",
    "InvalidCorrelationError",
    "NoSolutionError",
    "ESTIMATOR_NAMES",
    "GeeFit",
    "fit",
    "wald_t_test",
    "ICC_PRESETS",
    "GridReport",
    "Scenario",
    "ScenarioResult",
    "load_scenarios",
    "run_grid",
    "run_scenario",
    "scenario_seed",
    "__version__",
]
