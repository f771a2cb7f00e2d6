"""Ball-wise local inference for functional data on triangulated manifold
domains: permutation p-values, ball-product adjustment families and the
sup-adjusted p-value function."""

__version__ = "0.1.0"

from .domain import (
    AdjustmentBall,
    AdjustmentFamily,
    ComponentGrid,
    ProductDomain,
    ball_weight,
    circle_component,
    enumerate_component_balls,
    enumerate_family,
    interval_component,
    mesh_component,
)
from .glm import (
    DesignSpec,
    HypothesisSpec,
    ols_fit,
    slope_sq,
    stat_field,
    t_trend_cutoff,
    t_two_sample_sq,
)
from .mesh import (
    TriangulatedManifold,
    build_icosphere,
    load_mesh,
    save_off,
    triangle_area,
)
from .permute import (
    PermutationPlan,
    PValueFields,
    integrated_stat,
    null_distribution,
    permute_once,
    pvalues,
    run_inference,
)
from .evalsim import (
    ErrorRates,
    ScenarioConfig,
    compute_error_rates,
    gaussian_kernel_noise,
    run_scenario,
)

__all__ = [
    "AdjustmentBall", "AdjustmentFamily", "ComponentGrid", "ProductDomain",
    "ball_weight", "circle_component", "enumerate_component_balls",
    "enumerate_family", "interval_component", "mesh_component",
    "DesignSpec", "HypothesisSpec", "ols_fit", "slope_sq", "stat_field",
    "t_trend_cutoff", "t_two_sample_sq",
    "TriangulatedManifold", "build_icosphere", "load_mesh", "save_off",
    "triangle_area",
    "PermutationPlan", "PValueFields", "integrated_stat", "null_distribution",
    "permute_once", "pvalues", "run_inference",
    "ErrorRates", "ScenarioConfig", "compute_error_rates",
    "gaussian_kernel_noise", "run_scenario",
]
