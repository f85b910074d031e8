"""Bayesian spatial variable selection and grouping for scalar-on-image
regression on voxel lattices.

Selection indicators carry a lattice Ising prior (with analytically
derived hyperparameter bounds that avoid its phase transition) and the
nonzero coefficients share atoms under a truncated stick-breaking
Dirichlet-process slab.  The package provides the blocked Gibbs
sampler for this prior and the three reference priors it is compared
against, the simulation benchmark scenarios, posterior diagnostics, a
scikit-learn style estimator, and a batch CLI.
"""

__version__ = "0.1.0"

from .errors import (
    NoFeasibleRegionError,
    NumericalError,
    ValidationError,
    VoxselError,
)
from .hyperbounds import (
    BoundsInput,
    HyperRegion,
    bounds_2d,
    bounds_3d,
    bounds_3d_relaxed,
    compute_bounds,
    max_simple_r2,
    recommend_ab,
    sparsity_side_length,
)
from .lattice import (
    LatticeGraph,
    build_lattice,
    ising_quadratic_cube,
    ising_quadratic_square,
    pair_count_cube,
    pair_count_square,
)
from .model import (
    ChainState,
    Dataset,
    DPConfig,
    IsingParams,
    PriorKind,
    ising_log_prior_unnorm,
    log_likelihood,
    stick_breaking_weights,
)
from .sampler import (
    ChainTrace,
    SamplerConfig,
    gibbs_sweep,
    run_chain,
    run_parallel,
)
from .diagnostics import (
    PosteriorSummary,
    auc_mann_whitney,
    convergence_table,
    gelman_rubin,
    inclusion_probabilities,
    r2_trace,
    rank_heatmap_slices,
    rmse_per_variable,
    roc_curve,
)
from .simgen import (
    ScenarioSpec,
    generate_design,
    generate_null_response,
    generate_scenario,
    realized_snr,
)
from .estimator import IsingDPRegressor

__all__ = [
    "BoundsInput",
    "ChainState",
    "ChainTrace",
    "Dataset",
    "DPConfig",
    "HyperRegion",
    "IsingDPRegressor",
    "IsingParams",
    "LatticeGraph",
    "NoFeasibleRegionError",
    "NumericalError",
    "PosteriorSummary",
    "PriorKind",
    "SamplerConfig",
    "ScenarioSpec",
    "ValidationError",
    "VoxselError",
    "auc_mann_whitney",
    "bounds_2d",
    "bounds_3d",
    "bounds_3d_relaxed",
    "build_lattice",
    "compute_bounds",
    "convergence_table",
    "gelman_rubin",
    "generate_design",
    "generate_null_response",
    "generate_scenario",
    "gibbs_sweep",
    "inclusion_probabilities",
    "ising_log_prior_unnorm",
    "ising_quadratic_cube",
    "ising_quadratic_square",
    "log_likelihood",
    "max_simple_r2",
    "pair_count_cube",
    "pair_count_square",
    "r2_trace",
    "rank_heatmap_slices",
    "realized_snr",
    "recommend_ab",
    "rmse_per_variable",
    "roc_curve",
    "run_chain",
    "run_parallel",
    "sparsity_side_length",
    "stick_breaking_weights",
]
