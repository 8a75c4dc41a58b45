"""Certified reachability bounds for sampled stochastic systems.

The pipeline: learn a piecewise-constant surrogate of unknown dynamics from
one-step samples (a Gaussian process whose kernel matches points by shared
partition-cell prefixes), attach per-cell learning-error radii, abstract the
surrogate into an interval Markov chain, and bound the probability of
reaching a target set from any start cell by interval iteration.
"""

from .abstraction import (
    Imc,
    PiecewisePosterior,
    SeGpPosterior,
    TransitionQuery,
    build_imc,
    build_imc_continuous_reference,
    gauss_box_prob,
    transition_bounds,
)
from .config import PipelineConfig, load_config
from .errbound import (
    ErrorConfig,
    ErrorTable,
    eps1,
    eps2,
    eps3,
    error_table,
)
from .errors import (
    BtreachError,
    ConfigError,
    DataTooLargeError,
    EmptyProjectionWarning,
    InconsistentSchemeError,
    InfeasibleError,
    NumericalFailureError,
    OutOfDomainError,
)
from .gp import AggregatedDataset, BtgpModel, Dataset, aggregate, fit
from .kernel import (
    BtKernel,
    SeKernel,
    bt_eval,
    bt_feature_map,
    rkhs_norm_bound,
    se_cell_inf,
    se_eval,
)
from .partition import (
    PartitionScheme,
    StateBox,
    bits_to_int,
    cell_box,
    cell_center,
    cell_centers,
    encode,
    encode_points,
    int_to_bits,
    project_set,
)
from .pipeline import PipelineResult, run_pipeline
from .report import export_heatmap, values_to_grid
from .systems import BenchmarkSystem, make_system, simulate
from .verify import (
    Certificate,
    InnerProblem,
    InnerSolution,
    ValueBounds,
    certify,
    interval_iteration,
    solve_inner,
    warmup_jit,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatedDataset",
    "BenchmarkSystem",
    "BtgpModel",
    "BtKernel",
    "BtreachError",
    "Certificate",
    "ConfigError",
    "Dataset",
    "DataTooLargeError",
    "EmptyProjectionWarning",
    "ErrorConfig",
    "ErrorTable",
    "Imc",
    "InconsistentSchemeError",
    "InfeasibleError",
    "InnerProblem",
    "InnerSolution",
    "NumericalFailureError",
    "OutOfDomainError",
    "PartitionScheme",
    "PiecewisePosterior",
    "PipelineConfig",
    "PipelineResult",
    "SeGpPosterior",
    "SeKernel",
    "StateBox",
    "TransitionQuery",
    "ValueBounds",
    "aggregate",
    "bits_to_int",
    "bt_eval",
    "bt_feature_map",
    "build_imc",
    "build_imc_continuous_reference",
    "cell_box",
    "cell_center",
    "cell_centers",
    "certify",
    "encode",
    "encode_points",
    "eps1",
    "eps2",
    "eps3",
    "error_table",
    "export_heatmap",
    "fit",
    "gauss_box_prob",
    "int_to_bits",
    "interval_iteration",
    "load_config",
    "make_system",
    "project_set",
    "rkhs_norm_bound",
    "run_pipeline",
    "se_cell_inf",
    "se_eval",
    "simulate",
    "solve_inner",
    "transition_bounds",
    "values_to_grid",
    "warmup_jit",
    "__version__",
]
