"""Sparse pairwise graphical models with Mercer-kernel sufficient statistics."""

from .baselines import (
    fit_ggm,
    fit_glasso,
    fit_nonparanormal,
    flatten_features,
    glasso_kkt_residual,
    kendall_tau_matrix,
    sample_covariance,
    skeptic_correlation,
)
from .density import (
    GridPmf,
    ModelSpec,
    ParamMatrix,
    conditional_gradient,
    conditional_log_partition,
    conditional_nll,
    conditional_pmf,
    joint_gradient_exact,
    joint_log_partition_exact,
    joint_nll,
    joint_pair_expectations,
    trapezoid_grid,
    unnormalized_log_joint,
)
from .errors import InvalidInputError, UnsupportedOperationError
from .estimators import (
    FitResult,
    SolveConfig,
    fit_joint_logdet,
    fit_joint_mle_exact,
    fit_nodewise_lasso,
    fit_nodewise_mle_exact,
    l1_kkt_residual,
    lambda_path,
    nodewise_matrix,
    relaxed_nll,
    symmetrize_min_magnitude,
)
from .evaluation import (
    FrequencyMap,
    RateCheckResult,
    SupportMetrics,
    error_scaling_check,
    frequency_map,
    gradient_concentration_check,
    least_squares_slope,
    support_metrics,
    topk_link_metrics,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    PriceIngestSpec,
    emit_report,
    ingest_prices,
    run_replicated_experiment,
)
from .kernels import (
    Dataset,
    GramAverage,
    KernelSpec,
    average_gram,
    eval_kernel,
    gram_matrix,
    kernel_cross_matrix,
    unit_feature_lift,
)
from .sampling import (
    GibbsConfig,
    TruthModel,
    gibbs_generate,
    gibbs_generate_batch,
    make_chain,
    make_model1,
    make_model2,
    sample_conditional,
)

__version__ = "0.1.0"

__all__ = [
    "InvalidInputError",
    "UnsupportedOperationError",
    "KernelSpec",
    "Dataset",
    "GramAverage",
    "eval_kernel",
    "gram_matrix",
    "kernel_cross_matrix",
    "average_gram",
    "unit_feature_lift",
    "ParamMatrix",
    "ModelSpec",
    "GridPmf",
    "trapezoid_grid",
    "unnormalized_log_joint",
    "joint_log_partition_exact",
    "joint_pair_expectations",
    "joint_nll",
    "joint_gradient_exact",
    "conditional_log_partition",
    "conditional_pmf",
    "conditional_nll",
    "conditional_gradient",
    "GibbsConfig",
    "TruthModel",
    "make_model1",
    "make_model2",
    "make_chain",
    "sample_conditional",
    "gibbs_generate",
    "gibbs_generate_batch",
    "SolveConfig",
    "FitResult",
    "fit_joint_logdet",
    "fit_nodewise_lasso",
    "fit_joint_mle_exact",
    "fit_nodewise_mle_exact",
    "nodewise_matrix",
    "symmetrize_min_magnitude",
    "l1_kkt_residual",
    "relaxed_nll",
    "lambda_path",
    "fit_glasso",
    "fit_ggm",
    "fit_nonparanormal",
    "flatten_features",
    "sample_covariance",
    "kendall_tau_matrix",
    "skeptic_correlation",
    "glasso_kkt_residual",
    "SupportMetrics",
    "FrequencyMap",
    "RateCheckResult",
    "support_metrics",
    "topk_link_metrics",
    "frequency_map",
    "least_squares_slope",
    "gradient_concentration_check",
    "error_scaling_check",
    "ExperimentConfig",
    "ExperimentReport",
    "PriceIngestSpec",
    "run_replicated_experiment",
    "emit_report",
    "ingest_prices",
    "__version__",
]
