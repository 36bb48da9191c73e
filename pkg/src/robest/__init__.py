"""Robust sub-Gaussian estimators with a Monte-Carlo deviation harness."""

from .core import (
    BlockPartition,
    InternalInvariantError,
    InvalidArgumentError,
    MedianConvention,
    NumericFailureError,
    RngContract,
    ScalarSample,
    VectorSample,
    block_means,
    median,
    partition_blocks,
    stream_seed,
)
from .datagen import (
    ContaminationSpec,
    DistributionSpec,
    TruthRecord,
    contaminate,
    regression_instance,
    sample_clean,
)
from .density import (
    DensityFamily,
    DiscreteDensity,
    hellinger_link_check,
    hellinger_sq,
    ratio_link,
    rho_estimate,
    rho_test,
)
from .harness import (
    DeviationReport,
    EstimatorSpec,
    ExperimentConfig,
    compare_estimators,
    emit_report,
    parse_report_rows,
    run_experiment,
)
from .multivariate import (
    DescentConfig,
    DirectionResult,
    GdaConfig,
    PacBayesConfig,
    coordinatewise_mom,
    descent_step,
    geometric_mom_init,
    minmax_mom_mean_gda,
    minmax_mom_mean_grid,
    pac_bayes_direction_estimate,
    pac_bayes_minmax_mean,
    robust_mean_descent,
    smooth_clip_cubic,
    trimmed_direction,
    tukey_depth_approx,
    tukey_median_approx,
)
from .regression import (
    FitConfig,
    HistogramPartition,
    LossModel,
    RegressionDataset,
    erm_fit,
    histogram_features,
    loss_gradient,
    loss_value,
    minmax_mom_fit,
    sigma_norm_error,
)
from .univariate import (
    CatoniConfig,
    HuberConfig,
    LepskiConfig,
    SmoothedMomConfig,
    catoni_estimate,
    catoni_estimate_batch,
    catoni_influence,
    empirical_mean,
    huber_m_estimate,
    lepski_adaptive_mom,
    mom_estimate,
    mom_estimate_batch,
    smoothed_mom_estimate,
    trimmed_mean,
)

__version__ = "0.1.0"
