"""Predictive model degrees of freedom and Random-X risk estimation for linear procedures."""

__version__ = "0.1.0"

from .core_model import (
    CovKind,
    Dataset,
    GaussianSampler,
    GenConfig,
    MeanModel,
    coefficient_vector,
    generate_dataset,
    make_covariance,
    parse_index_range,
    read_dataset_csv,
    read_design_csv,
    rng_stream,
    write_dataset_csv,
)
from .dof import (
    DofReport,
    df_approx,
    df_fixed,
    df_increment,
    df_local_constant_closed,
    df_random,
    df_random_ls_closed,
    df_random_ridge,
    df_weight_limit,
    subset_dof,
)
from .errors import (
    CollinearityError,
    ConditioningError,
    ConfigError,
    FitError,
    LeverageError,
    PredDFError,
    ThresholdError,
)
from .experiments import REGISTRY, ExperimentResult, Scenario, relative_mse, run_scenario, selection_histogram
from .gd_interp import (
    FMatrix,
    GDConfig,
    expected_init_distance,
    gd_limit,
    gd_run,
    init_simple_regression,
    interpolant_df,
    interpolant_excess_bias,
    interpolant_hat_vector,
    max_step,
)
from .procedures import (
    OLS,
    GDInterp,
    HatSystem,
    LocalConstant,
    MinNorm,
    Ridge,
    Spline,
    WeightInterp,
    fit,
    predict,
)
from .risk import (
    RiskReport,
    a_matrix,
    corrected_err_hats,
    delta_hat,
    delta_plus,
    delta_plusplus,
    err_hat,
    err_random_true,
    loocv_error,
    risk_report,
)
from .selection import (
    PipelineConfig,
    SweepTable,
    analytic_optimal_size,
    criterion_sweep,
    ingest_csv,
    kfold_cv,
    order_variables,
    select,
)

__all__ = [name for name in dir() if not name.startswith("_")]
