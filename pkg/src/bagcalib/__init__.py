"""Survey calibration weighting with bagged subsets of principal components.

High-dimensional calibration destabilizes both the weights and the total
estimator.  This package averages many small calibrations, each on a random
subset of principal components of the auxiliary variables, producing stable
weights that remain usable across variables of interest.  It also ships the
classical baselines (Horvitz-Thompson, full calibration, first-components
calibration, bagging on raw variables) and a Monte Carlo harness to compare
them on synthetic populations.
"""

from .bagging import (
    BaggingConfig,
    BaggingResult,
    IterationRecord,
    bp_total,
    model_assisted_decomposition,
    run_bagging,
    run_bagging_exact,
)
from .calibration import (
    CalibrationSpec,
    WeightSystem,
    calibration_residual,
    chi2_calibrate,
    weight_cv,
)
from .linalg import (
    DataMatrix,
    SymEigen,
    regress_residuals,
    standardize_columns,
    sym_eigen,
    weighted_covariance,
)
from .pca import (
    PcaModel,
    component_totals,
    explained_variance,
    fit_pca,
    fit_pca_from_sample,
    identity_model,
    residual_pca,
    scores,
)
from .sampling import (
    ComponentSelection,
    ObservedDesign,
    SamplingDesign,
    component_inclusion_probs,
    sample_components,
    srswor,
)
from .simulation import (
    EstimatorConfig,
    Population,
    ResponseRecipe,
    SimulationReport,
    SyntheticSpec,
    default_estimators,
    generate_population,
    make_population,
    metric_rb,
    metric_rrmse,
    metric_rsd,
    metric_varrht,
    run_study,
    sweep,
)

__version__ = "0.1.0"
