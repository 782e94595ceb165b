"""Design of linear inferential sensors from multivariate process data.

Pipeline: ingest and derive features (dataio), remove gross errors
(pretreat), design sensors by six methods (regress, subset), and score
accuracy, complexity and bias-correction effort (evaluate). The synth
module generates ground-truth plant data for verification; the cli module
ties everything together behind a YAML configuration.
"""

from .dataio import (
    Dataset,
    FeatureSpec,
    PctFeature,
    RatioFeature,
    Scaler,
    SplitPlan,
    apply_scaler,
    derive_features,
    exclude_ranges,
    fit_scaler,
    invert_scaler,
    load_csv,
    split,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    OutputError,
    SoftSensorError,
)
from .evaluate import (
    BenchmarkSummary,
    BiasPolicy,
    EvalReport,
    benchmark,
    complexity,
    evaluate_split,
    rmse,
    simulate_bias_correction,
)
from .pretreat import (
    CovarianceModel,
    KMeansModel,
    McdConfig,
    OutlierReport,
    covariance,
    default_h,
    elbow_select_k,
    kmeans_detect,
    kmeans_fit,
    mcd_fit,
    t2_detect,
    t2_distances,
)
from .regress import (
    LassoConfig,
    LatentModel,
    SensorModel,
    fit_fixed,
    fit_lasso,
    fit_ols,
    fit_pca_regression,
    fit_pls,
    predict,
    predict_normalized,
    prune_impacts,
    tune_lambda,
)
from .subset import (
    FoldPlan,
    SubsetConfig,
    best_subset,
    criterion_value,
    make_folds,
    ss_cv_design,
    ss_cv_solve,
)
from .synth import PlantSpec, RegimeShift, generate

__version__ = "0.1.0"
