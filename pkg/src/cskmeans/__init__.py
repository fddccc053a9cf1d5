"""K-Means variants with sparse feature weighting and pairwise constraints,
plus the cross-validated benchmark harness around them."""

__version__ = "0.1.0"

from .data import (
    Constraint,
    ConstraintKind,
    ConstraintSet,
    DataError,
    DataMatrix,
    LabeledDataset,
    MaxSeparatedPair,
    build_constraint_pool,
    contaminate_exponential,
    generate_brodinova,
    global_centroid,
    load_csv,
    max_separated_pair,
    sample_constraints,
    save_dataset,
    standardize,
    subsample_classes,
)
from .engines import (
    Algorithm,
    ClusterModel,
    ConvergenceConfig,
    FeatureScores,
    FeatureWeights,
    NumericalError,
    WeightRegime,
    assign_lloyd,
    assign_pckm,
    cl_penalty,
    count_violations,
    ml_penalty,
    objective_value,
    per_feature_bcss,
    per_feature_penalized_bcss,
    run_lkm,
    run_mpckm,
    run_pckm,
    run_pcskm,
    run_skm,
    update_weights,
)
from .evaluate import (
    FoldPlan,
    PerformanceCurve,
    derive_seed,
    make_folds,
    pairwise_f_score,
    run_cv_experiment,
    sparsity_grid,
    sweep_sparsity,
    table1_audit,
    wilcoxon_signed_rank,
)
from .init_methods import (
    InitMethod,
    InitResult,
    dkmpp_init,
    local_outlier_factor,
    maximin_init,
    ml_neighborhoods,
    robin_init,
    run_init,
    seeded_init,
)
