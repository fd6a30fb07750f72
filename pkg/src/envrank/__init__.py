"""Environment-bias feature ranking and robust novelty-detection evaluation.

Workflow: load or synthesize a multi-environment feature dataset, score each
feature by how much its distribution shifts across training environments,
drop the most environment-biased dimensions, and measure the gain in
out-of-distribution novelty-detection ROC-AUC.
"""

from envrank.data import (
    Dataset,
    SampleMeta,
    load_dataset,
    rebalance_classes,
    save_dataset,
    subset_features,
)
from envrank.detectors import DetectorSpec, FittedDetector
from envrank.distributions import (
    BinningScheme,
    Histogram,
    build_histogram,
    make_binning,
    symmetric_kl,
    wasserstein1_exact,
    wasserstein1_hist,
)
from envrank.evaluation import (
    EvalReport,
    evaluate_ranking,
    mean_env_auc,
    probe_env_accuracy,
    roc_auc,
    run_pipeline,
    style_identification_accuracy,
)
from envrank.rankers import (
    PairDistanceTable,
    Ranking,
    RankerSpec,
    compute_ranking,
    dispersion_scores,
    env_fisher_scores,
    env_infogain_scores,
    load_ranking,
    mad_scores,
    pairwise_distances,
    pca_loading_scores,
    save_ranking,
    stylist_scores,
    variance_scores,
)
from envrank.selection import SelectionGrid, choose_percent, select_features
from envrank.synth import SynthConfig, generate, spuriousness_suite

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "SampleMeta",
    "load_dataset",
    "save_dataset",
    "subset_features",
    "rebalance_classes",
    "BinningScheme",
    "Histogram",
    "make_binning",
    "build_histogram",
    "wasserstein1_hist",
    "wasserstein1_exact",
    "symmetric_kl",
    "PairDistanceTable",
    "Ranking",
    "RankerSpec",
    "pairwise_distances",
    "stylist_scores",
    "env_infogain_scores",
    "env_fisher_scores",
    "mad_scores",
    "dispersion_scores",
    "variance_scores",
    "pca_loading_scores",
    "compute_ranking",
    "save_ranking",
    "load_ranking",
    "SelectionGrid",
    "select_features",
    "choose_percent",
    "DetectorSpec",
    "FittedDetector",
    "EvalReport",
    "roc_auc",
    "mean_env_auc",
    "run_pipeline",
    "evaluate_ranking",
    "style_identification_accuracy",
    "probe_env_accuracy",
    "SynthConfig",
    "generate",
    "spuriousness_suite",
]
