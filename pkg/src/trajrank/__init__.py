"""trajrank: probabilistic trajectory forecasting with ranked proposals.

Pipeline: trajectories -> displacement space -> clustering -> conditional
generative proposals (one per cluster) -> distance-based probability ranking.
"""

from .core import (
    DisplacementSeries,
    FlatDisplacement,
    Standardizer,
    Trajectory,
    concat,
    flatten,
    integrate,
    split,
    to_displacements,
    to_trajectory,
    unflatten,
)
from .clustering import ClusterSpace, assign, dbi, kmeans, select_k, soft_dtw, ts_kmeans
from .forecasters import (
    ForecasterConfig,
    ProposalSet,
    cf_generative_train,
    cf_sample,
    cvm_predict,
    ours_propose,
    ours_train,
    red_train,
)
from .fp_scgan import FpScGanConfig, FpScGanModel, train_fp_scgan
from .ingestion import Corpus, Regime, Scenario, SplitPlan, load_trajnet, make_splits, segment, synth_corpus
from .metrics import EvalReport, ade, fde, topk_by_likelihood, topk_by_sampling
from .ranking import (
    RankerConfig,
    anet_rank,
    anet_train,
    rank_centroids,
    rank_neighbors,
    ranking_accuracy,
    softargmax_inverse_distances,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterSpace", "Corpus", "DisplacementSeries", "EvalReport", "FlatDisplacement",
    "ForecasterConfig", "FpScGanConfig", "FpScGanModel", "ProposalSet", "RankerConfig",
    "Regime", "Scenario", "SplitPlan", "Standardizer", "Trajectory",
    "ade", "anet_rank", "anet_train", "assign", "cf_generative_train", "cf_sample",
    "concat", "cvm_predict", "dbi", "fde", "flatten", "integrate", "kmeans",
    "load_trajnet", "make_splits", "ours_propose", "ours_train", "rank_centroids",
    "rank_neighbors", "ranking_accuracy", "red_train", "segment", "select_k",
    "soft_dtw", "softargmax_inverse_distances", "split", "synth_corpus",
    "to_displacements", "to_trajectory", "topk_by_likelihood", "topk_by_sampling",
    "ts_kmeans", "unflatten",
]
