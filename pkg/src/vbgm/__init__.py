"""Variational Gaussian class models for continual category discovery.

The package consumes pre-extracted feature vectors and maintains one
multivariate normal per class: supervised fitting on an initial labeled
set, then, per unlabeled session, clustering into pseudo-classes,
re-labeling against all known distributions, and covariance-aligned
refitting of the surviving novel classes.
"""

from .clustering import (
    KMeansResult,
    PcaProjector,
    estimate_num_classes,
    kmeans,
    pca_fit,
    pca_transform,
    silhouette_score,
)
from .config import AUTO, PipelineConfig
from .evaluation import (
    Alignment,
    MetricsReport,
    align_new_labels,
    forgetting_rate,
    hungarian,
    novelty_rate,
    session_accuracies,
)
from .features import FeatureMatrix
from .features_io import read_features, write_features
from .gaussians import (
    ClassGaussian,
    bhattacharyya,
    kl_to_standard_normal,
    log_pdf,
    mahalanobis_sq,
    make_gaussian,
    point_estimate,
    sample,
    similarity,
)
from .pipeline import ModelStore, SessionOutcome, classify, classify_batch, run_offline, run_online_session
from .runner import RunResult, run_protocol
from .splits import SessionSplit, SplitManifest, build_split, split_from_manifest
from .store_io import load_store, save_store
from .synth import SyntheticDataset, generate_synthetic
from .variational import (
    FitConfig,
    FitTrace,
    VariationalParams,
    det_ratio,
    det_regularizer,
    elbo,
    elbo_gradient,
    fit_all_classes,
    fit_class,
)

__version__ = "0.1.0"

__all__ = [
    "AUTO",
    "Alignment",
    "ClassGaussian",
    "FeatureMatrix",
    "FitConfig",
    "FitTrace",
    "KMeansResult",
    "MetricsReport",
    "ModelStore",
    "PcaProjector",
    "PipelineConfig",
    "RunResult",
    "SessionOutcome",
    "SessionSplit",
    "SplitManifest",
    "SyntheticDataset",
    "VariationalParams",
    "align_new_labels",
    "bhattacharyya",
    "build_split",
    "classify",
    "classify_batch",
    "det_ratio",
    "det_regularizer",
    "elbo",
    "elbo_gradient",
    "estimate_num_classes",
    "fit_all_classes",
    "fit_class",
    "forgetting_rate",
    "generate_synthetic",
    "hungarian",
    "kl_to_standard_normal",
    "kmeans",
    "load_store",
    "log_pdf",
    "mahalanobis_sq",
    "make_gaussian",
    "novelty_rate",
    "pca_fit",
    "pca_transform",
    "point_estimate",
    "read_features",
    "run_offline",
    "run_online_session",
    "run_protocol",
    "sample",
    "save_store",
    "session_accuracies",
    "silhouette_score",
    "similarity",
    "split_from_manifest",
    "write_features",
]
