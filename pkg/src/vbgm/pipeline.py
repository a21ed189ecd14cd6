"""The continual-discovery state machine.

Session 0 fits one Gaussian per labeled class. Each online session then
runs four phases on the (label-stripped) incoming batch: cluster it into
pseudo-classes, fit a provisional Gaussian per cluster, re-label every
point against the union of stored and provisional models, and finally
refit the surviving new classes on their cleaned members before inserting
them into the store. Stored classes are frozen by default.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .clustering import PcaProjector, estimate_num_classes, kmeans, pca_fit
from .config import AUTO, PipelineConfig
from .errors import EmptyBatch, EmptyClass, EmptyModel, MissingLabels
from .features import FeatureMatrix
from .gaussians import ClassGaussian, make_gaussian, point_estimate
from .variational import FitTrace, fit_all_classes, fit_class


@dataclass
class ModelStore:
    """Persistent classifier state: one Gaussian per discovered class."""

    classes: dict[int, ClassGaussian] = field(default_factory=dict)
    next_class_id: int = 0
    session_count: int = 0
    feature_dim: int = 0
    pca: Optional[PcaProjector] = None
    standardizer: Optional[tuple[np.ndarray, np.ndarray]] = None

    @classmethod
    def empty(cls) -> "ModelStore":
        return cls()

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def class_ids(self) -> list[int]:
        return sorted(self.classes)

    def log_det_by_class(self) -> dict[int, float]:
        return {cid: self.classes[cid].log_det_cov for cid in self.class_ids()}

    def log_dets(self) -> list[float]:
        return [self.classes[cid].log_det_cov for cid in self.class_ids()]

    def transform(self, rows: np.ndarray) -> np.ndarray:
        """Apply the frozen standardizer and PCA to raw input rows."""
        out = np.asarray(rows, dtype=np.float64)
        if self.standardizer is not None:
            mean, scale = self.standardizer
            out = (out - mean) / scale
        if self.pca is not None:
            out = (out - self.pca.mean) @ self.pca.components.T
        return out

    def add_class(self, gaussian: ClassGaussian) -> None:
        if gaussian.class_id in self.classes:
            raise ValueError(f"class {gaussian.class_id} already stored")
        self.classes[gaussian.class_id] = gaussian


@dataclass
class SessionOutcome:
    """What one online session did, for reporting and diagnostics."""

    session: int
    known_classes_before: int
    predicted_labels: np.ndarray
    novel_count: int
    relabel_flip_count: int
    fit_traces: dict[int, FitTrace]
    dropped_clusters: list[int]
    wall_time: float


def _half_sq_distances(
    gaussians: list[ClassGaussian], rows: np.ndarray, metric: str
) -> np.ndarray:
    """(n, C) matrix of half squared (Mahalanobis or Euclidean) distances."""
    n = rows.shape[0]
    out = np.empty((n, len(gaussians)), dtype=np.float64)
    for j, g in enumerate(gaussians):
        diff = rows - g.mean
        if metric == "euclidean":
            out[:, j] = 0.5 * np.sum(diff * diff, axis=1)
        else:
            solved = solve_triangular(g.chol_lower, diff.T, lower=True, check_finite=False)
            out[:, j] = 0.5 * np.sum(solved * solved, axis=0)
    return out


def _posteriors(half_sq: np.ndarray) -> np.ndarray:
    logits = -half_sq
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def classify_batch(
    store: ModelStore, rows: np.ndarray, metric: str = "mahalanobis"
) -> tuple[np.ndarray, np.ndarray]:
    """Labels and posteriors for raw input rows, lowest class id wins ties."""
    if not store.classes:
        raise EmptyModel("the store holds no classes")
    ids = np.array(store.class_ids(), dtype=np.int64)
    gaussians = [store.classes[int(cid)] for cid in ids]
    z = store.transform(np.atleast_2d(rows))
    half_sq = _half_sq_distances(gaussians, z, metric)
    labels = ids[half_sq.argmin(axis=1)]
    return labels, _posteriors(half_sq)


def classify(store: ModelStore, x, metric: str = "mahalanobis") -> tuple[int, np.ndarray]:
    """Nearest-class decision for one input vector.

    Returns the winning class id and the posterior over stored classes in
    ascending class-id order: a softmax over negative half squared
    distances, which sums to one and peaks at the most similar class.
    """
    labels, posteriors = classify_batch(store, np.asarray(x, dtype=np.float64)[None, :], metric)
    return int(labels[0]), posteriors[0]


def _fit_single(
    members: FeatureMatrix,
    references: list[float],
    config: PipelineConfig,
    class_id: int,
    session: int,
    early_stop: Optional[bool] = None,
) -> tuple[ClassGaussian, Optional[FitTrace]]:
    if config.fit_method == "pe":
        return (
            point_estimate(members, config.jitter, class_id=class_id, learned_in_session=session),
            None,
        )
    if config.fit_method == "cm":
        mu = members.data.mean(axis=0)
        return (
            make_gaussian(mu, np.eye(members.dim), class_id=class_id, learned_in_session=session),
            None,
        )
    gaussian, trace = fit_class(
        members,
        references,
        config.fit_config(early_stop=early_stop),
        class_id=class_id,
        learned_in_session=session,
    )
    return gaussian, trace


def run_offline(
    store: ModelStore,
    offline: FeatureMatrix,
    config: PipelineConfig,
    traces_out: Optional[dict[int, FitTrace]] = None,
) -> ModelStore:
    """Supervised session 0: fit preprocessing and one Gaussian per class.

    The standardizer and optional PCA are fitted on the offline features
    and frozen for the rest of the run.

    Raises
    ------
    EmptyClass : the offline set is empty.
    MissingLabels : unlabeled rows, or labels that are not dense 0..C-1.
    """
    if store.classes:
        raise ValueError("run_offline needs an empty store")
    if offline.n == 0:
        raise EmptyClass("offline set is empty")
    if not offline.is_fully_labeled:
        raise MissingLabels("offline set contains unlabeled rows")
    class_ids = offline.class_ids()
    num_classes = int(class_ids.size)
    if class_ids[0] != 0 or class_ids[-1] != num_classes - 1:
        raise MissingLabels("offline labels must be dense ids 0..C-1")

    rows = offline.data
    if config.standardize:
        mean = rows.mean(axis=0)
        scale = np.maximum(rows.std(axis=0), 1e-12)
        store.standardizer = (mean, scale)
        rows = (rows - mean) / scale
    if 0 < config.pca_dim < rows.shape[1]:
        d_out = min(config.pca_dim, rows.shape[0])
        store.pca = pca_fit(FeatureMatrix(rows, offline.labels.copy()), d_out)
        rows = (rows - store.pca.mean) @ store.pca.components.T
    store.feature_dim = rows.shape[1]

    transformed = FeatureMatrix(rows, offline.labels.copy())
    if config.fit_method == "vi":
        early_stop = config.early_stop_enabled and config.early_stop_offline
        fitted = fit_all_classes(
            transformed, {}, config.fit_config(early_stop=early_stop), session=0
        )
        for gaussian, trace in fitted:
            store.add_class(gaussian)
            if traces_out is not None:
                traces_out[gaussian.class_id] = trace
    else:
        for cid in class_ids:
            gaussian, _ = _fit_single(
                transformed.rows_of(int(cid)), [], config, class_id=int(cid), session=0
            )
            store.add_class(gaussian)
    store.next_class_id = num_classes
    store.session_count = 1
    return store


def run_online_session(
    store: ModelStore,
    unlabeled: FeatureMatrix,
    num_new,
    config: PipelineConfig,
) -> tuple[ModelStore, SessionOutcome]:
    """One unsupervised session: cluster, fit, re-label, refit, insert.

    `num_new` is the number of novel classes, or "auto" to estimate it by
    the silhouette scan. Points re-labeled to stored classes are counted
    and excluded from fitting; new clusters whose membership falls below
    `min_class_size` after re-labeling are dropped and reported through the
    outcome, and the surviving ids are compacted to stay dense.
    """
    started = time.perf_counter()
    if not store.classes:
        raise EmptyModel("run the offline session first")
    if unlabeled.n == 0:
        raise EmptyBatch("online session has no samples")
    session = store.session_count
    known_before = store.next_class_id
    z = store.transform(unlabeled.data)
    z_matrix = FeatureMatrix(z, None)

    if num_new == AUTO:
        k_max = min(config.k_max, unlabeled.n - 1)
        num_new = estimate_num_classes(z_matrix, min(config.k_min, k_max), k_max, seed=config.seed)
    num_new = int(num_new)
    if num_new < 0:
        raise ValueError("num_new must be >= 0 or 'auto'")

    metric = config.classifier_metric
    stored_ids = store.class_ids()
    stored_gaussians = [store.classes[cid] for cid in stored_ids]
    old_log_dets = store.log_dets()

    if num_new == 0:
        half_sq = _half_sq_distances(stored_gaussians, z, metric)
        labels = np.array(stored_ids, dtype=np.int64)[half_sq.argmin(axis=1)]
        store.session_count += 1
        return store, SessionOutcome(
            session=session,
            known_classes_before=known_before,
            predicted_labels=labels,
            novel_count=0,
            relabel_flip_count=0,
            fit_traces={},
            dropped_clusters=[],
            wall_time=time.perf_counter() - started,
        )

    # Phase 1: pseudo-labels from clustering. By default only the novel
    # count is clustered; old-class carryover lands inside the clusters as
    # pseudo-label noise and is recovered by the re-labeling phase.
    k = num_new + (store.num_classes if config.cluster_include_old else 0)
    k = min(k, unlabeled.n)
    clusters = kmeans(z_matrix, k, seed=config.seed + session)
    provisional_ids = known_before + np.arange(k, dtype=np.int64)
    pseudo = provisional_ids[clusters.assignments]

    # Phase 2: provisional fit per cluster against the stored determinants.
    provisional: list[ClassGaussian] = []
    for idx in range(k):
        members = FeatureMatrix(z[clusters.assignments == idx], None)
        gaussian, _ = _fit_single(
            members, old_log_dets, config, class_id=int(provisional_ids[idx]), session=session
        )
        provisional.append(gaussian)

    # Phase 3: re-label every point against stored + provisional models.
    combined = stored_gaussians + provisional
    combined_ids = np.array(stored_ids + [g.class_id for g in provisional], dtype=np.int64)
    half_sq = _half_sq_distances(combined, z, metric)
    relabeled = combined_ids[half_sq.argmin(axis=1)]
    flips = int(np.count_nonzero(relabeled != pseudo))

    # Phase 4: drop starved clusters, compact ids, refit survivors on their
    # cleaned members, and insert them.
    member_rows = {int(pid): np.nonzero(relabeled == pid)[0] for pid in provisional_ids}
    survivors = [
        int(pid) for pid in provisional_ids if member_rows[int(pid)].size >= config.min_class_size
    ]
    dropped = [int(pid - known_before) for pid in provisional_ids if int(pid) not in survivors]

    final_labels = relabeled.copy()
    if dropped:
        keep = stored_gaussians + [g for g in provisional if g.class_id in survivors]
        keep_ids = np.array(stored_ids + survivors, dtype=np.int64)
        affected = np.nonzero(np.isin(relabeled, [known_before + d for d in dropped]))[0]
        if affected.size:
            if keep_ids.size == 0:
                raise EmptyModel("every cluster collapsed and no stored class remains")
            redo = _half_sq_distances(keep, z[affected], metric)
            final_labels[affected] = keep_ids[redo.argmin(axis=1)]

    id_map = {pid: known_before + rank for rank, pid in enumerate(survivors)}
    for pid, new_id in id_map.items():
        final_labels[final_labels == pid] = new_id

    traces: dict[int, FitTrace] = {}
    for pid in survivors:
        new_id = id_map[pid]
        members = FeatureMatrix(z[final_labels == new_id], None)
        gaussian, trace = _fit_single(
            members, old_log_dets, config, class_id=new_id, session=session
        )
        store.add_class(gaussian)
        if trace is not None:
            traces[new_id] = trace

    if config.refit_old:
        for cid in stored_ids:
            rows_idx = np.nonzero(final_labels == cid)[0]
            if rows_idx.size < config.min_class_size:
                continue
            members = FeatureMatrix(z[rows_idx], None)
            refs = [d for i, d in zip(stored_ids, old_log_dets) if i != cid]
            gaussian, trace = _fit_single(members, refs, config, class_id=cid, session=session)
            store.classes[cid] = gaussian
            if trace is not None:
                traces[cid] = trace

    store.next_class_id = known_before + len(survivors)
    store.session_count += 1
    outcome = SessionOutcome(
        session=session,
        known_classes_before=known_before,
        predicted_labels=final_labels,
        novel_count=int(np.count_nonzero(final_labels >= known_before)),
        relabel_flip_count=flips,
        fit_traces=traces,
        dropped_clusters=dropped,
        wall_time=time.perf_counter() - started,
    )
    return store, outcome
