"""Gradient-based Gaussian fitting with covariance-aligned early stopping.

Each class is fitted by maximizing a closed-form evidence lower bound: the
average data log-likelihood under N(mean, Sigma) minus a scaled
KL(N(mean, Sigma) || N(0, I)). Parameters start at (0, I) and move by plain
fixed-step gradient ascent. While other classes exist, training halts as
soon as the candidate's covariance determinant reaches the running average
of theirs, which keeps the scales of old and new classes aligned.

The covariance is parameterized by a lower-triangular factor whose diagonal
is stored unconstrained and mapped through softplus, so Sigma stays
symmetric positive definite at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, logsumexp

from .errors import (
    DimensionMismatch,
    EmptyBatch,
    EmptyClass,
    EmptyReferenceSet,
    MissingLabels,
    NonFiniteLoss,
)
from .features import FeatureMatrix
from .gaussians import LOG_2PI, ClassGaussian

STOP_EARLY = "early_stop"
STOP_PLATEAU = "plateau"
STOP_MAX_STEPS = "max_steps"

PLATEAU_PATIENCE = 10


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_inv(y) -> np.ndarray:
    # log(exp(y) - 1), stable for large y
    y = np.asarray(y, dtype=np.float64)
    return y + np.log1p(-np.exp(-y))


@dataclass
class FitConfig:
    """Knobs for one gradient-ascent fit."""

    learning_rate: float = 1e-5
    max_steps: int = 1000
    batch_size: int = 0  # 0 = full batch
    epsilon: float = 0.01
    kl_weight_mode: str = "per_datum"  # or "fixed"
    early_stop_enabled: bool = True
    plateau_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.batch_size < 0:
            raise ValueError("batch_size must be >= 0")
        if self.kl_weight_mode not in ("per_datum", "fixed"):
            raise ValueError(f"unknown kl_weight_mode {self.kl_weight_mode!r}")

    def kl_scale(self, class_size: int) -> float:
        if self.kl_weight_mode == "per_datum":
            return 1.0 / max(class_size, 1)
        return 1.0


@dataclass
class VariationalParams:
    """Free parameters of one Gaussian fit.

    `chol_raw` holds the lower triangle of the covariance factor; its
    diagonal entries are unconstrained reals mapped through softplus, so the
    implied factor always has a strictly positive diagonal.
    """

    mean: np.ndarray
    chol_raw: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "VariationalParams":
        raw = np.zeros((dim, dim), dtype=np.float64)
        np.fill_diagonal(raw, softplus_inv(1.0))
        return cls(mean=np.zeros(dim, dtype=np.float64), chol_raw=raw)

    @property
    def dim(self) -> int:
        return self.mean.size

    def chol(self) -> np.ndarray:
        lower = np.tril(self.chol_raw, -1)
        lower[np.diag_indices_from(lower)] = softplus(np.diag(self.chol_raw))
        return lower

    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(softplus(np.diag(self.chol_raw)))))

    def to_gaussian(self, class_id: int, learned_in_session: int = 0) -> ClassGaussian:
        return ClassGaussian(
            class_id=class_id,
            mean=self.mean.copy(),
            chol_lower=self.chol(),
            log_det_cov=self.log_det_cov(),
            learned_in_session=learned_in_session,
        )


@dataclass
class FitTrace:
    """Per-step optimization record plus the reason training stopped."""

    steps: list[int] = field(default_factory=list)
    elbo: list[float] = field(default_factory=list)
    log_det_cov: list[float] = field(default_factory=list)
    r_ratio: Optional[list[float]] = None
    stop_reason: str = STOP_MAX_STEPS

    def __len__(self) -> int:
        return len(self.steps)


def det_ratio(candidate_log_det: float, reference_log_dets) -> float:
    """Log of candidate determinant over the arithmetic mean of references.

    Evaluated entirely in log space: candidate_log_det minus
    (logsumexp(references) - log k). Zero when the candidate determinant
    equals the mean of the reference determinants.
    """
    refs = np.asarray(reference_log_dets, dtype=np.float64)
    if refs.size == 0:
        raise EmptyReferenceSet("determinant ratio needs at least one reference")
    return float(candidate_log_det - (logsumexp(refs) - np.log(refs.size)))


def det_regularizer(candidate_log_det: float, reference_log_dets) -> float:
    """Squared determinant misalignment, exposed as a diagnostic only."""
    return det_ratio(candidate_log_det, reference_log_dets) ** 2


def _batch_summary(rows: np.ndarray):
    """Mean and scatter (population second moment about the mean)."""
    mean = rows.mean(axis=0)
    centered = rows - mean
    scatter = (centered.T @ centered) / rows.shape[0]
    return mean, scatter


def _elbo_value(mean, lower, log_det, batch_mean, batch_scatter, kl_scale) -> float:
    d = mean.size
    offset = batch_mean - mean
    second = batch_scatter + np.outer(offset, offset)
    quad = float(np.trace(cho_solve((lower, True), second, check_finite=False)))
    recon = -0.5 * (d * LOG_2PI + log_det + quad)
    kl = 0.5 * (float(np.sum(lower * lower)) + float(mean @ mean) - d - log_det)
    return recon - kl_scale * kl


def _elbo_gradient(mean, lower, raw_diag, batch_mean, batch_scatter, kl_scale):
    offset = batch_mean - mean
    second = batch_scatter + np.outer(offset, offset)
    grad_mean = cho_solve((lower, True), offset, check_finite=False) - kl_scale * mean

    # d/dL of the average quadratic form is Sigma^-1 S Sigma^-1 L, which
    # collapses to (Sigma^-1 S) L^-T; each factor is a triangular solve.
    t1 = cho_solve((lower, True), second, check_finite=False)
    g = solve_triangular(lower, t1.T, lower=True, check_finite=False).T
    inv_diag = 1.0 / np.diag(lower)
    grad_l = np.tril(g)
    diag_idx = np.diag_indices_from(grad_l)
    grad_l[diag_idx] -= inv_diag
    grad_l -= kl_scale * np.tril(lower)
    grad_l[diag_idx] += kl_scale * inv_diag

    grad_raw = grad_l
    grad_raw[diag_idx] *= expit(raw_diag)
    return grad_mean, grad_raw


def _check_batch(params: VariationalParams, batch: FeatureMatrix):
    if batch.n == 0:
        raise EmptyBatch("batch must contain at least one row")
    if batch.dim != params.dim:
        raise DimensionMismatch(f"batch dim {batch.dim} does not match params dim {params.dim}")


def elbo(params: VariationalParams, batch: FeatureMatrix, kl_scale: float) -> float:
    """Average log likelihood of the batch minus kl_scale times the prior KL."""
    _check_batch(params, batch)
    lower = params.chol()
    batch_mean, batch_scatter = _batch_summary(batch.data)
    return _elbo_value(params.mean, lower, params.log_det_cov(), batch_mean, batch_scatter, kl_scale)


def elbo_gradient(params: VariationalParams, batch: FeatureMatrix, kl_scale: float):
    """Analytic gradient of `elbo` over (mean, chol_raw).

    The diagonal entries carry the softplus chain factor so the result is the
    gradient with respect to the raw (unconstrained) parameterization.
    """
    _check_batch(params, batch)
    lower = params.chol()
    batch_mean, batch_scatter = _batch_summary(batch.data)
    return _elbo_gradient(
        params.mean, lower, np.diag(params.chol_raw), batch_mean, batch_scatter, kl_scale
    )


def fit_class(
    class_data: FeatureMatrix,
    reference_log_dets,
    config: FitConfig,
    class_id: int = 0,
    learned_in_session: int = 0,
) -> tuple[ClassGaussian, FitTrace]:
    """Fit one class by gradient ascent from (0, I).

    Stopping order, checked after every step: first, when early stopping is
    enabled and references exist, stop as soon as the determinant ratio
    reaches -epsilon; otherwise stop after the objective changes by less
    than plateau_tol for 10 consecutive steps, or at max_steps.

    Raises
    ------
    EmptyClass : no rows to fit.
    NonFiniteLoss : the objective left the representable range, which
        signals a learning-rate or data-scale mismatch.
    """
    if class_data.n == 0:
        raise EmptyClass("cannot fit a class with zero samples")
    refs = np.asarray(reference_log_dets, dtype=np.float64)
    has_refs = refs.size > 0
    ref_log_mean = float(logsumexp(refs) - np.log(refs.size)) if has_refs else 0.0
    kl_scale = config.kl_scale(class_data.n)

    n = class_data.n
    use_minibatch = 0 < config.batch_size < n
    full_mean, full_scatter = (None, None)
    if not use_minibatch:
        full_mean, full_scatter = _batch_summary(class_data.data)
    rng = np.random.default_rng(config.seed)
    order = np.empty(0, dtype=np.int64)
    cursor = 0

    params = VariationalParams.identity(class_data.dim)
    trace = FitTrace(r_ratio=[] if has_refs else None)
    prev_elbo: float | None = None
    flat_run = 0
    stop_reason = STOP_MAX_STEPS

    for step in range(1, config.max_steps + 1):
        if use_minibatch:
            if cursor + config.batch_size > order.size:
                order = rng.permutation(n)
                cursor = 0
            rows = class_data.data[order[cursor : cursor + config.batch_size]]
            cursor += config.batch_size
            batch_mean, batch_scatter = _batch_summary(rows)
        else:
            batch_mean, batch_scatter = full_mean, full_scatter

        lower = params.chol()
        grad_mean, grad_raw = _elbo_gradient(
            params.mean, lower, np.diag(params.chol_raw), batch_mean, batch_scatter, kl_scale
        )
        params.mean = params.mean + config.learning_rate * grad_mean
        params.chol_raw = params.chol_raw + config.learning_rate * grad_raw

        lower = params.chol()
        assert np.all(np.diag(lower) > 0.0)
        log_det = params.log_det_cov()
        value = _elbo_value(params.mean, lower, log_det, batch_mean, batch_scatter, kl_scale)
        if not np.isfinite(value) or not np.isfinite(log_det):
            raise NonFiniteLoss(
                f"objective became non-finite at step {step}; "
                "lower the learning rate or rescale the features"
            )

        trace.steps.append(step)
        trace.elbo.append(value)
        trace.log_det_cov.append(log_det)
        ratio = None
        if has_refs:
            ratio = log_det - ref_log_mean
            trace.r_ratio.append(ratio)

        if config.early_stop_enabled and has_refs and ratio >= -config.epsilon:
            stop_reason = STOP_EARLY
            break
        if prev_elbo is not None and abs(value - prev_elbo) < config.plateau_tol:
            flat_run += 1
            if flat_run >= PLATEAU_PATIENCE:
                stop_reason = STOP_PLATEAU
                break
        else:
            flat_run = 0
        prev_elbo = value

    trace.stop_reason = stop_reason
    return params.to_gaussian(class_id, learned_in_session), trace


def fit_all_classes(
    data: FeatureMatrix,
    existing_log_dets: Mapping[int, float],
    config: FitConfig,
    session: int,
    refit_old: bool = False,
) -> list[tuple[ClassGaussian, FitTrace]]:
    """Fit every labeled class in ascending class-id order.

    The reference set starts with the determinants of already-stored classes
    and grows with each newly fitted class, so later classes in the batch
    stop against everything fitted before them. Classes already present in
    `existing_log_dets` are skipped unless `refit_old` is set.
    """
    if data.n == 0:
        return []
    if not data.is_fully_labeled:
        raise MissingLabels("all rows must carry a non-negative label")
    references = [float(v) for _, v in sorted(existing_log_dets.items())]
    results: list[tuple[ClassGaussian, FitTrace]] = []
    for class_id in data.class_ids():
        cid = int(class_id)
        if cid in existing_log_dets and not refit_old:
            continue
        rows = data.rows_of(cid)
        gaussian, trace = fit_class(
            rows, references, config, class_id=cid, learned_in_session=session
        )
        references.append(gaussian.log_det_cov)
        results.append((gaussian, trace))
    return results
