"""Multivariate normal class prototypes.

A class model is a single Gaussian stored through the lower Cholesky factor
of its covariance. The full covariance and its inverse are never
materialized: every quadratic form goes through triangular solves, which
keeps queries O(d^2) and avoids squaring the condition number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, EmptyClass, NotPositiveDefinite
from .features import FeatureMatrix

LOG_2PI = float(np.log(2.0 * np.pi))

SYMMETRY_TOL = 1e-9
LOG_DET_REL_TOL = 1e-12


@dataclass(frozen=True)
class ClassGaussian:
    """One class's multivariate normal N(mean, L L^T).

    Attributes
    ----------
    class_id : non-negative integer identity of the class.
    mean : (d,) float64 vector.
    chol_lower : (d, d) lower-triangular float64 factor with positive diagonal.
    log_det_cov : cached log determinant of the covariance, 2 * sum(log diag L).
    learned_in_session : index of the session in which the class was fitted.
    """

    class_id: int
    mean: np.ndarray
    chol_lower: np.ndarray
    log_det_cov: float
    learned_in_session: int = 0

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        chol = np.ascontiguousarray(self.chol_lower, dtype=np.float64)
        if mean.ndim != 1 or chol.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"mean shape {mean.shape} incompatible with factor shape {chol.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(chol))):
            raise ValueError("gaussian parameters contain NaN or Inf")
        if np.any(np.triu(chol, 1) != 0.0):
            raise ValueError("cholesky factor must be lower-triangular")
        diag = np.diag(chol)
        if np.any(diag <= 0.0):
            raise NotPositiveDefinite("cholesky factor has a non-positive diagonal entry")
        expected = 2.0 * float(np.sum(np.log(diag)))
        if abs(self.log_det_cov - expected) > LOG_DET_REL_TOL * max(1.0, abs(expected)):
            raise ValueError(
                f"cached log determinant {self.log_det_cov} inconsistent with factor ({expected})"
            )
        mean.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "chol_lower", chol)
        object.__setattr__(self, "log_det_cov", float(self.log_det_cov))
        if self.class_id < 0 or self.learned_in_session < 0:
            raise ValueError("class_id and learned_in_session must be non-negative")

    @property
    def dim(self) -> int:
        return self.mean.size

    def covariance(self) -> np.ndarray:
        """Reconstruct the dense covariance (for reporting only)."""
        return self.chol_lower @ self.chol_lower.T


def make_gaussian(
    mean,
    covariance,
    class_id: int = 0,
    learned_in_session: int = 0,
) -> ClassGaussian:
    """Build a ClassGaussian by factoring a covariance matrix.

    The input must be symmetric to within 1e-9 (relative to its largest
    entry); small asymmetries from upstream accumulation are absorbed by
    symmetrizing as (A + A^T) / 2 before factorization.

    Raises
    ------
    DimensionMismatch : covariance is not square d x d for d = len(mean).
    NotPositiveDefinite : the Cholesky factorization hits a non-positive pivot.
    """
    mu = np.ascontiguousarray(mean, dtype=np.float64)
    cov = np.ascontiguousarray(covariance, dtype=np.float64)
    if mu.ndim != 1:
        raise DimensionMismatch(f"mean must be a vector, got shape {mu.shape}")
    if cov.shape != (mu.size, mu.size):
        raise DimensionMismatch(
            f"covariance shape {cov.shape} does not match mean length {mu.size}"
        )
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if cov.size and float(np.max(np.abs(cov - cov.T))) > SYMMETRY_TOL * scale:
        raise ValueError("covariance is not symmetric within tolerance")
    sym = 0.5 * (cov + cov.T)
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"covariance is not positive definite: {exc}") from exc
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return ClassGaussian(
        class_id=class_id,
        mean=mu,
        chol_lower=chol,
        log_det_cov=log_det,
        learned_in_session=learned_in_session,
    )


def _centered(g: ClassGaussian, x) -> np.ndarray:
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != g.mean.shape:
        raise DimensionMismatch(f"input shape {vec.shape} does not match dimension {g.dim}")
    return vec - g.mean


def mahalanobis_sq(g: ClassGaussian, x) -> float:
    """Squared Mahalanobis distance (x - mu)^T Sigma^-1 (x - mu).

    Computed as the squared norm of L^-1 (x - mu), one triangular solve.
    """
    diff = _centered(g, x)
    y = solve_triangular(g.chol_lower, diff, lower=True, check_finite=False)
    return float(y @ y)


def similarity(g: ClassGaussian, x) -> float:
    """exp(-mahalanobis_sq / 2): 1 at the mean, decreasing away from it."""
    return float(np.exp(-0.5 * mahalanobis_sq(g, x)))


def log_pdf(g: ClassGaussian, x) -> float:
    """Gaussian log density ln N(x; mean, Sigma)."""
    return -0.5 * (g.dim * LOG_2PI + g.log_det_cov + mahalanobis_sq(g, x))


def kl_to_standard_normal(g: ClassGaussian) -> float:
    """KL( N(mean, Sigma) || N(0, I) ), closed form.

    0.5 * (tr Sigma + mean^T mean - d - log det Sigma); tr Sigma is the
    squared Frobenius norm of L. Non-negative, zero exactly at (0, I).
    """
    trace = float(np.sum(g.chol_lower * g.chol_lower))
    value = 0.5 * (trace + float(g.mean @ g.mean) - g.dim - g.log_det_cov)
    return max(value, 0.0)


def bhattacharyya(g1: ClassGaussian, g2: ClassGaussian) -> float:
    """Bhattacharyya distance between two Gaussians.

    (1/8) dm^T M^-1 dm + (1/2) ln( det M / sqrt(det S1 det S2) ) with
    M = (S1 + S2) / 2. The mean term uses a triangular solve against the
    Cholesky factor of M; the log-determinant ratio uses the same factor.
    """
    if g1.dim != g2.dim:
        raise DimensionMismatch(f"dimensions differ: {g1.dim} vs {g2.dim}")
    avg = 0.5 * (g1.chol_lower @ g1.chol_lower.T + g2.chol_lower @ g2.chol_lower.T)
    try:
        chol_avg = np.linalg.cholesky(avg)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
        raise NotPositiveDefinite(f"averaged covariance not positive definite: {exc}") from exc
    diff = g2.mean - g1.mean
    y = solve_triangular(chol_avg, diff, lower=True, check_finite=False)
    mean_term = 0.125 * float(y @ y)
    log_det_avg = 2.0 * float(np.sum(np.log(np.diag(chol_avg))))
    det_term = 0.5 * (log_det_avg - 0.5 * (g1.log_det_cov + g2.log_det_cov))
    return mean_term + det_term


def sample(g: ClassGaussian, count: int, seed: int) -> FeatureMatrix:
    """Draw `count` rows mean + L z with z from a seeded standard normal."""
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, g.dim))
    rows = g.mean + z @ g.chol_lower.T
    return FeatureMatrix(rows, None)


def point_estimate(
    class_data: FeatureMatrix,
    jitter: float = 1e-4,
    class_id: int = 0,
    learned_in_session: int = 0,
) -> ClassGaussian:
    """Statistical fit: sample mean and population covariance plus jitter * I.

    The covariance uses the 1/N normalizer. With jitter = 0 and n <= d the
    covariance is rank deficient and factorization fails.

    Raises
    ------
    EmptyClass : no rows.
    NotPositiveDefinite : degenerate covariance (propagated from make_gaussian).
    """
    if jitter < 0:
        raise ValueError("jitter must be >= 0")
    if class_data.n == 0:
        raise EmptyClass("cannot estimate a distribution from zero samples")
    mu = class_data.data.mean(axis=0)
    centered = class_data.data - mu
    cov = (centered.T @ centered) / class_data.n
    cov[np.diag_indices_from(cov)] += jitter
    return make_gaussian(mu, cov, class_id=class_id, learned_in_session=learned_in_session)


def solve_against_cov(g: ClassGaussian, rhs: np.ndarray) -> np.ndarray:
    """Sigma^-1 rhs via two triangular solves against the stored factor."""
    return cho_solve((g.chol_lower, True), rhs, check_finite=False)
