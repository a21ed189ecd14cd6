"""Synthetic labeled corpora with known generating parameters.

Class means are placed by seeded rejection sampling so every pair is at
least `separation` times the largest within-class standard deviation
apart. Per-class covariances are random rotations of eigenvalues drawn
uniformly from [1/cov_spread, cov_spread].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePlacement
from .features import FeatureMatrix

PLACEMENT_ATTEMPTS = 1000


@dataclass
class SyntheticDataset:
    """Generated corpus plus the parameters that produced it."""

    features: FeatureMatrix
    means: np.ndarray  # (C, d)
    transforms: np.ndarray  # (C, d, d), covariance = A A^T
    eigenvalues: np.ndarray  # (C, d)

    def covariance(self, class_id: int) -> np.ndarray:
        a = self.transforms[class_id]
        return a @ a.T


def _random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _place_means(
    num_classes: int, dim: int, min_dist: float, rng: np.random.Generator
) -> np.ndarray:
    means = np.zeros((num_classes, dim), dtype=np.float64)
    radius = max(1.0, min_dist) * max(1.0, num_classes ** (1.0 / dim)) / np.sqrt(2.0)
    placed = 0
    attempts = 0
    while placed < num_classes:
        if attempts >= PLACEMENT_ATTEMPTS:
            raise InfeasiblePlacement(
                f"placed {placed}/{num_classes} means at separation {min_dist:.3g} "
                f"within {PLACEMENT_ATTEMPTS} attempts"
            )
        attempts += 1
        candidate = rng.standard_normal(dim) * radius / np.sqrt(dim)
        if placed == 0:
            means[0] = candidate
            placed = 1
            continue
        gaps = np.linalg.norm(means[:placed] - candidate, axis=1)
        if gaps.min() >= min_dist:
            means[placed] = candidate
            placed += 1
        elif attempts % 200 == 0:
            radius *= 1.3  # open up the placement volume rather than stall
    return means


def generate_synthetic(
    num_classes: int,
    dim: int,
    samples_per_class: int,
    separation: float,
    cov_spread: float = 2.0,
    seed: int = 0,
) -> SyntheticDataset:
    """Deterministic labeled corpus of well-controlled Gaussian classes.

    Raises
    ------
    InfeasiblePlacement : mean placement cannot satisfy the separation.
    """
    if num_classes < 1 or dim < 1 or samples_per_class < 1:
        raise ValueError("num_classes, dim and samples_per_class must be >= 1")
    if separation < 0 or cov_spread < 1.0:
        raise ValueError("need separation >= 0 and cov_spread >= 1")
    rng = np.random.default_rng(seed)

    eigenvalues = rng.uniform(1.0 / cov_spread, cov_spread, size=(num_classes, dim))
    transforms = np.empty((num_classes, dim, dim), dtype=np.float64)
    for c in range(num_classes):
        rotation = _random_rotation(dim, rng)
        transforms[c] = rotation * np.sqrt(eigenvalues[c])

    min_dist = separation * float(np.sqrt(eigenvalues.max()))
    means = _place_means(num_classes, dim, min_dist, rng)

    total = num_classes * samples_per_class
    data = np.empty((total, dim), dtype=np.float64)
    labels = np.empty(total, dtype=np.int64)
    for c in range(num_classes):
        z = rng.standard_normal((samples_per_class, dim))
        start = c * samples_per_class
        data[start : start + samples_per_class] = means[c] + z @ transforms[c].T
        labels[start : start + samples_per_class] = c
    return SyntheticDataset(
        features=FeatureMatrix(data, labels),
        means=means,
        transforms=transforms,
        eigenvalues=eigenvalues,
    )
