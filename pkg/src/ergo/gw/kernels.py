"""Feature embedding, RBF similarity matrices and the KL distortion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ..errors import ValidationError
from ..representations import FeatureGrid

DEFAULT_BANDWIDTH = 0.7


@dataclass(frozen=True)
class FeaturePointSet:
    """Retained pixels as ``[features || x/W || y/H]`` rows."""

    points: np.ndarray
    n_features: int

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1]) if self.points.ndim == 2 else 0


def embed_features(grid: FeatureGrid) -> FeaturePointSet:
    """Drop pixels whose feature vector is all zero, append the normalized position."""
    H, W, C = grid.data.shape
    flat = grid.data.reshape(H * W, C)
    keep = np.flatnonzero(np.any(flat != 0.0, axis=1))
    pts = np.empty((keep.size, C + 2))
    pts[:, :C] = flat[keep]
    pts[:, C] = (keep % W) / W
    pts[:, C + 1] = (keep // W) / H
    return FeaturePointSet(pts, C)


@dataclass(frozen=True)
class KernelParams:
    h: float = DEFAULT_BANDWIDTH
    epsilon_floor: float = 1e-12

    def __post_init__(self):
        if not self.h > 0:
            raise ValidationError("kernel bandwidth must be positive")


@dataclass(frozen=True)
class SimilarityMatrix:
    """``exp(-d^2 / (2 h^2 sigma^2))``.  ``log_values`` is computed directly so
    that far-apart pairs never underflow to ``log(0)``."""

    values: np.ndarray
    log_values: np.ndarray
    sigma2: float

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def _tree_sum(parts: list[np.ndarray]) -> np.ndarray:
    # fixed halving order: the sum over [v || v] is exactly twice the sum over v
    if len(parts) == 1:
        return parts[0]
    half = len(parts) // 2
    return _tree_sum(parts[:half]) + _tree_sum(parts[half:])


def pairwise_sq_distances(P: np.ndarray) -> np.ndarray:
    """Condensed squared distances (``pdist`` order).

    Constant coordinates contribute exact zeros and are skipped; the rest are
    summed in a fixed halving tree.  Appending constants, duplicating every
    coordinate, or scaling by a power of two therefore changes each entry by
    an exact factor (1, 2 or the squared scale).
    """
    n, D = P.shape
    varying = [k for k in range(D) if np.any(P[:, k] != P[0, k])]
    if not varying:
        return np.zeros(n * (n - 1) // 2)
    cols = [pdist(P[:, k:k + 1], "sqeuclidean") for k in varying]
    return _tree_sum(cols)


def similarity_matrix(points, h: float = DEFAULT_BANDWIDTH, epsilon_floor: float = 1e-12) -> SimilarityMatrix:
    """Gaussian RBF similarities with the data-dependent variance
    ``sigma^2 = mean_{i<j} |p_i - p_j|^2``.

    If all points coincide (``sigma^2`` below the floor) every pair is fully
    similar.
    """
    if isinstance(points, FeaturePointSet):
        points = points.points
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValidationError("similarity_matrix needs at least one point")
    n = P.shape[0]
    if n == 1:
        return SimilarityMatrix(np.ones((1, 1)), np.zeros((1, 1)), 0.0)
    d2 = pairwise_sq_distances(P)
    sigma2 = float(d2.mean())
    if sigma2 < epsilon_floor:
        return SimilarityMatrix(np.ones((n, n)), np.zeros((n, n)), sigma2)
    log_c = squareform(-d2 / (2.0 * h * h * sigma2))
    # squareform leaves the diagonal at 0 = log 1
    return SimilarityMatrix(np.exp(log_c), log_c, sigma2)


def kl_distortion(a, b):
    """Pairwise distortion ``a * log(a / b)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(b <= 0) or np.any(a <= 0):
        raise ValidationError("KL distortion is defined for strictly positive similarities")
    out = a * np.log(a / b)
    return float(out) if out.ndim == 0 else out
