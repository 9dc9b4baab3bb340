"""Similarity and distance functions over raw and whitened feature spaces.

Plain cosine similarity treats feature space as if the data were spheroidal;
when the data carry variance/correlation structure that assumption misleads
angular comparisons. The adjusted variants here first map vectors through
the inverse Cholesky factor of a covariance estimate (whitening), then apply
cosine in the transformed space. A prior-weighted mix of two per-class
inverse factors handles points whose class is unknown.

Note the reference behavior applies the inverse factor to raw vectors, with
no mean subtraction; centering is available behind the ``mean`` argument for
experimentation only.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from .linalg import (
    INVERSE_ATOL,
    CovarianceMatrix,
    CovarianceMode,
    LowerTriangular,
    apply,
    cholesky_lower,
    invert_lower_triangular,
)

if TYPE_CHECKING:
    from .knn import Label

NORM_FLOOR = 1e-300        # vectors with a smaller norm are treated as zero
CLAMP_ATOL = 1e-12         # |cos| may exceed 1 by at most this before clamping


class ZeroVectorError(ValueError):
    """A cosine-family metric received a vector with (near-)zero norm."""


@dataclass(frozen=True)
class SimilarityScore:
    """A cosine-family similarity, clamped into [-1, 1].

    Round-off can push a mathematically valid cosine a few ulps outside
    [-1, 1]; values inside the clamp tolerance are snapped back, anything
    further out is rejected as a caller bug.
    """

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v) or abs(v) > 1.0 + CLAMP_ATOL:
            raise ValueError(f"similarity {v!r} outside [-1, 1] beyond tolerance")
        object.__setattr__(self, "value", min(1.0, max(-1.0, v)))

    def distance(self) -> float:
        """Monotone conversion 1 - value, in [0, 2]; lower means more similar."""
        return 1.0 - self.value


@dataclass(frozen=True)
class WhiteningTransform:
    """A Cholesky factor and its inverse, mapping data to whitened space.

    ``class_label`` records which class the underlying covariance was fitted
    on (None for transforms not tied to a class), ``source_mode`` the
    covariance convention it came from.
    """

    factor: LowerTriangular
    inverse_factor: LowerTriangular
    class_label: Optional["Label"] = None
    source_mode: CovarianceMode = CovarianceMode.SAMPLE

    def __post_init__(self):
        if self.factor.dim != self.inverse_factor.dim:
            raise ValueError("factor and inverse factor dimensions differ")
        residual = self.factor.values @ self.inverse_factor.values - np.eye(self.factor.dim)
        err = np.abs(residual).max()
        if err > INVERSE_ATOL:
            raise ValueError(f"inverse factor check failed: |L*Linv - I| = {err:.3e}")
        object.__setattr__(self, "source_mode", CovarianceMode(self.source_mode))

    @property
    def dim(self) -> int:
        return self.factor.dim


@dataclass(frozen=True)
class ExpectedTransform:
    """Prior-weighted mix of two per-class inverse factors.

    ``mix = prior * positive.inverse_factor + (1 - prior) * negative.inverse_factor``.
    The mix is stored as a general matrix; no triangular structure is assumed
    downstream.
    """

    mix: np.ndarray
    prior: float
    components: tuple[WhiteningTransform, WhiteningTransform]

    def __post_init__(self):
        if not 0.0 <= self.prior <= 1.0:
            raise ValueError(f"prior must lie in [0, 1], got {self.prior}")
        pos, neg = self.components
        if pos.dim != neg.dim:
            raise ValueError("component transform dimensions differ")
        mix = np.asarray(self.mix, dtype=np.float64)
        expected = self.prior * pos.inverse_factor.values + (1.0 - self.prior) * neg.inverse_factor.values
        if mix.shape != expected.shape or np.abs(mix - expected).max() > 1e-12:
            raise ValueError("mix does not equal the prior-weighted component sum")
        object.__setattr__(self, "mix", mix)

    @property
    def dim(self) -> int:
        return self.mix.shape[0]


def whitening_from_covariance(
    c: CovarianceMatrix,
    class_label: Optional["Label"] = None,
    jitter: bool = False,
) -> WhiteningTransform:
    """Factor a covariance matrix and package the factor/inverse pair."""
    factor = cholesky_lower(c, jitter=jitter)
    return WhiteningTransform(
        factor=factor,
        inverse_factor=invert_lower_triangular(factor),
        class_label=class_label,
        source_mode=c.mode,
    )


def _checked_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must be 1-d and equal length, got {a.shape} vs {b.shape}")
    return a, b


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> SimilarityScore:
    """Cosine of the angle between a and b: (a . b) / (|a| |b|)."""
    a, b = _checked_pair(a, b)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a < NORM_FLOOR or norm_b < NORM_FLOOR:
        raise ZeroVectorError("cosine similarity undefined for zero-norm vectors")
    return SimilarityScore(float(a @ b) / (norm_a * norm_b))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine_similarity(a, b); in [0, 2]."""
    return cosine_similarity(a, b).distance()


def whiten(
    t: Union[WhiteningTransform, ExpectedTransform],
    x: np.ndarray,
    mean: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Map x into the (pseudo-)whitened space of the transform.

    The reference behavior applies the matrix to the raw vector. Passing
    ``mean`` subtracts it first (experimental centering; not used by the
    classification pipeline).
    """
    matrix = t.mix if isinstance(t, ExpectedTransform) else t.inverse_factor
    x = np.asarray(x, dtype=np.float64)
    if mean is not None:
        mean = np.asarray(mean, dtype=np.float64)
        if mean.shape != x.shape:
            raise ValueError("mean and vector dimensions differ")
        x = x - mean
    return apply(matrix, x)


def mahalanobis_sq(x: np.ndarray, mu: np.ndarray, t: WhiteningTransform) -> float:
    """Squared Mahalanobis distance via the whitened route |Linv (x - mu)|^2.

    Equivalent to (x - mu)' C^{-1} (x - mu) for the covariance C the
    transform was built from, but never forms C^{-1}.
    """
    x, mu = _checked_pair(x, mu)
    z = apply(t.inverse_factor, x - mu)
    return float(z @ z)


def adjusted_cosine(
    a: np.ndarray,
    b: np.ndarray,
    t: Union[WhiteningTransform, ExpectedTransform],
    mean: Optional[np.ndarray] = None,
) -> SimilarityScore:
    """Cosine similarity after mapping both vectors through the same transform."""
    return cosine_similarity(whiten(t, a, mean), whiten(t, b, mean))


def class_prior_mle(n_pos: int, n_neg: int) -> float:
    """Maximum-likelihood estimate of the positive-class prior from counts."""
    if n_pos < 0 or n_neg < 0:
        raise ValueError("class counts must be nonnegative")
    total = n_pos + n_neg
    if total == 0:
        raise ValueError("cannot estimate a prior from zero observations")
    return n_pos / total


def expected_transform(
    t_pos: WhiteningTransform,
    t_neg: WhiteningTransform,
    prior: float,
) -> ExpectedTransform:
    """Mix two per-class inverse factors by the positive-class prior."""
    if not 0.0 <= prior <= 1.0:
        raise ValueError(f"prior must lie in [0, 1], got {prior}")
    if t_pos.dim != t_neg.dim:
        raise ValueError("transform dimensions differ")
    mix = prior * t_pos.inverse_factor.values + (1.0 - prior) * t_neg.inverse_factor.values
    return ExpectedTransform(mix=mix, prior=prior, components=(t_pos, t_neg))
