"""Dense small-matrix numerics backing the whitening pipeline.

Covariance estimation (population and sample conventions), Cholesky
factorization of symmetric positive-definite matrices, lower-triangular
inversion, and matrix-vector application. Everything operates on float64
numpy arrays; matrices here are small (tens of columns), so clarity wins
over BLAS-level tuning.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

# Contractual tolerances.
SYMMETRY_ATOL = 1e-10      # max |C - C.T| accepted at construction
PIVOT_RTOL = 1e-12         # pivot <= PIVOT_RTOL * max(diag) fails factorization
JITTER_EPS = 1e-10         # opt-in diagonal jitter: JITTER_EPS * trace / p
INVERSE_ATOL = 1e-10       # max |L @ L_inv - I| accepted for a transform pair


class CovarianceMode(str, Enum):
    """Estimation convention: divisor n (population) or n-1 (sample)."""

    POPULATION = "population"
    SAMPLE = "sample"


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot_index`` names the failing column so callers can report which
    variable (or which class covariance) broke positive definiteness.
    """

    def __init__(self, message: str, pivot_index: int):
        super().__init__(message)
        self.pivot_index = pivot_index


def _as_float_matrix(values, name: str) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _as_square_matrix(values, name: str) -> np.ndarray:
    m = _as_float_matrix(values, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class CovarianceMatrix:
    """A symmetric positive-semidefinite p x p matrix with provenance.

    ``mode`` records the estimation convention and ``sample_count`` the
    number of observations behind the estimate (1 is allowed for
    analytically specified population matrices).
    """

    values: np.ndarray
    mode: CovarianceMode
    sample_count: int

    def __post_init__(self):
        m = _as_square_matrix(self.values, "covariance matrix")
        if m.shape[0] < 1:
            raise ValueError("covariance matrix must be at least 1x1")
        asym = np.abs(m - m.T).max() if m.size else 0.0
        if asym > SYMMETRY_ATOL:
            raise ValueError(f"covariance matrix asymmetric by {asym:.3e}")
        mode = CovarianceMode(self.mode)
        min_count = 2 if mode is CovarianceMode.SAMPLE else 1
        if self.sample_count < min_count:
            raise ValueError(
                f"{mode.value} mode requires sample_count >= {min_count}, "
                f"got {self.sample_count}"
            )
        object.__setattr__(self, "values", m)
        object.__setattr__(self, "mode", mode)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class LowerTriangular:
    """A lower-triangular matrix with strictly positive diagonal.

    Entries strictly above the diagonal must be exactly zero; this is the
    storage type for Cholesky factors and their inverses.
    """

    values: np.ndarray

    def __post_init__(self):
        m = _as_square_matrix(self.values, "lower-triangular matrix")
        if np.any(np.triu(m, k=1) != 0.0):
            raise ValueError("matrix has nonzero entries above the diagonal")
        if np.any(np.diag(m) <= 0.0):
            raise ValueError("lower-triangular diagonal must be strictly positive")
        object.__setattr__(self, "values", m)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _as_sample_block(samples, name: str = "samples") -> np.ndarray:
    """Stack samples into an (n, p) float64 block, validating uniformity."""
    if isinstance(samples, np.ndarray):
        block = samples.astype(np.float64, copy=False)
    else:
        samples = list(samples)
        if not samples:
            raise ValueError(f"{name} must be nonempty")
        dims = {np.asarray(s).shape for s in samples}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise ValueError(f"{name} must all be 1-d vectors of equal dimension")
        block = np.asarray(samples, dtype=np.float64)
    if block.ndim == 1:
        block = block.reshape(1, -1)
    if block.ndim != 2 or block.shape[0] < 1 or block.shape[1] < 1:
        raise ValueError(f"{name} must form a nonempty (n, p) block")
    if not np.all(np.isfinite(block)):
        raise ValueError(f"{name} contain non-finite values")
    return block


def mean_vector(samples: Union[np.ndarray, Sequence[np.ndarray]]) -> np.ndarray:
    """Componentwise arithmetic mean of a nonempty set of equal-length vectors."""
    return _as_sample_block(samples).mean(axis=0)


def covariance(
    samples: Union[np.ndarray, Sequence[np.ndarray]],
    mode: CovarianceMode = CovarianceMode.SAMPLE,
) -> CovarianceMatrix:
    """Estimate the covariance of the samples under the given convention.

    Population mode divides by n, sample mode by n-1. The result is
    symmetrized exactly (mirror averaging) so downstream factorization
    never sees round-off asymmetry.
    """
    mode = CovarianceMode(mode)
    block = _as_sample_block(samples)
    n = block.shape[0]
    if mode is CovarianceMode.SAMPLE and n < 2:
        raise ValueError(f"sample covariance requires n >= 2, got {n}")
    centered = block - block.mean(axis=0)
    divisor = n if mode is CovarianceMode.POPULATION else n - 1
    cov = centered.T @ centered / divisor
    cov = 0.5 * (cov + cov.T)
    return CovarianceMatrix(cov, mode, n)


def cholesky_lower(
    c: Union[CovarianceMatrix, np.ndarray],
    jitter: bool = False,
) -> LowerTriangular:
    """Factor a symmetric positive-definite matrix as L @ L.T, L lower.

    Left-looking factorization without pivoting. A pivot at or below
    ``PIVOT_RTOL * max(diagonal)`` raises :class:`NotPositiveDefiniteError`
    naming the failing column. ``jitter=True`` adds
    ``JITTER_EPS * trace / p`` to the diagonal first, for rank-deficient
    class subsets where a hard failure is not wanted.
    """
    if isinstance(c, CovarianceMatrix):
        a = c.values.copy()
    else:
        a = _as_square_matrix(c, "matrix").copy()
        asym = np.abs(a - a.T).max() if a.size else 0.0
        if asym > SYMMETRY_ATOL:
            raise ValueError(f"matrix asymmetric by {asym:.3e}; cannot factor")
    p = a.shape[0]
    if jitter:
        a[np.diag_indices(p)] += JITTER_EPS * np.trace(a) / p
    tol = PIVOT_RTOL * max(float(a.diagonal().max()), 0.0)
    lower = np.zeros_like(a)
    for j in range(p):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > tol:
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite: pivot {pivot:.6e} at "
                f"index {j} (tolerance {tol:.6e})",
                pivot_index=j,
            )
        lower[j, j] = np.sqrt(pivot)
        if j + 1 < p:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return LowerTriangular(lower)


def invert_lower_triangular(l: LowerTriangular) -> LowerTriangular:
    """Invert a lower-triangular matrix by forward substitution."""
    m = l.values if isinstance(l, LowerTriangular) else LowerTriangular(l).values
    p = m.shape[0]
    inv = np.zeros_like(m)
    for j in range(p):
        inv[j, j] = 1.0 / m[j, j]
        for i in range(j + 1, p):
            inv[i, j] = -(m[i, j:i] @ inv[j:i, j]) / m[i, i]
    return LowerTriangular(inv)


def apply(m: Union[np.ndarray, LowerTriangular], x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    mat = m.values if isinstance(m, LowerTriangular) else np.asarray(m, dtype=np.float64)
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {vec.shape}")
    if mat.ndim != 2 or mat.shape[1] != vec.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix {mat.shape} cannot act on vector of "
            f"length {vec.shape[0]}"
        )
    return mat @ vec
