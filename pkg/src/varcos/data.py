"""Dataset ingestion and synthetic data generation.

Two CSV dialects are supported. The breast-cancer diagnostic format is
headerless (header auto-detected): 32 comma-separated fields per row --
record id, diagnosis M or B, then 30 real-valued features; M maps to the
positive class. The generic format is RFC-4180 with a required header, a
caller-named label column holding exactly two distinct values, an optional
id column, and numeric feature columns.

The Gaussian sampler is pinned for cross-platform reproducibility: a PCG64
stream seeded by the spec, uniforms converted to normals by the Box-Muller
transform (``u1`` mapped into (0, 1] as ``1 - random()``; each pair yields
``r*cos`` then ``r*sin``, interleaved), deviates consumed in row-major
order, then colored as ``mean + z @ L.T`` with L the lower Cholesky factor.
"""

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .knn import Label, LabeledPoint
from .linalg import CovarianceMatrix, CovarianceMode, cholesky_lower
from .metrics import WhiteningTransform, adjusted_cosine, cosine_similarity, whitening_from_covariance

WDBC_FIELD_COUNT = 32
WDBC_DIAGNOSES = {"M": Label.POSITIVE, "B": Label.NEGATIVE}


class DatasetFormatError(ValueError):
    """A CSV file violates the expected dataset format."""


class IsotropicCovarianceError(ValueError):
    """The covariance is a multiple of the identity: whitening is a no-op,
    so plain and adjusted cosine rankings coincide and no flip can exist."""


class CounterexampleSearchError(RuntimeError):
    """Bounded search found no ranking flip (likely a metrics regression)."""


@dataclass(frozen=True)
class Dataset:
    """An immutable labeled dataset with display names for the two classes."""

    points: tuple[LabeledPoint, ...]
    feature_names: tuple[str, ...]
    label_names: dict[Label, str]
    provenance: str

    def __post_init__(self):
        if not self.points:
            raise DatasetFormatError(f"{self.provenance}: dataset is empty")
        dims = {p.features.shape[0] for p in self.points}
        if len(dims) != 1:
            raise DatasetFormatError(f"{self.provenance}: mixed feature dimensions {sorted(dims)}")
        if dims != {len(self.feature_names)}:
            raise DatasetFormatError(f"{self.provenance}: feature-name count mismatch")
        for label in Label:
            if not any(p.label is label for p in self.points):
                raise DatasetFormatError(
                    f"{self.provenance}: class {self.label_names.get(label, label.name)!r} "
                    f"has no points"
                )
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def class_points(self, label: Label) -> list[LabeledPoint]:
        return [p for p in self.points if p.label is label]

    def feature_matrix(self) -> np.ndarray:
        return np.stack([p.features for p in self.points])


def _parse_feature(cell: str, row_number: int, column: str) -> float:
    text = cell.strip()
    if not text or text.upper() in {"NA", "NAN", "NULL"}:
        raise DatasetFormatError(f"row {row_number}: missing value in column {column!r}")
    try:
        value = float(text)
    except ValueError:
        raise DatasetFormatError(
            f"row {row_number}: non-numeric value {cell!r} in column {column!r}"
        ) from None
    if not math.isfinite(value):
        raise DatasetFormatError(f"row {row_number}: non-finite value in column {column!r}")
    return value


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_wdbc(path) -> Dataset:
    """Load a breast-cancer diagnostic CSV (id, M/B diagnosis, 30 features)."""
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise DatasetFormatError(f"{path}: file is empty")
    feature_names = tuple(f"feature_{i + 1:02d}" for i in range(WDBC_FIELD_COUNT - 2))
    start = 0
    if len(rows[0]) >= 3 and not _looks_numeric(rows[0][2]):
        # Header row: third field of a data row is always numeric.
        if len(rows[0]) == WDBC_FIELD_COUNT:
            feature_names = tuple(name.strip() for name in rows[0][2:])
        start = 1
    points = []
    seen_ids = set()
    for offset, row in enumerate(rows[start:]):
        row_number = start + offset + 1
        if len(row) != WDBC_FIELD_COUNT:
            raise DatasetFormatError(
                f"row {row_number}: expected {WDBC_FIELD_COUNT} fields, got {len(row)}"
            )
        record_id = row[0].strip()
        diagnosis = row[1].strip()
        if diagnosis not in WDBC_DIAGNOSES:
            raise DatasetFormatError(
                f"row {row_number}: unknown diagnosis code {row[1]!r} (expected M or B)"
            )
        if record_id in seen_ids:
            warnings.warn(f"{path}: duplicate record id {record_id!r} at row {row_number}")
        seen_ids.add(record_id)
        features = [
            _parse_feature(cell, row_number, feature_names[i])
            for i, cell in enumerate(row[2:])
        ]
        points.append(
            LabeledPoint(np.array(features), WDBC_DIAGNOSES[diagnosis], record_id)
        )
    if not points:
        raise DatasetFormatError(f"{path}: no data rows")
    return Dataset(
        points=tuple(points),
        feature_names=feature_names,
        label_names={Label.POSITIVE: "M", Label.NEGATIVE: "B"},
        provenance=str(path),
    )


def load_generic_csv(
    path,
    label_column: str,
    positive_name: str,
    id_column: Optional[str] = "id",
) -> Dataset:
    """Load a headered CSV with a binary label column and numeric features.

    ``id_column`` (when present in the header) supplies record ids and is
    excluded from the features; otherwise 1-based data-row numbers are used.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: file is empty") from None
        header = [name.strip() for name in header]
        if label_column not in header:
            raise DatasetFormatError(f"{path}: no label column {label_column!r} in header")
        label_idx = header.index(label_column)
        id_idx = header.index(id_column) if id_column in header else None
        feature_idx = [
            i for i in range(len(header)) if i != label_idx and i != id_idx
        ]
        if not feature_idx:
            raise DatasetFormatError(f"{path}: no feature columns")
        raw_rows = []
        for row_offset, row in enumerate(reader):
            row_number = row_offset + 2
            if len(row) != len(header):
                raise DatasetFormatError(
                    f"row {row_number}: expected {len(header)} fields, got {len(row)}"
                )
            raw_rows.append((row_number, row))
    if not raw_rows:
        raise DatasetFormatError(f"{path}: no data rows")
    label_values = sorted({row[label_idx].strip() for _, row in raw_rows})
    if len(label_values) != 2:
        raise DatasetFormatError(
            f"{path}: label column must hold exactly 2 distinct values, "
            f"got {label_values}"
        )
    if positive_name not in label_values:
        raise DatasetFormatError(
            f"{path}: positive label {positive_name!r} not among {label_values}"
        )
    negative_name = next(v for v in label_values if v != positive_name)
    points = []
    for data_index, (row_number, row) in enumerate(raw_rows):
        label = Label.POSITIVE if row[label_idx].strip() == positive_name else Label.NEGATIVE
        record_id = row[id_idx].strip() if id_idx is not None else str(data_index + 1)
        features = [
            _parse_feature(row[i], row_number, header[i]) for i in feature_idx
        ]
        points.append(LabeledPoint(np.array(features), label, record_id))
    return Dataset(
        points=tuple(points),
        feature_names=tuple(header[i] for i in feature_idx),
        label_names={Label.POSITIVE: positive_name, Label.NEGATIVE: negative_name},
        provenance=str(path),
    )


def write_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write a dataset in the generic headered format (round-trips exactly).

    Floats are written with ``repr``, whose shortest-round-trip output
    reloads bit-identically.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", label_column, *dataset.feature_names])
        for point in dataset.points:
            writer.writerow(
                [point.point_id, dataset.label_names[point.label]]
                + [repr(float(v)) for v in point.features]
            )


@dataclass(frozen=True)
class GaussianSpec:
    """A seeded multivariate-normal sampling request."""

    mean: np.ndarray
    covariance: CovarianceMatrix
    n: int
    seed: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim != 1 or mean.shape[0] != self.covariance.dim:
            raise ValueError(
                f"mean shape {mean.shape} does not match covariance dimension "
                f"{self.covariance.dim}"
            )
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean contains non-finite entries")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        object.__setattr__(self, "mean", mean)


def _standard_normals(seed: int, count: int) -> np.ndarray:
    """Box-Muller normals from a PCG64 uniform stream (see module docstring)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)   # (0, 1]: keeps log(u1) finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:count]


def generate_gaussian(spec: GaussianSpec) -> np.ndarray:
    """Draw spec.n rows from N(mean, covariance), reproducibly."""
    factor = cholesky_lower(spec.covariance)
    p = spec.covariance.dim
    z = _standard_normals(spec.seed, spec.n * p).reshape(spec.n, p)
    return spec.mean + z @ factor.values.T


def default_flip_covariance() -> CovarianceMatrix:
    """Unit variances with 0.9 correlation: strongly non-spheroidal."""
    return CovarianceMatrix(
        np.array([[1.0, 0.9], [0.9, 1.0]]), CovarianceMode.POPULATION, sample_count=1
    )


@dataclass(frozen=True)
class CosineFlipExample:
    """Three points where plain and adjusted cosine disagree about B's nearest.

    A sits on the 3-sigma contour of the distribution (an outlier), B and C
    on the 1-sigma contour. Plain cosine ranks A as more similar to B than C
    is; whitening by the distribution's inverse factor reverses the ranking.
    """

    spec: GaussianSpec
    point_a: np.ndarray
    point_b: np.ndarray
    point_c: np.ndarray
    plain_ab: float
    plain_bc: float
    adjusted_ab: float
    adjusted_bc: float

    @property
    def plain_prefers(self) -> str:
        """Nearest to B by plain cosine: 'A' or 'C'."""
        return "A" if self.plain_ab > self.plain_bc else "C"

    @property
    def adjusted_prefers(self) -> str:
        return "A" if self.adjusted_ab > self.adjusted_bc else "C"

    @property
    def is_flip(self) -> bool:
        return self.plain_prefers == "A" and self.adjusted_prefers == "C"


def _mahalanobis_contour_point(
    angle: float, transform: WhiteningTransform, radius: float
) -> np.ndarray:
    unit = np.array([math.cos(angle), math.sin(angle)])
    scale = float(np.linalg.norm(transform.inverse_factor.values @ unit))
    return (radius / scale) * unit


def fig1_counterexample(
    seed: int = 0,
    covariance: Optional[CovarianceMatrix] = None,
    max_attempts: int = 20000,
) -> CosineFlipExample:
    """Search for a seeded, reproducible plain-vs-adjusted ranking flip.

    Draws direction triples until plain cosine ranks the outlier A closer to
    B while adjusted cosine ranks C closer, then freezes the triple. Raises
    :class:`IsotropicCovarianceError` when the covariance is a multiple of
    the identity (no flip can exist) and
    :class:`CounterexampleSearchError` when the bounded search fails.
    """
    cov = covariance if covariance is not None else default_flip_covariance()
    if cov.dim != 2:
        raise ValueError("counterexample search is defined for bivariate covariances")
    values = cov.values
    top = float(values.diagonal().max())
    off = abs(float(values[0, 1]))
    spread = float(values.diagonal().max() - values.diagonal().min())
    if off <= 1e-12 * top and spread <= 1e-12 * top:
        raise IsotropicCovarianceError(
            "covariance is isotropic: whitening is a no-op and plain/adjusted "
            "rankings coincide"
        )
    transform = whitening_from_covariance(cov)
    rng = np.random.Generator(np.random.PCG64(seed))
    margin = 1e-6
    for _ in range(max_attempts):
        theta_a, theta_b, theta_c = rng.uniform(0.0, 2.0 * np.pi, size=3)
        a = _mahalanobis_contour_point(theta_a, transform, 3.0)
        b = _mahalanobis_contour_point(theta_b, transform, 1.0)
        c = _mahalanobis_contour_point(theta_c, transform, 1.0)
        plain_ab = cosine_similarity(a, b).value
        plain_bc = cosine_similarity(b, c).value
        if not plain_ab > plain_bc + margin:
            continue
        adjusted_ab = adjusted_cosine(a, b, transform).value
        adjusted_bc = adjusted_cosine(b, c, transform).value
        if adjusted_bc > adjusted_ab + margin:
            return CosineFlipExample(
                spec=GaussianSpec(np.zeros(2), cov, n=500, seed=seed),
                point_a=a,
                point_b=b,
                point_c=c,
                plain_ab=plain_ab,
                plain_bc=plain_bc,
                adjusted_ab=adjusted_ab,
                adjusted_bc=adjusted_bc,
            )
    raise CounterexampleSearchError(
        f"no ranking flip found in {max_attempts} attempts; the covariance may "
        f"be nearly isotropic, or the adjusted metric is broken"
    )
