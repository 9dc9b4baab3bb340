"""K-nearest-neighbors classification over pluggable cosine-family metrics.

Three metric modes are supported: raw cosine on untransformed vectors,
per-class whitening (each vector mapped by its own class's inverse factor;
queries therefore need their true label supplied, which leaks the answer --
this oracle mode exists because it is the reference procedure for the
known-covariance experiment and is the source of its perfect accuracy), and
a single expected (prior-mixed) transform applied uniformly.

Neighbors are ranked by distance 1 - cos with a stable record-id tiebreak,
so predictions are deterministic regardless of training-set order.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .metrics import NORM_FLOOR, ExpectedTransform, WhiteningTransform, ZeroVectorError


class Label(Enum):
    """Binary class label; the value doubles as the report row index."""

    NEGATIVE = 0
    POSITIVE = 1

    @property
    def other(self) -> "Label":
        return Label.POSITIVE if self is Label.NEGATIVE else Label.NEGATIVE


@dataclass(frozen=True)
class LabeledPoint:
    """A feature vector with its class label and a stable record id."""

    features: np.ndarray
    label: Label
    point_id: str

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1:
            raise ValueError(f"features must be a 1-d vector, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"point {self.point_id!r} has non-finite features")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "point_id", str(self.point_id))


@dataclass(frozen=True)
class RawCosine:
    """Cosine distance on untransformed vectors."""


@dataclass(frozen=True)
class PerClassWhitened:
    """Each vector whitened by its own class's transform (oracle mode).

    Queries must carry their true label; see :meth:`FittedKnn.predict`.
    """

    positive: WhiteningTransform
    negative: WhiteningTransform

    def __post_init__(self):
        if self.positive.dim != self.negative.dim:
            raise ValueError("per-class transforms have different dimensions")

    def transform_for(self, label: Label) -> WhiteningTransform:
        return self.positive if label is Label.POSITIVE else self.negative


@dataclass(frozen=True)
class ExpectedWhitened:
    """One prior-mixed transform applied to every vector, labels unseen."""

    transform: ExpectedTransform


MetricMode = Union[RawCosine, PerClassWhitened, ExpectedWhitened]

TIE_RULE_NEAREST = "nearest"   # vote ties fall to the nearest tied-class neighbor


@dataclass(frozen=True)
class KnnConfig:
    k: int = 13
    metric: MetricMode = field(default_factory=RawCosine)
    tie_rule: str = TIE_RULE_NEAREST

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.tie_rule != TIE_RULE_NEAREST:
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")


def _transform_rows(metric: MetricMode, rows: np.ndarray, labels: np.ndarray) -> np.ndarray:
    if isinstance(metric, RawCosine):
        return rows
    if isinstance(metric, ExpectedWhitened):
        return rows @ metric.transform.mix.T
    out = np.empty_like(rows)
    for label in Label:
        mask = labels == label.value
        out[mask] = rows[mask] @ metric.transform_for(label).inverse_factor.values.T
    return out


def _metric_dim(metric: MetricMode) -> Optional[int]:
    if isinstance(metric, PerClassWhitened):
        return metric.positive.dim
    if isinstance(metric, ExpectedWhitened):
        return metric.transform.dim
    return None


class FittedKnn:
    """Training set stored pre-transformed per the metric mode."""

    def __init__(self, train: Sequence[LabeledPoint], config: KnnConfig):
        if not train:
            raise ValueError("training set must be nonempty")
        if config.k > len(train):
            raise ValueError(f"k={config.k} exceeds training-set size {len(train)}")
        rows = np.stack([p.features for p in train])
        labels = np.array([p.label.value for p in train], dtype=np.intp)
        expected_dim = _metric_dim(config.metric)
        if expected_dim is not None and rows.shape[1] != expected_dim:
            raise ValueError(
                f"metric transform is {expected_dim}-dimensional but training "
                f"vectors have dimension {rows.shape[1]}"
            )
        if isinstance(config.metric, PerClassWhitened):
            present = {p.label for p in train}
            if present != set(Label):
                missing = (set(Label) - present).pop()
                raise ValueError(f"per-class metric requires both classes; missing {missing}")
        transformed = _transform_rows(config.metric, rows, labels)
        norms = np.linalg.norm(transformed, axis=1)
        if np.any(norms < NORM_FLOOR):
            bad = train[int(np.argmin(norms))].point_id
            raise ZeroVectorError(f"training point {bad!r} has zero norm after transform")
        self.config = config
        self._units = transformed / norms[:, np.newaxis]
        self._labels = labels
        self._ids = np.array([p.point_id for p in train])
        self._n = len(train)

    def __len__(self) -> int:
        return self._n

    @property
    def dim(self) -> int:
        return self._units.shape[1]

    def _transform_query(self, x: np.ndarray, true_label_hint: Optional[Label]) -> np.ndarray:
        metric = self.config.metric
        if isinstance(metric, PerClassWhitened):
            if true_label_hint is None:
                raise ValueError(
                    "per-class whitened metric requires true_label_hint (oracle mode)"
                )
            return metric.transform_for(true_label_hint).inverse_factor.values @ x
        if true_label_hint is not None:
            raise ValueError("true_label_hint is only accepted in per-class whitened mode")
        if isinstance(metric, ExpectedWhitened):
            return metric.transform.mix @ x
        return x

    def _ranked_labels(self, x: np.ndarray, true_label_hint: Optional[Label]) -> np.ndarray:
        """Training labels sorted by (cosine distance to x, record id)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise ValueError(f"query has shape {x.shape}, expected ({self.dim},)")
        q = self._transform_query(x, true_label_hint)
        norm = np.linalg.norm(q)
        if norm < NORM_FLOOR:
            raise ZeroVectorError("query vector has zero norm after transform")
        distances = 1.0 - self._units @ (q / norm)
        order = np.lexsort((self._ids, distances))
        return self._labels[order]

    def predict(
        self, x: np.ndarray, true_label_hint: Optional[Label] = None
    ) -> Label:
        """Majority label among the k nearest stored vectors.

        In per-class whitened mode the query is transformed by its hinted
        (true) class before comparison; in the other modes a hint is
        rejected. Vote ties resolve to the nearest neighbor's label.
        """
        ranked = self._ranked_labels(x, true_label_hint)
        return _vote(ranked, self.config.k)


def _vote(ranked_labels: np.ndarray, k: int) -> Label:
    top = ranked_labels[:k]
    positives = int(top.sum())
    negatives = k - positives
    if positives > negatives:
        return Label.POSITIVE
    if negatives > positives:
        return Label.NEGATIVE
    return Label(int(top[0]))


def fit(train: Sequence[LabeledPoint], config: KnnConfig) -> FittedKnn:
    """Store (and pre-transform) the training set for the configured metric."""
    return FittedKnn(train, config)


@dataclass(frozen=True)
class KSweepResult:
    """Misclassification rate per k, plus the argmin (smallest k on ties)."""

    rates: tuple[tuple[int, float], ...]
    best_k: int


def sweep_k(
    train: Sequence[LabeledPoint],
    validation: Sequence[LabeledPoint],
    metric: MetricMode,
    k_range: Iterable[int],
) -> KSweepResult:
    """Evaluate the held-out misclassification rate for each k in k_range.

    The neighbor ranking per validation point is computed once and shared
    across all k. Under the per-class whitened metric, validation points are
    transformed by their own labels (the mode's oracle semantics).
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range must be nonempty")
    if ks[0] < 1 or ks[-1] > len(train):
        raise ValueError(f"k range {ks[0]}..{ks[-1]} outside 1..{len(train)}")
    if not validation:
        raise ValueError("validation set must be nonempty")
    model = fit(train, KnnConfig(k=ks[-1], metric=metric))
    oracle_mode = isinstance(metric, PerClassWhitened)
    rankings = [
        (model._ranked_labels(p.features, p.label if oracle_mode else None), p.label)
        for p in validation
    ]
    rates = []
    for k in ks:
        errors = sum(1 for ranked, truth in rankings if _vote(ranked, k) is not truth)
        rates.append((k, errors / len(validation)))
    best_k = min(rates, key=lambda kr: (kr[1], kr[0]))[0]
    return KSweepResult(rates=tuple(rates), best_k=best_k)
