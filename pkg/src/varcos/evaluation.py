"""Experiment harness: splits, the three metric-mode cases, and cross-validation.

The three cases wire the metric modes into a common train/evaluate pipeline:

* case 1 -- raw cosine on untransformed vectors;
* case 2 -- per-class whitening from population covariances, with each
  evaluation point transformed by its true class (the oracle/leakage
  procedure; by default the class covariances are estimated over the whole
  dataset, train and validation alike);
* case 3 -- a single expected transform mixing the two training-sample
  inverse factors by the training class prior, applied uniformly.

Cross-validation re-fits the full case pipeline per fold; in particular
case 2's covariances are estimated over each fold's remaining points, so a
held-out point never enters the fit (its label still selects the transform
at predict time, which is that mode's defining leak).
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .knn import (
    ExpectedWhitened,
    KnnConfig,
    Label,
    LabeledPoint,
    MetricMode,
    PerClassWhitened,
    RawCosine,
    fit,
)
from .linalg import CovarianceMode, NotPositiveDefiniteError, covariance
from .metrics import class_prior_mle, expected_transform, whitening_from_covariance

REPORT_ATOL = 1e-12   # self-consistency tolerance for emitted reports


class CaseId(Enum):
    """The three experiment pipelines; values match the CLI --case numbers."""

    RAW_COSINE = 1
    CLASS_ORACLE_WHITENED = 2
    EXPECTED_WHITENED = 3

    @property
    def number(self) -> int:
        return self.value


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/validation partition parameters."""

    train_fraction: float = 0.8
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split(
    data: Dataset, spec: SplitSpec
) -> tuple[list[LabeledPoint], list[LabeledPoint]]:
    """Seeded, reproducible partition into (train, validation).

    The validation size is ceil((1 - train_fraction) * n). Stratified mode
    allocates validation slots per class by largest fractional part of
    (1 - train_fraction) * class_size; near-ties (within 1e-9) go to the
    smaller class so float noise never decides an allocation. Point order
    within each side follows the original dataset order.
    """
    for label in Label:
        if len(data.class_points(label)) < 2:
            raise ValueError(
                f"class {data.label_names[label]!r} has fewer than 2 points; "
                f"cannot split"
            )
    rng = np.random.default_rng(spec.seed)
    n = data.n
    holdout = 1.0 - spec.train_fraction
    n_val = math.ceil(holdout * n - 1e-9)
    n_val = min(max(n_val, 1), n - 1)
    if spec.stratified:
        class_indices = {
            label: [i for i, p in enumerate(data.points) if p.label is label]
            for label in Label
        }
        shares = {}
        fractions = []
        for label in Label:
            quota = holdout * len(class_indices[label])
            shares[label] = int(math.floor(quota + 1e-9))
            fractions.append((label, quota - math.floor(quota + 1e-9)))
        remainder = n_val - sum(shares.values())
        # Largest fractional part first; near-ties favor the smaller class.
        fractions.sort(
            key=lambda lf: (-round(lf[1] / 1e-9), len(class_indices[lf[0]]), lf[0].value)
        )
        for label, _ in fractions[:remainder]:
            shares[label] += 1
        validation_indices = set()
        for label in Label:
            indices = np.array(class_indices[label])
            picked = rng.permutation(indices)[: shares[label]]
            validation_indices.update(int(i) for i in picked)
    else:
        validation_indices = set(int(i) for i in rng.permutation(n)[:n_val])
    train = [p for i, p in enumerate(data.points) if i not in validation_indices]
    validation = [p for i, p in enumerate(data.points) if i in validation_indices]
    return train, validation


def _class_rows(points: Sequence[LabeledPoint], label: Label) -> np.ndarray:
    rows = [p.features for p in points if p.label is label]
    if not rows:
        raise ValueError(f"no points with label {label.name}")
    return np.stack(rows)


def fit_case_metric(
    train: Sequence[LabeledPoint],
    case: CaseId,
    covariance_source: Optional[Sequence[LabeledPoint]] = None,
    label_names: Optional[dict[Label, str]] = None,
    jitter: bool = False,
) -> tuple[MetricMode, bool]:
    """Build the metric mode for a case; returns (metric, needs_true_label).

    ``covariance_source`` widens the points used for case 2's population
    covariances beyond the training set (the reference procedure estimates
    them over all datapoints of each class); case 3 always estimates from
    the training points alone.
    """
    names = label_names or {label: label.name.lower() for label in Label}
    if case is CaseId.RAW_COSINE:
        return RawCosine(), False
    transforms = {}
    if case is CaseId.CLASS_ORACLE_WHITENED:
        source = covariance_source if covariance_source is not None else train
        mode = CovarianceMode.POPULATION
    else:
        source = train
        mode = CovarianceMode.SAMPLE
    for label in Label:
        rows = _class_rows(source, label)
        if rows.shape[0] < 2:
            raise ValueError(
                f"class {names[label]!r} has {rows.shape[0]} point(s); "
                f"covariance estimation needs at least 2"
            )
        try:
            transforms[label] = whitening_from_covariance(
                covariance(rows, mode), class_label=label, jitter=jitter
            )
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(
                f"class {names[label]!r}: {exc}", exc.pivot_index
            ) from exc
    if case is CaseId.CLASS_ORACLE_WHITENED:
        return PerClassWhitened(transforms[Label.POSITIVE], transforms[Label.NEGATIVE]), True
    n_pos = sum(1 for p in train if p.label is Label.POSITIVE)
    n_neg = len(train) - n_pos
    prior = class_prior_mle(n_pos, n_neg)
    mixed = expected_transform(transforms[Label.POSITIVE], transforms[Label.NEGATIVE], prior)
    return ExpectedWhitened(mixed), False


def _evaluate(
    train: Sequence[LabeledPoint],
    held_out: Sequence[LabeledPoint],
    case: CaseId,
    k: int,
    covariance_source: Optional[Sequence[LabeledPoint]] = None,
    label_names: Optional[dict[Label, str]] = None,
    jitter: bool = False,
) -> list[Label]:
    metric, needs_hint = fit_case_metric(
        train, case, covariance_source=covariance_source,
        label_names=label_names, jitter=jitter,
    )
    model = fit(train, KnnConfig(k=k, metric=metric))
    return [
        model.predict(p.features, p.label if needs_hint else None) for p in held_out
    ]


def run_case(
    data: Dataset,
    case: CaseId,
    spec: SplitSpec = SplitSpec(),
    k: int = 13,
    case2_scope: str = "all",
    jitter: bool = False,
) -> EvaluationReport := None,  # placeholder replaced below
) -> "EvaluationReport":
    raise NotImplementedError
