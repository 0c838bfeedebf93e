"""Rule-labeled baseline model ("simple ML").

Labels come straight from the data: a parcel is VAD when it carries an
active code violation of one of the telling subtypes. Because those
violations define the labels, the code-violation weighted count is removed
from the model's input features.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .domain import (
    Dataset,
    FEATURE_NAMES,
    IncidentCategory,
    ParcelKind,
    VAD_VIOLATION_SUBTYPES,
    stable_seed,
)
from .errors import SingleClass
from .evaluate import InternalAccuracy, internal_accuracy
from .forest import Forest, ForestParams, fit_forest, oob_score

EXCLUDED_FEATURES = ("code_violation_w",)
KEPT_COLUMNS = tuple(i for i, n in enumerate(FEATURE_NAMES) if n not in EXCLUDED_FEATURES)


def rule_labels(ds: Dataset, pool_ids: Iterable[str]) -> dict[str, bool]:
    """VAD iff the parcel has an active code violation of a telling subtype."""
    telling: set[str] = set()
    for inc in ds.incidents:
        if (
            inc.category is IncidentCategory.CODE_VIOLATION
            and inc.active
            and inc.subtype in VAD_VIOLATION_SUBTYPES
        ):
            telling.add(inc.parcel_id)
    return {pid: pid in telling for pid in pool_ids}


@dataclass(frozen=True)
class BaselineKindResult:
    kind: ParcelKind
    forest: Forest
    input_ids: frozenset[str]   # rule-positive parcels the labels came from
    output_ids: frozenset[str]  # predicted VADs over the kind's pool slice
    internal: Optional[InternalAccuracy]


def train_baseline(
    ds: Dataset,
    pool_ids: Iterable[str],
    params: ForestParams = ForestParams(),
    seed: int = 0,
    threshold: float = 0.5,
    with_cv: bool = False,
) -> dict[ParcelKind, BaselineKindResult]:
    """Train one rule-labeled forest per parcel kind over the candidate pool,
    predicting over the same pool. A kind whose rule labels are single-class
    raises SingleClass."""
    pool = sorted(pool_ids)
    labels = rule_labels(ds, pool)
    out: dict[ParcelKind, BaselineKindResult] = {}
    for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
        ids = [pid for pid in pool if ds.parcels[pid].kind is kind]
        if not ids:
            continue
        X = ds.feature_matrix(ids)[:, KEPT_COLUMNS]
        y = np.array([labels[pid] for pid in ids])
        if len(np.unique(y)) < 2:
            raise SingleClass(f"rule labels for {kind.value} parcels are single-class")
        kind_seed = stable_seed(seed, "baseline", kind.value)
        forest = fit_forest(X, y, params, seed=kind_seed, kind=kind.value)
        pred = forest.predict_proba(X) >= threshold
        if with_cv:
            internal = internal_accuracy(X, y, params, seed=kind_seed)
        else:
            internal = InternalAccuracy(cv_mean=None, per_fold=(), oob=oob_score(forest, y))
        out[kind] = BaselineKindResult(
            kind=kind,
            forest=forest,
            input_ids=frozenset(pid for pid in ids if labels[pid]),
            output_ids=frozenset(pid for pid, p in zip(ids, pred) if p),
            internal=internal,
        )
    return out
