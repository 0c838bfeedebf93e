"""Feature engineering: recency-weighted incident counts, the seven-feature
vector, and the candidate-pool filter.

Incident weighting uses exponential half-life decay: an incident ``dt`` years
old contributes ``type_weight * 2**(-dt / half_life_years)``. Per-category
flags control whether subtype weights apply (crime and code violations by
default; drug crime is recency-only).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    Dataset,
    FeatureVector,
    IncidentCategory,
    IncidentRecord,
    Parcel,
    ResidentialClass,
    FloodRisk,
    TAX_CATEGORIES,
    VAD_VIOLATION_SUBTYPES,
)
from .errors import ConfigInvalid, MixedCategories, SpecialExceedsTotal

DAYS_PER_YEAR = 365.25

#: Shipped default: the four VAD-indicating violation subtypes weigh double.
DEFAULT_TYPE_WEIGHTS = {name: 2.0 for name in VAD_VIOLATION_SUBTYPES}

DEFAULT_TYPE_WEIGHTED_CATEGORIES = frozenset(
    {IncidentCategory.CRIME, IncidentCategory.CODE_VIOLATION}
)


@dataclass(frozen=True)
class WeightConfig:
    """Recency/type weighting knobs for incident counts."""

    as_of: dt.date
    half_life_years: float = 3.0
    type_weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_TYPE_WEIGHTS))
    type_weighted_categories: frozenset = DEFAULT_TYPE_WEIGHTED_CATEGORIES

    def __post_init__(self):
        if self.half_life_years <= 0:
            raise ConfigInvalid("half_life_years must be > 0")
        for subtype, w in self.type_weights.items():
            if w <= 0:
                raise ConfigInvalid(f"type weight for {subtype!r} must be > 0")

    def type_weight(self, category: IncidentCategory, subtype: str) -> float:
        if category not in self.type_weighted_categories:
            return 1.0
        return float(self.type_weights.get(subtype, 1.0))


def weighted_count(incidents: Sequence[IncidentRecord], cfg: WeightConfig) -> float:
    """Sum of per-incident weights: type_weight * 2**(-age_years / half_life).

    All incidents must share one category (raises MixedCategories otherwise).
    """
    if not incidents:
        return 0.0
    categories = {inc.category for inc in incidents}
    if len(categories) > 1:
        raise MixedCategories(f"mixed incident categories: {sorted(c.value for c in categories)}")
    total = 0.0
    for inc in incidents:
        age_years = (cfg.as_of - inc.date).days / DAYS_PER_YEAR
        total += cfg.type_weight(inc.category, inc.subtype) * 2.0 ** (-age_years / cfg.half_life_years)
    return total


def unpaid_special_pct(special: float, total_delinquent: float) -> float:
    """Share of special assessment in total delinquency; 0 when nothing is owed."""
    if special < 0 or total_delinquent < 0:
        raise SpecialExceedsTotal("amounts must be >= 0")
    if special > total_delinquent:
        raise SpecialExceedsTotal(
            f"special ({special}) exceeds total delinquent ({total_delinquent})"
        )
    if total_delinquent == 0:
        return 0.0
    return special / total_delinquent


def compute_features(
    parcel: Parcel, incidents: Sequence[IncidentRecord], cfg: WeightConfig
) -> FeatureVector:
    """Build the seven-feature vector for one parcel.

    Pure function of its inputs; missing incident categories yield zeros.
    Only *active* code violations count toward ``code_violation_w``.
    """
    by_cat: dict[IncidentCategory, list[IncidentRecord]] = {}
    for inc in incidents:
        if inc.parcel_id != parcel.id:
            continue
        by_cat.setdefault(inc.category, []).append(inc)

    crime_w = weighted_count(by_cat.get(IncidentCategory.CRIME, []), cfg)
    drug_w = weighted_count(by_cat.get(IncidentCategory.DRUG_CRIME, []), cfg)
    active_cv = [i for i in by_cat.get(IncidentCategory.CODE_VIOLATION, []) if i.active]
    code_w = weighted_count(active_cv, cfg)

    tax_incidents = [
        i for cat in TAX_CATEGORIES for i in by_cat.get(cat, [])
    ]
    delinquent_tax = sum(i.amount for i in tax_incidents)
    delinquent_years = len({i.date.year for i in tax_incidents})
    special_total = sum(
        i.amount for i in by_cat.get(IncidentCategory.SPECIAL_ASSESSMENT, [])
    )
    pct = unpaid_special_pct(special_total, delinquent_tax)

    return FeatureVector(
        crime_w=crime_w,
        drug_crime_w=drug_w,
        code_violation_w=code_w,
        delinquent_tax=delinquent_tax,
        delinquent_years=delinquent_years,
        unpaid_special_pct=pct,
        property_value=parcel.property_value,
    )


def compute_all_features(ds: Dataset, cfg: WeightConfig) -> Dataset:
    """Return a new Dataset with features computed for every parcel."""
    by_parcel = ds.incidents_by_parcel()
    feats = {
        pid: compute_features(parcel, by_parcel[pid], cfg)
        for pid, parcel in ds.parcels.items()
    }
    return ds.with_features(feats)


#: Categories whose presence qualifies a parcel for the candidate pool.
DEFAULT_TRIGGER_CATEGORIES = frozenset(
    {
        IncidentCategory.DRUG_CRIME,
        IncidentCategory.TAX_DELINQUENCY,
        IncidentCategory.SPECIAL_ASSESSMENT,
        IncidentCategory.CODE_VIOLATION,
        IncidentCategory.FIRE,
    }
)

DEFAULT_ALLOWED_CLASSES = frozenset(
    {
        ResidentialClass.SINGLE_FAMILY,
        ResidentialClass.TWO_TO_FOUR_FAMILY,
        ResidentialClass.TOWNHOUSE,
        ResidentialClass.LAND_ONLY,
    }
)

DEFAULT_ALLOWED_FLOOD = frozenset({FloodRisk.NONE, FloodRisk.LOW})


@dataclass(frozen=True)
class FilterConfig:
    trigger_categories: frozenset = DEFAULT_TRIGGER_CATEGORIES
    allowed_classes: frozenset = DEFAULT_ALLOWED_CLASSES
    allowed_flood: frozenset = DEFAULT_ALLOWED_FLOOD


def candidate_filter(ds: Dataset, criteria: FilterConfig = FilterConfig()) -> set[str]:
    """Parcels eligible for triage: residential (or land-only) class, at least
    one trigger-category record, and little or no flood risk."""
    triggered: set[str] = set()
    for inc in ds.incidents:
        if inc.category in criteria.trigger_categories:
            triggered.add(inc.parcel_id)
    keep = set()
    for pid, parcel in ds.parcels.items():
        if parcel.residential_class not in criteria.allowed_classes:
            continue
        if parcel.flood_risk not in criteria.allowed_flood:
            continue
        if pid not in triggered:
            continue
        keep.add(pid)
    return keep


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score columns; constant columns get scale 1 so they map to zero.

    Returns (standardized, means, scales).
    """
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (X - mu) / sd, mu, sd
