"""Core domain types: parcels, incidents, feature vectors, labels.

All types are frozen dataclasses; invariants are checked at construction so
downstream code never sees a malformed record.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidRecord, UnresolvedParcel


class ParcelKind(str, Enum):
    LAND = "Land"
    STRUCTURE = "Structure"


class FloodRisk(str, Enum):
    NONE = "None"
    LOW = "Low"
    HIGH = "High"


class ResidentialClass(str, Enum):
    SINGLE_FAMILY = "SingleFamily"
    TWO_TO_FOUR_FAMILY = "TwoToFourFamily"
    TOWNHOUSE = "Townhouse"
    LAND_ONLY = "LandOnly"
    OTHER = "Other"


class IncidentCategory(str, Enum):
    CRIME = "Crime"
    DRUG_CRIME = "DrugCrime"
    CODE_VIOLATION = "CodeViolation"
    TAX_DELINQUENCY = "TaxDelinquency"
    SPECIAL_ASSESSMENT = "SpecialAssessment"
    FIRE = "Fire"


TAX_CATEGORIES = frozenset({IncidentCategory.TAX_DELINQUENCY, IncidentCategory.SPECIAL_ASSESSMENT})

#: Code-violation subtypes that by themselves indicate VAD conditions; used
#: by the rule-based baseline labeler and boosted in the default type weights.
VAD_VIOLATION_SUBTYPES = (
    "Condemnation",
    "Vacant Property Clean/Mow",
    "Unsafe Secure",
    "Unsafe Demolition",
)


@dataclass(frozen=True)
class Parcel:
    """A land or structure unit with municipal attributes attached.

    ``property_value`` is in thousands of dollars. Location is planar
    (x, y meters in a local projection).
    """

    id: str
    kind: ParcelKind
    x: float
    y: float
    neighborhood_id: str
    property_value: float
    flood_risk: FloodRisk
    residential_class: ResidentialClass

    def __post_init__(self):
        if self.property_value < 0:
            raise InvalidRecord(f"parcel {self.id}: property_value must be >= 0")
        land = self.kind is ParcelKind.LAND
        land_only = self.residential_class is ResidentialClass.LAND_ONLY
        if land != land_only:
            raise InvalidRecord(
                f"parcel {self.id}: kind {self.kind.value} inconsistent with "
                f"residential_class {self.residential_class.value}"
            )


@dataclass(frozen=True)
class IncidentRecord:
    """A dated, typed event attached to a parcel.

    ``amount`` (dollars) is meaningful for tax categories only; ``active``
    for code violations only.
    """

    parcel_id: str
    category: IncidentCategory
    date: dt.date
    subtype: str = ""
    amount: float = 0.0
    active: bool = False

    def __post_init__(self):
        if self.amount < 0:
            raise InvalidRecord(f"incident for {self.parcel_id}: negative amount")
        if self.amount > 0 and self.category not in TAX_CATEGORIES:
            raise InvalidRecord(
                f"incident for {self.parcel_id}: amount set on non-tax category "
                f"{self.category.value}"
            )


#: Fixed model-feature order; column indices in every matrix follow this.
FEATURE_NAMES = (
    "crime_w",
    "drug_crime_w",
    "code_violation_w",
    "delinquent_tax",
    "delinquent_years",
    "unpaid_special_pct",
    "property_value",
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    """The seven model inputs for one parcel."""

    crime_w: float
    drug_crime_w: float
    code_violation_w: float
    delinquent_tax: float
    delinquent_years: int
    unpaid_special_pct: float
    property_value: float

    def __post_init__(self):
        for name in ("crime_w", "drug_crime_w", "code_violation_w", "delinquent_tax"):
            if getattr(self, name) < 0:
                raise InvalidRecord(f"{name} must be >= 0")
        if self.delinquent_years < 0:
            raise InvalidRecord("delinquent_years must be >= 0")
        if not 0.0 <= self.unpaid_special_pct <= 1.0:
            raise InvalidRecord("unpaid_special_pct must be in [0, 1]")
        if self.property_value < 0:
            raise InvalidRecord("property_value must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class NeighborhoodStats:
    median_income: float
    pct_black: float
    call_311_count: int


class LabelValue(str, Enum):
    VAD = "VAD"
    NOT_VAD = "NotVAD"


class Provenance(str, Enum):
    EXPERT = "expert"
    RESOLUTION = "resolution"
    FIELD_SURVEY = "field_survey"
    CODE_VIOLATION_RULE = "code_violation_rule"
    USPS = "usps"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class LabelRecord:
    """One annotator judgment. The label log is append-only; newer records
    supersede older ones only through :func:`effective_labels` precedence."""

    parcel_id: str
    annotator_id: str
    value: LabelValue
    round: int
    timestamp: str  # ISO-8601
    provenance: Provenance = Provenance.EXPERT
    comment: str = ""

    def to_dict(self) -> dict:
        return {
            "parcel_id": self.parcel_id,
            "annotator_id": self.annotator_id,
            "value": self.value.value,
            "round": self.round,
            "timestamp": self.timestamp,
            "provenance": self.provenance.value,
            "comment": self.comment,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabelRecord":
        return cls(
            parcel_id=d["parcel_id"],
            annotator_id=d["annotator_id"],
            value=LabelValue(d["value"]),
            round=int(d["round"]),
            timestamp=d["timestamp"],
            provenance=Provenance(d["provenance"]),
            comment=d.get("comment", ""),
        )


def effective_labels(records: Iterable[LabelRecord]) -> dict[str, LabelValue]:
    """Collapse an append-only label log to one label per parcel.

    Precedence: resolution records beat everything else; within a precedence
    tier the latest (timestamp, arrival order) wins.
    """
    best: dict[str, tuple[int, str, int]] = {}
    out: dict[str, LabelValue] = {}
    for seq, rec in enumerate(records):
        tier = 1 if rec.provenance is Provenance.RESOLUTION else 0
        key = (tier, rec.timestamp, seq)
        if rec.parcel_id not in best or key > best[rec.parcel_id]:
            best[rec.parcel_id] = key
            out[rec.parcel_id] = rec.value
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable bundle of parcels, incidents, computed features, and
    neighborhood statistics."""

    parcels: dict[str, Parcel]
    incidents: tuple[IncidentRecord, ...]
    features: dict[str, FeatureVector] = field(default_factory=dict)
    neighborhood_stats: dict[str, NeighborhoodStats] = field(default_factory=dict)

    def __post_init__(self):
        for inc in self.incidents:
            if inc.parcel_id not in self.parcels:
                raise UnresolvedParcel(f"incident references unknown parcel {inc.parcel_id}")

    def incidents_by_parcel(self) -> dict[str, list[IncidentRecord]]:
        idx: dict[str, list[IncidentRecord]] = {pid: [] for pid in self.parcels}
        for inc in self.incidents:
            idx[inc.parcel_id].append(inc)
        return idx

    def with_features(self, features: Mapping[str, FeatureVector]) -> "Dataset":
        return Dataset(
            parcels=self.parcels,
            incidents=self.incidents,
            features=dict(features),
            neighborhood_stats=self.neighborhood_stats,
        )

    def feature_matrix(self, parcel_ids: Iterable[str]) -> np.ndarray:
        """(n, 7) float64 matrix in FEATURE_NAMES column order."""
        rows = [self.features[pid].as_array() for pid in parcel_ids]
        if not rows:
            return np.empty((0, N_FEATURES), dtype=np.float64)
        return np.vstack(rows)

    def kinds(self, parcel_ids: Iterable[str]) -> list[ParcelKind]:
        return [self.parcels[pid].kind for pid in parcel_ids]


def parse_date(text: str) -> dt.date:
    """ISO YYYY-MM-DD; raises BadDate on anything else."""
    from .errors import BadDate

    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise BadDate(f"unparsable date {text!r}") from exc


def stable_seed(*parts) -> int:
    """Derive a 64-bit seed from arbitrary string/int parts.

    Uses sha256 so results do not depend on PYTHONHASHSEED.
    """
    import hashlib

    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")
