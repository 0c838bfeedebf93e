"""CSV ingestion for parcels and incidents, plus feature export.

Files are UTF-8 CSV with a header row (RFC-4180 quoting). A schema mapping
translates logical column names to whatever the source file calls them;
identity mapping is the default.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .domain import (
    Dataset,
    FEATURE_NAMES,
    FloodRisk,
    IncidentCategory,
    IncidentRecord,
    NeighborhoodStats,
    Parcel,
    ParcelKind,
    ResidentialClass,
    parse_date,
)
from .errors import (
    BadDate,
    DuplicateId,
    InvalidRecord,
    MissingColumn,
    UnparsableRow,
)

log = logging.getLogger(__name__)

PARCEL_COLUMNS = (
    "id",
    "residential_class",
    "x",
    "y",
    "neighborhood_id",
    "property_value",
    "flood_risk",
)

INCIDENT_COLUMNS = ("parcel_id", "category", "subtype", "date", "amount", "active")

#: Study windows per category, inclusive year ranges. Crime/tax run 2010-2019;
#: code violations start in 2012.
DEFAULT_STUDY_WINDOW: dict[IncidentCategory, tuple[int, int]] = {
    IncidentCategory.CRIME: (2010, 2019),
    IncidentCategory.DRUG_CRIME: (2010, 2019),
    IncidentCategory.CODE_VIOLATION: (2012, 2019),
    IncidentCategory.TAX_DELINQUENCY: (2010, 2019),
    IncidentCategory.SPECIAL_ASSESSMENT: (2010, 2019),
    IncidentCategory.FIRE: (2010, 2019),
}


def _resolve_columns(header: Sequence[str], wanted: Sequence[str], schema: Mapping[str, str]):
    mapping = {}
    for logical in wanted:
        source = schema.get(logical, logical)
        if source not in header:
            raise MissingColumn(f"column {source!r} (for {logical!r}) not in header {list(header)}")
        mapping[logical] = source
    return mapping


def ingest_parcels(path, schema: Optional[Mapping[str, str]] = None) -> dict[str, Parcel]:
    """Parse a parcel CSV into validated Parcel records keyed by id.

    ``kind`` is derived from residential_class (LandOnly => Land). Raises
    DuplicateId / UnparsableRow with the offending row number.
    """
    schema = schema or {}
    parcels: dict[str, Parcel] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn(f"{path}: empty file, no header row")
        cols = _resolve_columns(reader.fieldnames, PARCEL_COLUMNS, schema)
        for rownum, row in enumerate(reader, start=2):
            try:
                rc = ResidentialClass(row[cols["residential_class"]].strip())
                kind = ParcelKind.LAND if rc is ResidentialClass.LAND_ONLY else ParcelKind.STRUCTURE
                parcel = Parcel(
                    id=row[cols["id"]].strip(),
                    kind=kind,
                    x=float(row[cols["x"]]),
                    y=float(row[cols["y"]]),
                    neighborhood_id=row[cols["neighborhood_id"]].strip(),
                    property_value=float(row[cols["property_value"]]),
                    flood_risk=FloodRisk(row[cols["flood_risk"]].strip()),
                    residential_class=rc,
                )
            except (ValueError, InvalidRecord, KeyError) as exc:
                raise UnparsableRow(f"{path} row {rownum}: {exc}") from exc
            if parcel.id in parcels:
                raise DuplicateId(f"{path} row {rownum}: duplicate parcel id {parcel.id!r}")
            parcels[parcel.id] = parcel
    return parcels


@dataclass
class IncidentIngestReport:
    """Outcome of an incident ingest: accepted records plus explicit reject
    and exclusion lists (nothing is dropped silently)."""

    incidents: list[IncidentRecord] = field(default_factory=list)
    unresolved: list[dict] = field(default_factory=list)
    out_of_window: list[dict] = field(default_factory=list)

    @property
    def n_accepted(self) -> int:
        return len(self.incidents)


def ingest_incidents(
    path,
    parcels: Mapping[str, Parcel],
    schema: Optional[Mapping[str, str]] = None,
    study_window: Optional[Mapping[IncidentCategory, tuple[int, int]]] = None,
) -> IncidentIngestReport:
    """Parse an incident CSV, attaching records to known parcels.

    Incidents for unknown parcels go to the report's ``unresolved`` list;
    incidents dated outside the per-category study window are excluded with
    a warning and listed under ``out_of_window``.
    """
    schema = schema or {}
    window = dict(DEFAULT_STUDY_WINDOW)
    if study_window:
        window.update(study_window)
    report = IncidentIngestReport()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn(f"{path}: empty file, no header row")
        cols = _resolve_columns(reader.fieldnames, INCIDENT_COLUMNS, schema)
        for rownum, row in enumerate(reader, start=2):
            try:
                category = IncidentCategory(row[cols["category"]].strip())
                date = parse_date(row[cols["date"]])
                amount_text = row[cols["amount"]].strip()
                active_text = row[cols["active"]].strip().lower()
                rec = IncidentRecord(
                    parcel_id=row[cols["parcel_id"]].strip(),
                    category=category,
                    subtype=row[cols["subtype"]].strip(),
                    date=date,
                    amount=float(amount_text) if amount_text else 0.0,
                    active=active_text in ("true", "1", "yes"),
                )
            except BadDate:
                raise
            except (ValueError, InvalidRecord) as exc:
                raise UnparsableRow(f"{path} row {rownum}: {exc}") from exc

            if rec.parcel_id not in parcels:
                report.unresolved.append({"row": rownum, "parcel_id": rec.parcel_id})
                continue
            lo, hi = window[rec.category]
            if not (lo <= rec.date.year <= hi):
                log.warning(
                    "%s row %d: %s incident dated %s outside study window %d-%d; excluded",
                    path, rownum, rec.category.value, rec.date.isoformat(), lo, hi,
                )
                report.out_of_window.append(
                    {"row": rownum, "parcel_id": rec.parcel_id, "date": rec.date.isoformat()}
                )
                continue
            report.incidents.append(rec)
    return report


def ingest_neighborhood_stats(path, schema: Optional[Mapping[str, str]] = None):
    """Neighborhood covariates for the equity probe: income, race share, 311 calls."""
    schema = schema or {}
    wanted = ("neighborhood_id", "median_income", "pct_black", "call_311_count")
    stats: dict[str, NeighborhoodStats] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn(f"{path}: empty file, no header row")
        cols = _resolve_columns(reader.fieldnames, wanted, schema)
        for rownum, row in enumerate(reader, start=2):
            try:
                stats[row[cols["neighborhood_id"]].strip()] = NeighborhoodStats(
                    median_income=float(row[cols["median_income"]]),
                    pct_black=float(row[cols["pct_black"]]),
                    call_311_count=int(row[cols["call_311_count"]]),
                )
            except ValueError as exc:
                raise UnparsableRow(f"{path} row {rownum}: {exc}") from exc
    return stats


def load_dataset(
    parcels_path,
    incidents_path,
    stats_path=None,
    parcel_schema: Optional[Mapping[str, str]] = None,
    incident_schema: Optional[Mapping[str, str]] = None,
    study_window: Optional[Mapping[IncidentCategory, tuple[int, int]]] = None,
) -> tuple[Dataset, IncidentIngestReport]:
    """Convenience loader: parcels + incidents (+ optional neighborhood stats)."""
    parcels = ingest_parcels(parcels_path, parcel_schema)
    report = ingest_incidents(incidents_path, parcels, incident_schema, study_window)
    stats = ingest_neighborhood_stats(stats_path) if stats_path else {}
    ds = Dataset(
        parcels=parcels,
        incidents=tuple(report.incidents),
        neighborhood_stats=stats,
    )
    return ds, report


def export_features_csv(ds: Dataset, path, parcel_ids: Optional[Iterable[str]] = None):
    """One row per parcel: parcel_id then the seven features in fixed order."""
    ids = sorted(parcel_ids) if parcel_ids is not None else sorted(ds.features)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("parcel_id",) + FEATURE_NAMES)
        for pid in ids:
            fv = ds.features[pid]
            writer.writerow([pid] + [getattr(fv, name) for name in FEATURE_NAMES])
