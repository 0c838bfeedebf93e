import datetime as dt

import pytest

from vadtriage.domain import ParcelKind
from vadtriage.errors import BadDate, DuplicateId, MissingColumn, UnparsableRow
from vadtriage.features import WeightConfig, compute_all_features
from vadtriage.ingest import (
    export_features_csv,
    ingest_incidents,
    ingest_parcels,
    load_dataset,
)

PARCEL_HEADER = "id,residential_class,x,y,neighborhood_id,property_value,flood_risk\n"
INCIDENT_HEADER = "parcel_id,category,subtype,date,amount,active\n"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_three_well_formed_rows(tmp_path):
    path = write(tmp_path, "p.csv", PARCEL_HEADER +
                 "P1,SingleFamily,10,20,N1,80,None\n"
                 "P2,LandOnly,11,21,N1,15,Low\n"
                 "P3,Townhouse,12,22,N2,120,High\n")
    parcels = ingest_parcels(path)
    assert len(parcels) == 3
    assert parcels["P2"].kind is ParcelKind.LAND
    assert parcels["P3"].kind is ParcelKind.STRUCTURE


def test_duplicate_id_names_the_culprit(tmp_path):
    path = write(tmp_path, "p.csv", PARCEL_HEADER +
                 "P1,SingleFamily,0,0,N1,80,None\n"
                 "P1,SingleFamily,1,1,N1,90,None\n")
    with pytest.raises(DuplicateId, match="P1"):
        ingest_parcels(path)


def test_negative_value_reported_with_row_number(tmp_path):
    path = write(tmp_path, "p.csv", PARCEL_HEADER +
                 "P1,SingleFamily,0,0,N1,80,None\n"
                 "P2,SingleFamily,0,0,N1,-5,None\n")
    with pytest.raises(UnparsableRow, match="row 3"):
        ingest_parcels(path)


def test_missing_column_is_fatal(tmp_path):
    path = write(tmp_path, "p.csv", "id,x,y\nP1,0,0\n")
    with pytest.raises(MissingColumn):
        ingest_parcels(path)


def test_schema_mapping_renames_columns(tmp_path):
    path = write(tmp_path, "p.csv",
                 "PARCELID,residential_class,x,y,neighborhood_id,property_value,flood_risk\n"
                 "P1,SingleFamily,0,0,N1,80,None\n")
    parcels = ingest_parcels(path, schema={"id": "PARCELID"})
    assert "P1" in parcels


@pytest.fixture
def parcels(tmp_path):
    path = write(tmp_path, "p.csv", PARCEL_HEADER +
                 "P1,SingleFamily,0,0,N1,80,None\n")
    return ingest_parcels(path)


def test_incidents_attach(tmp_path, parcels):
    path = write(tmp_path, "i.csv", INCIDENT_HEADER +
                 "P1,Crime,Part I,2016-03-01,,false\n"
                 "P1,Crime,Part II,2017-04-01,,false\n")
    report = ingest_incidents(path, parcels)
    assert report.n_accepted == 2
    assert not report.unresolved


def test_out_of_window_excluded_with_warning(tmp_path, parcels, caplog):
    path = write(tmp_path, "i.csv", INCIDENT_HEADER +
                 "P1,Crime,Part I,2009-12-31,,false\n"
                 "P1,Crime,Part I,2015-01-01,,false\n")
    with caplog.at_level("WARNING"):
        report = ingest_incidents(path, parcels)
    assert report.n_accepted == 1
    assert len(report.out_of_window) == 1
    assert "2009-12-31" in caplog.text


def test_code_violation_window_starts_2012(tmp_path, parcels):
    path = write(tmp_path, "i.csv", INCIDENT_HEADER +
                 "P1,CodeViolation,Overgrowth,2011-06-01,,true\n"
                 "P1,CodeViolation,Overgrowth,2012-06-01,,true\n")
    report = ingest_incidents(path, parcels)
    assert report.n_accepted == 1


def test_unknown_parcel_collected_not_dropped(tmp_path, parcels):
    path = write(tmp_path, "i.csv", INCIDENT_HEADER +
                 "P9,Crime,Part I,2016-03-01,,false\n")
    report = ingest_incidents(path, parcels)
    assert report.n_accepted == 0
    assert report.unresolved == [{"row": 2, "parcel_id": "P9"}]


def test_bad_date_raises(tmp_path, parcels):
    path = write(tmp_path, "i.csv", INCIDENT_HEADER +
                 "P1,Crime,Part I,03/01/2016,,false\n")
    with pytest.raises(BadDate):
        ingest_incidents(path, parcels)


def test_feature_export_fixed_column_order(tmp_path):
    p = write(tmp_path, "p.csv", PARCEL_HEADER + "P1,SingleFamily,0,0,N1,80,None\n")
    i = write(tmp_path, "i.csv", INCIDENT_HEADER + "P1,TaxDelinquency,CityTax,2016-03-01,250,false\n")
    ds, _ = load_dataset(p, i)
    ds = compute_all_features(ds, WeightConfig(as_of=dt.date(2020, 1, 1), type_weights={}))
    out = tmp_path / "features.csv"
    export_features_csv(ds, out)
    header = out.read_text().splitlines()[0]
    assert header == ("parcel_id,crime_w,drug_crime_w,code_violation_w,"
                      "delinquent_tax,delinquent_years,unpaid_special_pct,property_value")
