import datetime as dt

import numpy as np
import pytest

from vadtriage.domain import (
    Dataset,
    FloodRisk,
    IncidentCategory,
    IncidentRecord,
    Parcel,
    ParcelKind,
    ResidentialClass,
)
from vadtriage.features import WeightConfig, compute_all_features


def make_parcel(pid="P1", kind=ParcelKind.STRUCTURE, x=0.0, y=0.0,
                neighborhood="N1", value=80.0, flood=FloodRisk.NONE,
                rc=None) -> Parcel:
    if rc is None:
        rc = ResidentialClass.LAND_ONLY if kind is ParcelKind.LAND else ResidentialClass.SINGLE_FAMILY
    return Parcel(id=pid, kind=kind, x=x, y=y, neighborhood_id=neighborhood,
                  property_value=value, flood_risk=flood, residential_class=rc)


def make_incident(pid="P1", category=IncidentCategory.CRIME, date=dt.date(2019, 1, 1),
                  subtype="Part I", amount=0.0, active=False) -> IncidentRecord:
    return IncidentRecord(parcel_id=pid, category=category, subtype=subtype,
                          date=date, amount=amount, active=active)


@pytest.fixture
def weight_cfg():
    # neutral weights: every subtype 1.0, so examples are easy to hand-check
    return WeightConfig(as_of=dt.date(2020, 1, 1), half_life_years=3.0, type_weights={})


def build_dataset(parcels, incidents=(), stats=None, cfg=None):
    ds = Dataset(
        parcels={p.id: p for p in parcels},
        incidents=tuple(incidents),
        neighborhood_stats=stats or {},
    )
    cfg = cfg or WeightConfig(as_of=dt.date(2020, 1, 1), type_weights={})
    return compute_all_features(ds, cfg)


def grid_dataset(n=12, n_neighborhoods=3, seed=0):
    """Small synthetic dataset with spread-out features for sampler tests."""
    rng = np.random.default_rng(seed)
    parcels = []
    incidents = []
    for i in range(n):
        pid = f"P{i:03d}"
        neigh = f"N{i % n_neighborhoods}"
        parcels.append(make_parcel(pid, neighborhood=neigh, value=float(50 + i)))
        incidents.append(make_incident(
            pid, IncidentCategory.TAX_DELINQUENCY,
            date=dt.date(2015 + (i % 5), 6, 1), subtype="CityTax",
            amount=float(rng.integers(100, 2000)),
        ))
    return build_dataset(parcels, incidents)
