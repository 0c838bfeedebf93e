"""Synthetic municipality generator with planted ground truth.

The generative story: neighborhoods sit on a grid with incomes and a random
effect; each parcel draws latent per-feature propensities; VAD status is
Bernoulli in a logistic of those propensities plus the (scaled) neighborhood
effect; incidents are then generated conditional on VAD status, so VAD
parcels accumulate more records of every kind. A reporting-bias knob deletes
code-violation reports in the lowest-income tercile, mimicking neighborhoods
that underreport to the civic hotline.

Everything is deterministic in the seed; the suppression stage consumes its
own substream so two runs differing only in the bias knob produce identical
records everywhere else.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .domain import (
    Dataset,
    FloodRisk,
    IncidentCategory,
    IncidentRecord,
    LabelRecord,
    LabelValue,
    NeighborhoodStats,
    Parcel,
    ParcelKind,
    Provenance,
    ResidentialClass,
    VAD_VIOLATION_SUBTYPES,
    stable_seed,
)
from .errors import ConfigInvalid

ORDINARY_VIOLATION_SUBTYPES = (
    "Overgrowth",
    "Trash/Debris",
    "Inoperable Vehicle",
    "Graffiti",
)

CRIME_SUBTYPES = ("Part I", "Part II")

#: Default propensity coefficients, one per feature column: positive pushes
#: toward VAD, the property-value entry is negative (cheap parcels decay).
DEFAULT_FEATURE_COEFFS = (0.8, 0.6, 0.9, 0.8, 0.6, 0.3, -0.7)


@dataclass(frozen=True)
class CityConfig:
    n_parcels: int = 5000
    n_neighborhoods: int = 20
    structure_fraction: float = 0.6
    income_low: float = 25_000.0
    income_high: float = 95_000.0
    spatial_rho: float = 0.35
    vad_base_rate: float = 0.15
    feature_coeffs: tuple[float, ...] = DEFAULT_FEATURE_COEFFS
    reporting_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("structure_fraction", "spatial_rho", "vad_base_rate", "reporting_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigInvalid(f"{name} must be in [0, 1], got {v}")
        if self.n_parcels < self.n_neighborhoods:
            raise ConfigInvalid("n_parcels must be >= n_neighborhoods")
        if len(self.feature_coeffs) != 7:
            raise ConfigInvalid("feature_coeffs must have seven entries")
        if self.income_low <= 0 or self.income_high <= self.income_low:
            raise ConfigInvalid("income bounds must satisfy 0 < low < high")


@dataclass(frozen=True)
class GroundTruth:
    """Planted VAD status and latent probability per parcel. Kept out of the
    Dataset on purpose: only evaluators and scripted annotators may read it."""

    is_vad: dict[str, bool]
    latent_score: dict[str, float]

    def vad_ids(self) -> set[str]:
        return {pid for pid, v in self.is_vad.items() if v}

    def to_json(self) -> str:
        return json.dumps(
            {"is_vad": self.is_vad, "latent_score": self.latent_score},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        return cls(is_vad=d["is_vad"], latent_score=d["latent_score"])

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _random_date(rng, year_lo: int, year_hi: int) -> dt.date:
    start = dt.date(year_lo, 1, 1).toordinal()
    end = dt.date(year_hi, 12, 31).toordinal()
    return dt.date.fromordinal(int(rng.integers(start, end + 1)))


def suppressed_neighborhoods(incomes: dict[str, float]) -> set[str]:
    """Lowest-income tercile: the neighborhoods subject to reporting bias."""
    ordered = sorted(incomes, key=lambda g: (incomes[g], g))
    k = math.ceil(len(ordered) / 3)
    return set(ordered[:k])


def generate_city(cfg: CityConfig) -> tuple[Dataset, GroundTruth]:
    """Build a synthetic municipality plus its hidden ground truth."""
    root = np.random.SeedSequence(cfg.seed)
    (ss_layout, ss_parcels, ss_latent, ss_incidents, ss_suppress, ss_stats) = root.spawn(6)
    rng_layout = np.random.default_rng(ss_layout)
    rng_parcels = np.random.default_rng(ss_parcels)
    rng_latent = np.random.default_rng(ss_latent)
    rng_inc = np.random.default_rng(ss_incidents)
    rng_sup = np.random.default_rng(ss_suppress)
    rng_stats = np.random.default_rng(ss_stats)

    J = cfg.n_neighborhoods
    side = math.ceil(math.sqrt(J))
    neigh_ids = [f"N{j:02d}" for j in range(J)]
    incomes = rng_layout.uniform(cfg.income_low, cfg.income_high, size=J)
    income_rank = np.argsort(np.argsort(incomes))
    pct_black = np.clip(
        0.9 - 0.85 * income_rank / max(J - 1, 1) + rng_layout.normal(0.0, 0.08, size=J),
        0.02,
        0.97,
    )
    neigh_effect = rng_layout.normal(0.0, 1.0, size=J)
    centers = np.array([(1000.0 * (j % side), 1000.0 * (j // side)) for j in range(J)])

    n = cfg.n_parcels
    neigh_of = rng_parcels.integers(0, J, size=n)
    pos = centers[neigh_of] + rng_parcels.normal(0.0, 180.0, size=(n, 2))
    is_structure = rng_parcels.random(n) < cfg.structure_fraction
    class_draw = rng_parcels.random(n)
    flood_draw = rng_parcels.random(n)

    z = rng_latent.normal(0.0, 1.0, size=(n, 7))
    noise = z @ np.asarray(cfg.feature_coeffs) + cfg.spatial_rho * 2.0 * neigh_effect[neigh_of]
    # calibrate the intercept so the realized VAD rate tracks the configured
    # base rate despite the variance of the propensity terms
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if float(_sigmoid(mid + noise).mean()) < cfg.vad_base_rate:
            lo = mid
        else:
            hi = mid
    p_vad = _sigmoid((lo + hi) / 2.0 + noise)
    is_vad = rng_latent.random(n) < p_vad

    parcels: dict[str, Parcel] = {}
    incidents: list[IncidentRecord] = []
    truth_vad: dict[str, bool] = {}
    truth_score: dict[str, float] = {}

    for i in range(n):
        pid = f"P{i:05d}"
        neigh = neigh_ids[neigh_of[i]]
        v = 1.0 if is_vad[i] else 0.0

        if is_structure[i]:
            kind = ParcelKind.STRUCTURE
            d = class_draw[i]
            if d < 0.65:
                rc = ResidentialClass.SINGLE_FAMILY
            elif d < 0.85:
                rc = ResidentialClass.TWO_TO_FOUR_FAMILY
            elif d < 0.95:
                rc = ResidentialClass.TOWNHOUSE
            else:
                rc = ResidentialClass.OTHER
        else:
            kind = ParcelKind.LAND
            rc = ResidentialClass.LAND_ONLY

        fd = flood_draw[i]
        flood = FloodRisk.NONE if fd < 0.70 else (FloodRisk.LOW if fd < 0.92 else FloodRisk.HIGH)

        value = max(
            5.0,
            (incomes[neigh_of[i]] / 1000.0)
            * math.exp(0.5 * z[i, 6] - 0.35 * v + rng_inc.normal(0.0, 0.18)),
        )
        parcels[pid] = Parcel(
            id=pid,
            kind=kind,
            x=float(pos[i, 0]),
            y=float(pos[i, 1]),
            neighborhood_id=neigh,
            property_value=round(float(value), 1),
            flood_risk=flood,
            residential_class=rc,
        )
        truth_vad[pid] = bool(is_vad[i])
        truth_score[pid] = float(p_vad[i])

        for _ in range(rng_inc.poisson(math.exp(-0.9 + 0.55 * z[i, 0] + 0.9 * v))):
            incidents.append(IncidentRecord(
                parcel_id=pid, category=IncidentCategory.CRIME,
                subtype=CRIME_SUBTYPES[int(rng_inc.integers(0, 2))],
                date=_random_date(rng_inc, 2010, 2019),
            ))
        for _ in range(rng_inc.poisson(math.exp(-1.4 + 0.5 * z[i, 1] + 0.9 * v))):
            incidents.append(IncidentRecord(
                parcel_id=pid, category=IncidentCategory.DRUG_CRIME, subtype="Drug",
                date=_random_date(rng_inc, 2010, 2019),
            ))
        for _ in range(rng_inc.poisson(math.exp(-1.1 + 0.5 * z[i, 2] + 1.2 * v))):
            p_telling = 0.15 + 0.55 * v
            if rng_inc.random() < p_telling:
                subtype = VAD_VIOLATION_SUBTYPES[int(rng_inc.integers(0, len(VAD_VIOLATION_SUBTYPES)))]
            else:
                subtype = ORDINARY_VIOLATION_SUBTYPES[int(rng_inc.integers(0, len(ORDINARY_VIOLATION_SUBTYPES)))]
            incidents.append(IncidentRecord(
                parcel_id=pid, category=IncidentCategory.CODE_VIOLATION, subtype=subtype,
                date=_random_date(rng_inc, 2012, 2019),
                active=bool(rng_inc.random() < 0.75),
            ))
        for _ in range(rng_inc.poisson(math.exp(-2.5 + 0.8 * v))):
            incidents.append(IncidentRecord(
                parcel_id=pid, category=IncidentCategory.FIRE, subtype="Fire",
                date=_random_date(rng_inc, 2010, 2019),
            ))
        n_years = int(rng_inc.binomial(8, _sigmoid(-1.2 + 0.5 * z[i, 4] + 1.2 * v)))
        if n_years:
            years = rng_inc.choice(np.arange(2010, 2020), size=n_years, replace=False)
            for yr in sorted(int(y) for y in years):
                amount = math.exp(rng_inc.normal(6.2 + 0.4 * z[i, 3] + 0.5 * v, 0.7))
                incidents.append(IncidentRecord(
                    parcel_id=pid, category=IncidentCategory.TAX_DELINQUENCY,
                    subtype="CityTax", date=_random_date(rng_inc, yr, yr),
                    amount=round(amount, 2),
                ))
                if rng_inc.random() < _sigmoid(-1.6 + 0.8 * z[i, 5] + 0.6 * v):
                    incidents.append(IncidentRecord(
                        parcel_id=pid, category=IncidentCategory.SPECIAL_ASSESSMENT,
                        subtype="SpecialAssessment", date=_random_date(rng_inc, yr, yr),
                        amount=round(math.exp(rng_inc.normal(4.6, 0.6)), 2),
                    ))

    # reporting bias: drop code-violation reports in the poorest tercile;
    # one suppression draw per violation regardless of beta keeps paired
    # seeds comparable
    income_by_id = {g: float(incomes[j]) for j, g in enumerate(neigh_ids)}
    suppressed = suppressed_neighborhoods(income_by_id)
    kept: list[IncidentRecord] = []
    for inc in incidents:
        if inc.category is IncidentCategory.CODE_VIOLATION:
            draw = rng_sup.random()
            if parcels[inc.parcel_id].neighborhood_id in suppressed and draw < cfg.reporting_bias:
                continue
        kept.append(inc)

    calls = {g: 0 for g in neigh_ids}
    for inc in kept:
        if inc.category is IncidentCategory.CODE_VIOLATION:
            calls[parcels[inc.parcel_id].neighborhood_id] += 1
    stats = {
        g: NeighborhoodStats(
            median_income=round(income_by_id[g], 2),
            pct_black=round(float(pct_black[j]), 4),
            call_311_count=calls[g] + int(rng_stats.poisson(3)),
        )
        for j, g in enumerate(neigh_ids)
    }

    ds = Dataset(parcels=parcels, incidents=tuple(kept), neighborhood_stats=stats)
    return ds, GroundTruth(is_vad=truth_vad, latent_score=truth_score)


@dataclass(frozen=True)
class FieldSurveyResult:
    vad_ids: frozenset[str]
    surveyed_ids: frozenset[str]
    neighborhoods: tuple[str, ...]


def simulate_field_survey(
    ds: Dataset,
    truth: GroundTruth,
    k_neighborhoods: int = 5,
    visual_noise: float = 0.05,
    seed: int = 0,
) -> FieldSurveyResult:
    """Drive-by survey of the k lowest-income neighborhoods: a parcel is
    called VAD when it is truly VAD *and* shows a visible cue (any surviving
    code-violation report), with each verdict flipped at ``visual_noise``."""
    incomes = {g: s.median_income for g, s in ds.neighborhood_stats.items()}
    visited = tuple(sorted(incomes, key=lambda g: (incomes[g], g))[:k_neighborhoods])
    visited_set = set(visited)
    has_violation = {
        inc.parcel_id for inc in ds.incidents
        if inc.category is IncidentCategory.CODE_VIOLATION
    }
    surveyed = sorted(
        pid for pid, p in ds.parcels.items() if p.neighborhood_id in visited_set
    )
    rng = np.random.default_rng(stable_seed(seed, "field-survey"))
    vad: set[str] = set()
    for pid in surveyed:
        verdict = truth.is_vad[pid] and pid in has_violation
        if rng.random() < visual_noise:
            verdict = not verdict
        if verdict:
            vad.add(pid)
    return FieldSurveyResult(
        vad_ids=frozenset(vad), surveyed_ids=frozenset(surveyed), neighborhoods=visited
    )


def simulate_usps(ds: Dataset, truth: GroundTruth, recall: float = 0.7, seed: int = 0) -> set[str]:
    """Mail-stop vacancy list: each truly-VAD structure appears with
    probability ``recall``; land parcels never receive mail and never appear."""
    rng = np.random.default_rng(stable_seed(seed, "usps"))
    out: set[str] = set()
    for pid in sorted(ds.parcels):
        if ds.parcels[pid].kind is not ParcelKind.STRUCTURE:
            continue
        if truth.is_vad[pid] and rng.random() < recall:
            out.add(pid)
    return out


@dataclass(frozen=True)
class Persona:
    """A scripted annotator: flips truth with probability ``noise`` and leans
    toward one side on borderline parcels (|latent - 0.5| <= |bias|)."""

    annotator_id: str
    noise: float = 0.0
    bias: float = 0.0


def scripted_annotator(
    parcel_ids: Sequence[str],
    truth: GroundTruth,
    persona: Persona,
    seed: int = 0,
    round_no: int = 1,
    timestamp: str = "2020-01-01T00:00:00Z",
) -> list[LabelRecord]:
    """Label a batch from planted truth. Decisions are keyed per
    (seed, persona, parcel), so the same parcel gets the same label no matter
    which batch it appears in."""
    records = []
    for pid in parcel_ids:
        label = truth.is_vad[pid]
        score = truth.latent_score[pid]
        if persona.bias != 0 and abs(score - 0.5) <= abs(persona.bias):
            label = persona.bias > 0
        if persona.noise > 0:
            rng = np.random.default_rng(stable_seed(seed, persona.annotator_id, pid))
            if rng.random() < persona.noise:
                label = not label
        records.append(
            LabelRecord(
                parcel_id=pid,
                annotator_id=persona.annotator_id,
                value=LabelValue.VAD if label else LabelValue.NOT_VAD,
                round=round_no,
                timestamp=timestamp,
                provenance=Provenance.SCRIPTED,
            )
        )
    return records


def write_city_csv(ds: Dataset, truth: GroundTruth, outdir):
    """Emit the same CSV schemas the ingest module reads, plus the ground
    truth as a separate file that model code never opens."""
    import csv

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "parcels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "residential_class", "x", "y", "neighborhood_id",
                    "property_value", "flood_risk"])
        for pid in sorted(ds.parcels):
            p = ds.parcels[pid]
            w.writerow([p.id, p.residential_class.value, p.x, p.y,
                        p.neighborhood_id, p.property_value, p.flood_risk.value])
    with open(out / "incidents.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parcel_id", "category", "subtype", "date", "amount", "active"])
        for inc in ds.incidents:
            w.writerow([inc.parcel_id, inc.category.value, inc.subtype,
                        inc.date.isoformat(), inc.amount if inc.amount else "",
                        "true" if inc.active else "false"])
    with open(out / "neighborhood_stats.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["neighborhood_id", "median_income", "pct_black", "call_311_count"])
        for g in sorted(ds.neighborhood_stats):
            s = ds.neighborhood_stats[g]
            w.writerow([g, s.median_income, s.pct_black, s.call_311_count])
    truth.save(out / "ground_truth.json")
