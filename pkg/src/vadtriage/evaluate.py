"""The five-metric comparison framework and the 311-call equity probe.

Methods are compared per parcel kind on: input count, output count, internal
accuracy (CV + OOB), external consensus against each validation source, and
content sensitivity (share of identified VADs dominated by each feature).
Consensus uses the validation source's VAD count as denominator: the share
of a source's VADs that the method also identifies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .domain import FeatureVector, NeighborhoodStats, ParcelKind
from .errors import EmptyOutput, EmptyValidation, SingularDesign
from .forest import ForestParams, cross_validate, fit_forest, oob_score


class Method(str, Enum):
    CITY_WORKFLOW = "city_workflow"
    SIMPLE_ML = "simple_ml"
    HITL = "hitl"


#: Internal-accuracy levels observed in the reference municipal deployment,
#: kept for documentation context only; real-data results are not
#: reproducible here and these are never asserted in tests.
REFERENCE_INTERNAL_ACCURACY = {
    (Method.SIMPLE_ML, "Land"): 0.9072,
    (Method.SIMPLE_ML, "Structure"): 0.9295,
    (Method.HITL, "Land"): 0.9333,
    (Method.HITL, "Structure"): 0.8769,
}


def external_consensus(
    predicted: Iterable[str],
    validation: Iterable[str],
    scope: Optional[Iterable[str]] = None,
) -> float:
    """|predicted ∩ validation| / |validation|, optionally within a scope."""
    pred = set(predicted)
    val = set(validation)
    if scope is not None:
        scope = set(scope)
        pred &= scope
        val &= scope
    if not val:
        raise EmptyValidation("validation set is empty (after scoping)")
    return len(pred & val) / len(val)


@dataclass(frozen=True)
class SensitivityThresholds:
    """A parcel "has" a feature when it exceeds these floors; low property
    value means strictly below ``low_value_threshold`` (thousands)."""

    min_crime_w: float = 0.0
    min_code_violation_w: float = 0.0
    min_delinquent_tax: float = 0.0
    low_value_threshold: float = 0.0


def pool_median_value(features: Mapping[str, FeatureVector], pool_ids: Iterable[str]) -> float:
    values = [features[pid].property_value for pid in pool_ids]
    if not values:
        raise EmptyOutput("cannot take the median of an empty pool")
    return float(np.median(values))


def content_sensitivity(
    output_ids: Iterable[str],
    features: Mapping[str, FeatureVector],
    thresholds: SensitivityThresholds,
) -> dict[str, float]:
    """Percent of identified VADs exhibiting each feature family (0-100)."""
    ids = sorted(output_ids)
    if not ids:
        raise EmptyOutput("no identified VADs to profile")
    n = len(ids)
    counts = {"crime": 0, "code_violation": 0, "tax_delinquency": 0, "low_property_value": 0}
    for pid in ids:
        fv = features[pid]
        if fv.crime_w > thresholds.min_crime_w:
            counts["crime"] += 1
        if fv.code_violation_w > thresholds.min_code_violation_w:
            counts["code_violation"] += 1
        if fv.delinquent_tax > thresholds.min_delinquent_tax:
            counts["tax_delinquency"] += 1
        if fv.property_value < thresholds.low_value_threshold:
            counts["low_property_value"] += 1
    return {k: 100.0 * v / n for k, v in counts.items()}


@dataclass(frozen=True)
class InternalAccuracy:
    cv_mean: Optional[float]
    per_fold: tuple[float, ...]
    oob: float

    def to_dict(self) -> dict:
        return {"cv_mean": self.cv_mean, "per_fold": list(self.per_fold), "oob": self.oob}


def internal_accuracy(
    X: np.ndarray, y: np.ndarray, params: ForestParams = ForestParams(),
    seed: int = 0, k: int = 5,
) -> InternalAccuracy:
    """Stratified k-fold CV plus the OOB score of a full-data forest."""
    cv = cross_validate(X, y, params, k=k, seed=seed)
    forest = fit_forest(X, y, params, seed=seed)
    return InternalAccuracy(cv_mean=cv.mean, per_fold=cv.per_fold, oob=oob_score(forest, y))


@dataclass(frozen=True)
class MethodResult:
    """One method's inputs/outputs for one parcel kind."""

    method: Method
    kind: ParcelKind
    input_ids: frozenset[str]
    output_ids: frozenset[str]
    internal: Optional[InternalAccuracy] = None
    excluded_features: tuple[str, ...] = ()
    derived_from_validation: Optional[str] = None
    notes: str = ""

    def __post_init__(self):
        if self.method is Method.SIMPLE_ML and "code_violation_w" not in self.excluded_features:
            raise ValueError(
                "simple-ML results must record the code-violation feature exclusion"
            )


def _fmt_pct(value: Optional[float]) -> str:
    return "NA" if value is None else f"{value:.2f}%"


@dataclass(frozen=True)
class ReportRow:
    method: str
    kind: str
    input_count: int
    output_count: int
    internal_cv: Optional[float]
    internal_oob: Optional[float]
    consensus: dict[str, Optional[float]]          # percent or None=NA
    sensitivity: dict[str, Optional[float]]        # percent or None=NA

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "kind": self.kind,
            "input_count": self.input_count,
            "output_count": self.output_count,
            "internal_cv": self.internal_cv,
            "internal_oob": self.internal_oob,
            "consensus": dict(self.consensus),
            "sensitivity": dict(self.sensitivity),
        }

    @classmethod
    def from_dict(cls, d) -> "ReportRow":
        return cls(
            method=d["method"],
            kind=d["kind"],
            input_count=d["input_count"],
            output_count=d["output_count"],
            internal_cv=d["internal_cv"],
            internal_oob=d["internal_oob"],
            consensus=dict(d["consensus"]),
            sensitivity=dict(d["sensitivity"]),
        )


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[ReportRow, ...]
    validation_sources: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "validation_sources": list(self.validation_sources),
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        return cls(
            rows=tuple(ReportRow.from_dict(r) for r in d["rows"]),
            validation_sources=tuple(d["validation_sources"]),
        )

    def write_csv_files(self, outdir):
        """One CSV per metric family: counts, internal accuracy, consensus,
        content sensitivity."""
        import csv
        from pathlib import Path

        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)

        def dump(name, header, rows):
            with open(out / name, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)

        dump("counts.csv", ["method", "kind", "input", "output"],
             [[r.method, r.kind, r.input_count, r.output_count] for r in self.rows])
        dump("internal_accuracy.csv", ["method", "kind", "cv_mean", "oob"],
             [[r.method, r.kind,
               "NA" if r.internal_cv is None else r.internal_cv,
               "NA" if r.internal_oob is None else r.internal_oob] for r in self.rows])
        dump("consensus.csv", ["method", "kind", "source", "percent"],
             [[r.method, r.kind, src, "NA" if v is None else v]
              for r in self.rows for src, v in sorted(r.consensus.items())])
        dump("content_sensitivity.csv", ["method", "kind", "feature", "percent"],
             [[r.method, r.kind, feat, "NA" if v is None else v]
              for r in self.rows for feat, v in sorted(r.sensitivity.items())])

    def to_text(self) -> str:
        """Aligned comparison grid: one column per method x kind."""
        headers = [f"{r.method}/{r.kind}" for r in self.rows]
        lines: list[tuple[str, list[str]]] = [
            ("Input", [str(r.input_count) for r in self.rows]),
            ("Output", [str(r.output_count) for r in self.rows]),
            ("Internal accuracy (CV)", [_fmt_pct(None if r.internal_cv is None
                                                 else 100 * r.internal_cv) for r in self.rows]),
            ("Internal accuracy (OOB)", [_fmt_pct(None if r.internal_oob is None
                                                  else 100 * r.internal_oob) for r in self.rows]),
        ]
        for src in self.validation_sources:
            lines.append(
                (f"Consensus vs {src}", [_fmt_pct(r.consensus.get(src)) for r in self.rows])
            )
        for feat in ("crime", "code_violation", "tax_delinquency", "low_property_value"):
            lines.append(
                (f"% with {feat}", [_fmt_pct(r.sensitivity.get(feat)) for r in self.rows])
            )
        label_w = max(len(label) for label, _ in lines)
        col_w = [max(len(h), max(len(vals[i]) for _, vals in lines)) for i, h in enumerate(headers)]
        out = [" " * label_w + "  " + "  ".join(h.rjust(w) for h, w in zip(headers, col_w))]
        for label, vals in lines:
            out.append(label.ljust(label_w) + "  "
                       + "  ".join(v.rjust(w) for v, w in zip(vals, col_w)))
        return "\n".join(out)


def comparison_report(
    results: Sequence[MethodResult],
    validations: Mapping[str, Iterable[str]],
    features: Mapping[str, FeatureVector],
    parcel_kinds: Mapping[str, ParcelKind],
    thresholds: SensitivityThresholds,
) -> MetricsReport:
    """Assemble the full comparison grid. Cells a method cannot define (no
    internal accuracy for the city workflow; consensus against a method's own
    source; empty scoped validation) render as NA."""
    if not results:
        raise EmptyOutput("no method results to compare")
    val_sets = {name: set(ids) for name, ids in validations.items()}
    rows = []
    for res in results:
        kind_ids = {pid for pid, k in parcel_kinds.items() if k is res.kind}
        consensus: dict[str, Optional[float]] = {}
        for name, val in val_sets.items():
            if res.derived_from_validation == name:
                consensus[name] = None
                continue
            try:
                consensus[name] = 100.0 * external_consensus(res.output_ids, val & kind_ids)
            except EmptyValidation:
                consensus[name] = None
        try:
            sensitivity = dict(content_sensitivity(res.output_ids, features, thresholds))
        except EmptyOutput:
            sensitivity = {k: None for k in
                           ("crime", "code_violation", "tax_delinquency", "low_property_value")}
        rows.append(
            ReportRow(
                method=res.method.value,
                kind=res.kind.value,
                input_count=len(res.input_ids),
                output_count=len(res.output_ids),
                internal_cv=None if res.internal is None else res.internal.cv_mean,
                internal_oob=None if res.internal is None else res.internal.oob,
                consensus=consensus,
                sensitivity=sensitivity,
            )
        )
    return MetricsReport(rows=tuple(rows), validation_sources=tuple(sorted(val_sets)))


@dataclass(frozen=True)
class EquityProbeResult:
    intercept: float
    coef_income: float
    coef_pct_black: float
    r_squared: float
    n: int

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "coef_income": self.coef_income,
            "coef_pct_black": self.coef_pct_black,
            "r_squared": self.r_squared,
            "n": self.n,
        }


def equity_probe(stats: Mapping[str, NeighborhoodStats]) -> EquityProbeResult:
    """OLS of 311-call counts on standardized neighborhood income and Black
    population share, via the normal equations."""
    names = sorted(stats)
    if len(names) < 4:
        raise SingularDesign(f"need at least 4 neighborhoods, got {len(names)}")
    y = np.array([stats[g].call_311_count for g in names], dtype=np.float64)
    income = np.array([stats[g].median_income for g in names], dtype=np.float64)
    black = np.array([stats[g].pct_black for g in names], dtype=np.float64)
    for name, col in (("median_income", income), ("pct_black", black)):
        if col.std() == 0:
            raise SingularDesign(f"covariate {name} is constant")
    z_income = (income - income.mean()) / income.std()
    z_black = (black - black.mean()) / black.std()
    X = np.column_stack([np.ones(len(y)), z_income, z_black])
    xtx = X.T @ X
    if np.linalg.cond(xtx) > 1e12:
        raise SingularDesign("covariates are collinear")
    beta = np.linalg.solve(xtx, X.T @ y)
    resid = y - X @ beta
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 0.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return EquityProbeResult(
        intercept=float(beta[0]),
        coef_income=float(beta[1]),
        coef_pct_black=float(beta[2]),
        r_squared=r2,
        n=len(names),
    )
