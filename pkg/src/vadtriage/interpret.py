"""Model interpretation: drop-column importance over collinearity-aware
feature groups, and partial dependence curves.

Importance runs are paired: one stratified fold assignment and one set of
per-fold forest seeds are reused for the baseline and every drop. All runs
consider every remaining feature at each split (no per-node subsampling), so
a delta reflects the dropped columns rather than re-aligned random draws;
dropping a column no tree can use (a constant) yields a delta of exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .domain import FEATURE_NAMES
from .errors import EmptyGrid, TooFewFeatures
from .forest import Forest, ForestParams, cross_validate, stratified_folds


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    indices: tuple[int, ...]


def default_feature_groups() -> tuple[FeatureGroup, ...]:
    """Singleton groups except the collinear delinquency pair (amount and
    years are one variable for importance purposes)."""
    return (
        FeatureGroup("crime_w", (0,)),
        FeatureGroup("drug_crime_w", (1,)),
        FeatureGroup("code_violation_w", (2,)),
        FeatureGroup("delinquency", (3, 4)),
        FeatureGroup("unpaid_special_pct", (5,)),
        FeatureGroup("property_value", (6,)),
    )


@dataclass(frozen=True)
class ImportanceReport:
    baseline_cv_mean: float
    deltas: dict[str, float]
    k: int
    seed: int

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.deltas.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_dict(self) -> dict:
        return {
            "baseline_cv_mean": self.baseline_cv_mean,
            "deltas": dict(self.deltas),
            "k": self.k,
            "seed": self.seed,
        }


def _validate_groups(groups: Sequence[FeatureGroup], n_features: int):
    if len(groups) < 2:
        raise TooFewFeatures("need at least two feature groups to compare drops")
    seen: list[int] = []
    for g in groups:
        seen.extend(g.indices)
    if sorted(seen) != list(range(n_features)):
        raise TooFewFeatures(
            f"groups must partition the {n_features} feature columns, got {sorted(seen)}"
        )


def drop_column_importance(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams = ForestParams(),
    groups: Optional[Sequence[FeatureGroup]] = None,
    seed: int = 0,
    k: int = 5,
) -> ImportanceReport:
    """Per-group delta: baseline CV accuracy minus CV accuracy after retraining
    without the group's columns. Negative deltas (dropping helps) are reported
    as-is."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    groups = tuple(groups) if groups is not None else default_feature_groups()
    _validate_groups(groups, X.shape[1])

    folds = stratified_folds(y, k, seed)
    full = replace(params, mtry=X.shape[1])
    baseline = cross_validate(X, y, full, seed=seed, folds=folds).mean

    deltas: dict[str, float] = {}
    for g in groups:
        keep = [i for i in range(X.shape[1]) if i not in g.indices]
        dropped_params = replace(params, mtry=len(keep))
        dropped = cross_validate(X[:, keep], y, dropped_params, seed=seed, folds=folds).mean
        deltas[g.name] = baseline - dropped
    return ImportanceReport(baseline_cv_mean=baseline, deltas=deltas, k=len(folds), seed=seed)


@dataclass(frozen=True)
class PartialDependenceCurve:
    feature_index: int
    grid: tuple[float, ...]
    mean_proba: tuple[float, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise EmptyGrid("grid must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for p in self.mean_proba):
            raise ValueError("mean probabilities must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "feature_index": self.feature_index,
            "feature": FEATURE_NAMES[self.feature_index]
            if self.feature_index < len(FEATURE_NAMES) else str(self.feature_index),
            "grid": list(self.grid),
            "mean_proba": list(self.mean_proba),
        }


def write_importance_csv(report: ImportanceReport, path):
    """Ready-to-plot table: one row per group, ranked by delta."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "delta", "baseline_cv_mean"])
        for name, delta in report.ranked():
            writer.writerow([name, delta, report.baseline_cv_mean])


def write_curve_csv(curve: "PartialDependenceCurve", path):
    """Ready-to-plot table: grid value and mean probability per row."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_index", "grid_value", "mean_proba"])
        for v, p in zip(curve.grid, curve.mean_proba):
            writer.writerow([curve.feature_index, v, p])


def partial_dependence(
    forest: Forest,
    X: np.ndarray,
    feature_index: int,
    grid: Optional[Sequence[float]] = None,
    n_grid: int = 20,
) -> PartialDependenceCurve:
    """Sweep one feature over a grid (default: 20 quantile points of the
    training distribution) and average predicted probability over all rows."""
    X = np.asarray(X, dtype=np.float64)
    if grid is None:
        if len(X) == 0:
            raise EmptyGrid("no rows to derive a grid from")
        grid = np.unique(np.quantile(X[:, feature_index], np.linspace(0.0, 1.0, n_grid)))
    grid = [float(v) for v in grid]
    if not grid:
        raise EmptyGrid("empty partial-dependence grid")
    means = []
    for v in grid:
        X_mod = X.copy()
        X_mod[:, feature_index] = v
        means.append(float(np.mean(forest.predict_proba(X_mod))))
    return PartialDependenceCurve(
        feature_index=feature_index, grid=tuple(grid), mean_proba=tuple(means)
    )
