"""Application configuration: one JSON file covers incident weighting, the
candidate filter, forest hyperparameters, sampler mixes, audit thresholds,
and content-sensitivity thresholds.

Any subset of keys may appear; omitted keys keep the defaults below. See
README for the full key reference.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .audit import AuditConfig
from .domain import IncidentCategory
from .errors import ConfigInvalid
from .features import (
    DEFAULT_TYPE_WEIGHTED_CATEGORIES,
    DEFAULT_TYPE_WEIGHTS,
    FilterConfig,
    WeightConfig,
)
from .forest import ForestParams
from .ingest import DEFAULT_STUDY_WINDOW
from .sampler import FIRST_ROUND_MIX, LATER_ROUND_MIX, MixConfig


@dataclass(frozen=True)
class AppConfig:
    seed: int = 0
    weights: WeightConfig = field(
        default_factory=lambda: WeightConfig(as_of=dt.date(2020, 1, 1))
    )
    study_window: dict = field(default_factory=lambda: dict(DEFAULT_STUDY_WINDOW))
    filter: FilterConfig = field(default_factory=FilterConfig)
    forest: ForestParams = field(default_factory=ForestParams)
    first_round_mix: MixConfig = FIRST_ROUND_MIX
    later_round_mix: MixConfig = LATER_ROUND_MIX
    audit: AuditConfig = field(default_factory=AuditConfig)
    classification_threshold: float = 0.5
    cv_folds: int = 5
    cv_at_retrain: bool = True
    #: "pool_median" or an explicit value in thousands of dollars
    low_value_threshold: Union[str, float] = "pool_median"
    clock: str = "logical"  # "logical" (deterministic) or "wall"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "weights": {
                "as_of": self.weights.as_of.isoformat(),
                "half_life_years": self.weights.half_life_years,
                "type_weights": dict(self.weights.type_weights),
                "type_weighted_categories": sorted(
                    c.value for c in self.weights.type_weighted_categories
                ),
            },
            "study_window": {c.value: list(v) for c, v in self.study_window.items()},
            "forest": self.forest.to_dict(),
            "first_round_mix": self.first_round_mix.to_dict(),
            "later_round_mix": self.later_round_mix.to_dict(),
            "audit": {
                "min_depth": self.audit.min_depth,
                "max_leaf_allies": self.audit.max_leaf_allies,
                "min_opposite_mass": self.audit.min_opposite_mass,
                "disagreement_eps": self.audit.disagreement_eps,
            },
            "classification_threshold": self.classification_threshold,
            "cv_folds": self.cv_folds,
            "cv_at_retrain": self.cv_at_retrain,
            "low_value_threshold": self.low_value_threshold,
            "clock": self.clock,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AppConfig":
        base = cls()
        weights = base.weights
        if "weights" in d:
            w = d["weights"]
            weights = WeightConfig(
                as_of=dt.date.fromisoformat(w.get("as_of", "2020-01-01")),
                half_life_years=w.get("half_life_years", 3.0),
                type_weights=w.get("type_weights", dict(DEFAULT_TYPE_WEIGHTS)),
                type_weighted_categories=frozenset(
                    IncidentCategory(c)
                    for c in w.get(
                        "type_weighted_categories",
                        [c.value for c in DEFAULT_TYPE_WEIGHTED_CATEGORIES],
                    )
                ),
            )
        window = dict(DEFAULT_STUDY_WINDOW)
        for cat, years in d.get("study_window", {}).items():
            window[IncidentCategory(cat)] = (int(years[0]), int(years[1]))
        forest = (
            ForestParams.from_dict({**ForestParams().to_dict(), **d["forest"]})
            if "forest" in d
            else base.forest
        )
        audit = (
            AuditConfig(**{**base.audit.__dict__, **d["audit"]})
            if "audit" in d
            else base.audit
        )
        first = (
            MixConfig(**d["first_round_mix"]) if "first_round_mix" in d else base.first_round_mix
        )
        later = (
            MixConfig(**d["later_round_mix"]) if "later_round_mix" in d else base.later_round_mix
        )
        clock = d.get("clock", base.clock)
        if clock not in ("logical", "wall"):
            raise ConfigInvalid(f"clock must be 'logical' or 'wall', got {clock!r}")
        return cls(
            seed=int(d.get("seed", base.seed)),
            weights=weights,
            study_window=window,
            filter=base.filter,
            forest=forest,
            first_round_mix=first,
            later_round_mix=later,
            audit=audit,
            classification_threshold=float(
                d.get("classification_threshold", base.classification_threshold)
            ),
            cv_folds=int(d.get("cv_folds", base.cv_folds)),
            cv_at_retrain=bool(d.get("cv_at_retrain", base.cv_at_retrain)),
            low_value_threshold=d.get("low_value_threshold", base.low_value_threshold),
            clock=clock,
        )


def load_config(path: Optional[str] = None, seed: Optional[int] = None) -> AppConfig:
    if path is None:
        cfg = AppConfig()
    else:
        try:
            cfg = AppConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
