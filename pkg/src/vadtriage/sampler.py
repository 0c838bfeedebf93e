"""Labeling-batch composition: random, uncertainty, and diversity sampling.

Diversity sampling stratifies two ways: proportional allocation across
neighborhoods (largest-remainder rounding with full coverage whenever the
budget allows), then k-means in standardized feature space within each
neighborhood, taking the pool member nearest each centroid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

import numpy as np

from .domain import Dataset, stable_seed
from .errors import EmptyPool, MixInvalid, PoolTooSmall, UntrainedModel
from .features import standardize
from .forest import Forest


class Strategy(str, Enum):
    RANDOM = "Random"
    UNCERTAINTY = "Uncertainty"
    DIVERSITY = "Diversity"


@dataclass(frozen=True)
class SamplingBatch:
    batch_id: str
    parcel_ids: tuple[str, ...]
    strategy_tags: Mapping[str, Strategy]
    round: int
    created_from_model: Optional[str] = None

    def __post_init__(self):
        if len(set(self.parcel_ids)) != len(self.parcel_ids):
            raise MixInvalid("batch contains duplicate parcel ids")
        missing = [p for p in self.parcel_ids if p not in self.strategy_tags]
        if missing:
            raise MixInvalid(f"strategy tags missing for {missing[:3]}")

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "round": self.round,
            "created_from_model": self.created_from_model,
            "parcel_ids": list(self.parcel_ids),
            "strategy_tags": {p: s.value for p, s in self.strategy_tags.items()},
        }

    @classmethod
    def from_dict(cls, d) -> "SamplingBatch":
        return cls(
            batch_id=d["batch_id"],
            parcel_ids=tuple(d["parcel_ids"]),
            strategy_tags={p: Strategy(s) for p, s in d["strategy_tags"].items()},
            round=int(d["round"]),
            created_from_model=d.get("created_from_model"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["batch_id", "round", "parcel_id", "strategy"])
            for pid in self.parcel_ids:
                writer.writerow([self.batch_id, self.round, pid, self.strategy_tags[pid].value])


def random_sample(pool: Iterable[str], n: int, seed: int) -> list[str]:
    """Uniform without replacement; output in draw order, deterministic in seed."""
    ids = sorted(pool)
    if n > len(ids):
        raise PoolTooSmall(f"asked for {n} from a pool of {len(ids)}")
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    return [ids[i] for i in perm[:n]]


def rank_by_uncertainty(proba_by_id: Mapping[str, float], n: int) -> list[str]:
    """Top-n ids by |p - 0.5| ascending, ties by ascending parcel id."""
    ranked = sorted(proba_by_id.items(), key=lambda item: (abs(item[1] - 0.5), item[0]))
    return [pid for pid, _ in ranked[:n]]


def uncertainty_sample(pool: Iterable[str], forest: Forest, ds: Dataset, n: int) -> list[str]:
    """The n pool members whose predicted probability sits closest to 0.5,
    most uncertain first; ties resolve by ascending parcel id."""
    if forest is None or not forest.trees:
        raise UntrainedModel("uncertainty sampling needs a trained forest")
    ids = sorted(pool)
    if n > len(ids):
        raise PoolTooSmall(f"asked for {n} from a pool of {len(ids)}")
    if n == 0:
        return []
    proba = forest.predict_proba(ds.feature_matrix(ids))
    return rank_by_uncertainty(dict(zip(ids, proba)), n)


def _allocate(sizes: Mapping[str, int], n: int) -> dict[str, int]:
    """Largest-remainder proportional allocation across strata.

    Every nonempty stratum receives at least one unit whenever n allows;
    allocations never exceed stratum size.
    """
    names = sorted(g for g in sizes if sizes[g] > 0)
    total = sum(sizes[g] for g in names)
    if n > total:
        raise PoolTooSmall(f"asked for {n} from {total} pooled parcels")
    base = 1 if n >= len(names) else 0
    alloc = {g: min(base, sizes[g]) for g in names}
    left = n - sum(alloc.values())
    quotas = {g: left * sizes[g] / total for g in names}
    for g in names:
        extra = min(math.floor(quotas[g]), sizes[g] - alloc[g])
        alloc[g] += extra
        left -= extra
    # distribute the remainder by descending fractional quota, then stratum size
    order = sorted(names, key=lambda g: (-(quotas[g] - math.floor(quotas[g])), -sizes[g], g))
    while left > 0:
        progressed = False
        for g in order:
            if left == 0:
                break
            if alloc[g] < sizes[g]:
                alloc[g] += 1
                left -= 1
                progressed = True
        if not progressed:  # pragma: no cover - guarded by the n > total check
            raise PoolTooSmall("allocation could not place all units")
    return alloc


def _kmeans_pick(points: np.ndarray, k: int, rng: np.random.Generator,
                 max_iter: int = 50) -> list[int]:
    """Lloyd's k-means; returns the index of the member nearest each centroid.

    Empty clusters restart from the point farthest from its current centroid.
    """
    m = len(points)
    if k >= m:
        return list(range(m))
    centroids = points[rng.choice(m, size=k, replace=False)].copy()
    assign = np.full(m, -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        for c in range(k):
            if not (new_assign == c).any():
                far = int(d2[np.arange(m), new_assign].argmax())
                centroids[c] = points[far]
                new_assign[far] = c
        if np.array_equal(assign, new_assign):
            break
        assign = new_assign
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    picks: list[int] = []
    claimed = np.zeros(m, dtype=bool)
    for c in range(k):
        d = ((points - centroids[c]) ** 2).sum(axis=1)
        d[claimed] = np.inf
        j = int(d.argmin())
        claimed[j] = True
        picks.append(j)
    return picks


def diversity_sample(pool: Iterable[str], ds: Dataset, n: int, seed: int) -> list[str]:
    """Geographically and feature-diverse picks: neighborhood quota first,
    then k-means representatives inside each neighborhood."""
    ids = sorted(pool)
    if not ids:
        raise EmptyPool("diversity sampling over an empty pool")
    if n > len(ids):
        raise PoolTooSmall(f"asked for {n} from a pool of {len(ids)}")
    if n == 0:
        return []
    by_neigh: dict[str, list[str]] = {}
    for pid in ids:
        by_neigh.setdefault(ds.parcels[pid].neighborhood_id, []).append(pid)
    alloc = _allocate({g: len(members) for g, members in by_neigh.items()}, n)

    X_all, mu, sd = standardize(ds.feature_matrix(ids))
    std_row = {pid: X_all[i] for i, pid in enumerate(ids)}

    out: list[str] = []
    for neigh in sorted(by_neigh):
        k = alloc.get(neigh, 0)
        if k == 0:
            continue
        members = by_neigh[neigh]
        pts = np.vstack([std_row[pid] for pid in members])
        rng = np.random.default_rng(stable_seed(seed, "diversity", neigh))
        for j in _kmeans_pick(pts, k, rng):
            out.append(members[j])
    return out


@dataclass(frozen=True)
class MixConfig:
    """Per-round strategy proportions; must sum to 1."""

    random: float
    uncertainty: float
    diversity: float

    def __post_init__(self):
        parts = (self.random, self.uncertainty, self.diversity)
        if any(p < 0 for p in parts) or abs(sum(parts) - 1.0) > 1e-9:
            raise MixInvalid(f"mix fractions must be >= 0 and sum to 1, got {parts}")

    def to_dict(self):
        return {"random": self.random, "uncertainty": self.uncertainty,
                "diversity": self.diversity}


#: Round 1 has no model yet; later rounds lean on uncertainty sampling.
FIRST_ROUND_MIX = MixConfig(random=0.5, uncertainty=0.0, diversity=0.5)
LATER_ROUND_MIX = MixConfig(random=0.3, uncertainty=0.5, diversity=0.2)


def _strategy_counts(mix: MixConfig, n: int) -> dict[Strategy, int]:
    fracs = [
        (Strategy.UNCERTAINTY, mix.uncertainty),
        (Strategy.DIVERSITY, mix.diversity),
        (Strategy.RANDOM, mix.random),
    ]
    counts = {s: math.floor(f * n) for s, f in fracs}
    left = n - sum(counts.values())
    order = sorted(fracs, key=lambda sf: -(sf[1] * n - math.floor(sf[1] * n)))
    for s, f in order:
        if left == 0:
            break
        if f > 0:
            counts[s] += 1
            left -= 1
    return counts


def compose_batch(
    pool: Iterable[str],
    ds: Dataset,
    forest: Optional[Forest],
    n: int,
    mix: MixConfig,
    seed: int,
    round_no: int = 1,
    batch_id: Optional[str] = None,
    proba: Optional[Mapping[str, float]] = None,
) -> SamplingBatch:
    """Blend the three strategies into one batch of exactly n unique parcels.

    Overlapping picks are de-duplicated with priority uncertainty >
    diversity > random; any shortfall is back-filled from the remaining pool
    at random. Uncertainty scoring takes precomputed probabilities (``proba``,
    e.g. routed through per-kind models) or a single ``forest``.
    """
    pool_set = set(pool)
    if n > len(pool_set):
        raise PoolTooSmall(f"asked for {n} from a pool of {len(pool_set)}")
    if mix.uncertainty > 0 and proba is None and (forest is None or not forest.trees):
        raise MixInvalid("mix requests uncertainty sampling but no trained forest given")

    counts = _strategy_counts(mix, n)
    picks: list[tuple[str, Strategy]] = []
    if counts[Strategy.UNCERTAINTY]:
        if proba is not None:
            uncertain = rank_by_uncertainty(
                {pid: proba[pid] for pid in pool_set}, counts[Strategy.UNCERTAINTY]
            )
        else:
            uncertain = uncertainty_sample(pool_set, forest, ds, counts[Strategy.UNCERTAINTY])
        for pid in uncertain:
            picks.append((pid, Strategy.UNCERTAINTY))
    if counts[Strategy.DIVERSITY]:
        for pid in diversity_sample(pool_set, ds, counts[Strategy.DIVERSITY],
                                    stable_seed(seed, "diversity-stage")):
            picks.append((pid, Strategy.DIVERSITY))
    if counts[Strategy.RANDOM]:
        for pid in random_sample(pool_set, counts[Strategy.RANDOM],
                                 stable_seed(seed, "random-stage")):
            picks.append((pid, Strategy.RANDOM))

    chosen: dict[str, Strategy] = {}
    ordered: list[str] = []
    for pid, strat in picks:
        if pid not in chosen:
            chosen[pid] = strat
            ordered.append(pid)

    shortfall = n - len(ordered)
    if shortfall > 0:
        remaining = pool_set - set(ordered)
        for pid in random_sample(remaining, shortfall, stable_seed(seed, "backfill-stage")):
            chosen[pid] = Strategy.RANDOM
            ordered.append(pid)

    return SamplingBatch(
        batch_id=batch_id or f"batch-r{round_no}-{seed}",
        parcel_ids=tuple(ordered),
        strategy_tags=chosen,
        round=round_no,
        created_from_model=None if forest is None else f"forest-{forest.kind}-{forest.seed}",
    )
