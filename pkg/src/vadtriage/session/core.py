"""Session orchestration for the human-in-the-loop labeling loop.

A session is an event-sourced fold: every state change appends one JSON event
to the session's append-only log, and replaying the log reconstructs the
exact same state (including model snapshot hashes). Heavy artifacts (trained
forests) live in snapshot files referenced from events.

Round state machine: SAMPLED -> ASSIGNED -> LABELED -> AUDITED -> TRAINED ->
EVALUATED, monotone. Labeling completion triggers the audit automatically;
retraining before the audit gate requires an explicit force flag and records
a warning.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .. import audit as audit_mod
from ..baseline import EXCLUDED_FEATURES, train_baseline
from ..config import AppConfig
from ..domain import (
    Dataset,
    LabelRecord,
    LabelValue,
    ParcelKind,
    Provenance,
    effective_labels,
    stable_seed,
)
from ..errors import (
    BadAssignment,
    DatasetMissing,
    DuplicateSubmission,
    MixInvalid,
    NoLabels,
    NotAssigned,
    NotTrained,
    PoolExhausted,
    RoundStateError,
    SessionClosed,
    SingleClass,
    TooFewRowsPerClass,
    UnknownConflict,
)
from ..evaluate import (
    InternalAccuracy,
    Method,
    MethodResult,
    MetricsReport,
    SensitivityThresholds,
    comparison_report,
    pool_median_value,
)
from ..features import candidate_filter, compute_all_features
from ..forest import Forest, cross_validate, fit_forest, oob_score
from ..ingest import load_dataset
from ..sampler import MixConfig, SamplingBatch, compose_batch
from .store import SessionStore

BASE_TIME = dt.datetime(2020, 1, 1, tzinfo=dt.timezone.utc)


class RoundState(IntEnum):
    SAMPLED = 1
    ASSIGNED = 2
    LABELED = 3
    AUDITED = 4
    TRAINED = 5
    EVALUATED = 6


@dataclass
class Round:
    round_no: int
    batch: SamplingBatch
    assignments: dict[str, tuple[str, ...]]
    state: RoundState
    warnings: list[str] = field(default_factory=list)


@dataclass
class KindSnapshot:
    kind: str
    training_ids: tuple[str, ...]
    n_vad: int
    cv: Optional[dict]
    oob: float
    forest_file: str
    forest_hash: str


@dataclass
class Snapshot:
    snapshot_id: str
    round_no: int
    kinds: dict[str, KindSnapshot]
    n_labels: int


def load_session_dataset(dataset_ref: str, config: AppConfig) -> Dataset:
    ref = Path(dataset_ref)
    parcels = ref / "parcels.csv"
    incidents = ref / "incidents.csv"
    if not parcels.exists() or not incidents.exists():
        raise DatasetMissing(f"dataset ref {dataset_ref!r} lacks parcels.csv/incidents.csv")
    stats = ref / "neighborhood_stats.csv"
    ds, _ = load_dataset(
        parcels, incidents, stats if stats.exists() else None,
        study_window=config.study_window,
    )
    return compute_all_features(ds, config.weights)


class Session:
    """One labeling campaign over one dataset. All mutating operations are
    serialized by a session lock; retraining computes outside the lock
    against an immutable label snapshot so submissions keep flowing."""

    def __init__(self, store: SessionStore, session_id: str, dataset: Dataset,
                 config: AppConfig, dataset_ref: str):
        self.store = store
        self.session_id = session_id
        self.dataset = dataset
        self.config = config
        self.dataset_ref = dataset_ref
        self.pool: tuple[str, ...] = ()
        self.labels: list[LabelRecord] = []
        self.rounds: list[Round] = []
        self.conflicts: dict[str, audit_mod.ConflictItem] = {}
        self.snapshots: list[Snapshot] = []
        self.forests: dict[str, Forest] = {}
        self.predictions: dict[str, dict[str, float]] = {}
        self.audit_trees: dict[str, dict] = {}
        self.validations: dict[str, dict] = {}
        self.closed = False
        self._tick = 0
        self._lock = threading.RLock()
        self._train_lock = threading.Lock()
        self._baseline_cache = None

    # -- clock / event plumbing --------------------------------------------

    def _now(self) -> str:
        if self.config.clock == "wall":
            return dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        self._tick += 1
        return (BASE_TIME + dt.timedelta(seconds=self._tick)).strftime("%Y-%m-%dT%H:%M:%SZ")

    def _emit(self, event: dict):
        event["tick_after"] = self._tick
        self.store.append_event(self.session_id, event)
        self._apply(event)

    # -- construction --------------------------------------------------------

    @classmethod
    def create(cls, store: SessionStore, dataset_ref: str, config: AppConfig,
               session_id: Optional[str] = None) -> "Session":
        dataset = load_session_dataset(dataset_ref, config)
        if session_id is None:
            session_id = f"session-{config.seed}-{len(store.list_sessions())}"
        store.create(session_id)
        session = cls(store, session_id, dataset, config, dataset_ref)
        pool = sorted(candidate_filter(dataset, config.filter))
        session._emit({
            "type": "session_created",
            "ts": session._now(),
            "session_id": session_id,
            "dataset_ref": str(dataset_ref),
            "config": config.to_dict(),
            "pool": pool,
        })
        return session

    @classmethod
    def load(cls, store: SessionStore, session_id: str) -> "Session":
        """Rebuild session state by folding the event log."""
        events = list(store.read_events(session_id))
        if not events or events[0]["type"] != "session_created":
            raise DatasetMissing(f"session {session_id!r} has no creation event")
        head = events[0]
        config = AppConfig.from_dict(head["config"])
        dataset = load_session_dataset(head["dataset_ref"], config)
        session = cls(store, session_id, dataset, config, head["dataset_ref"])
        for event in events:
            session._apply(event)
        return session

    # -- event fold ----------------------------------------------------------

    def _apply(self, event: dict):
        handler = getattr(self, f"_apply_{event['type']}")
        handler(event)
        self._tick = max(self._tick, event.get("tick_after", 0))

    def _apply_session_created(self, event: dict):
        self.pool = tuple(event["pool"])

    def _apply_batch_requested(self, event: dict):
        batch = SamplingBatch.from_dict(event["batch"])
        self.rounds.append(Round(
            round_no=event["round"],
            batch=batch,
            assignments={a: tuple(ids) for a, ids in event["assignments"].items()},
            state=RoundState.ASSIGNED,
        ))

    def _apply_labels_submitted(self, event: dict):
        for rec in event["records"]:
            self.labels.append(LabelRecord.from_dict(rec))
        rnd = self.rounds[event["round"] - 1]
        if event["round_complete"]:
            rnd.state = RoundState.LABELED

    def _apply_conflicts_flagged(self, event: dict):
        for d in event["conflicts"]:
            item = audit_mod.ConflictItem.from_dict(d)
            self.conflicts[item.conflict_id] = item
        self.audit_trees.update(event["audit_trees"])
        self.rounds[event["round"] - 1].state = RoundState.AUDITED

    def _apply_resolution_applied(self, event: dict):
        conflict = self.conflicts[event["conflict_id"]]
        conflict.status = audit_mod.ConflictStatus.RESOLVED
        conflict.resolution = event["resolution"]
        for rec in event["records"]:
            self.labels.append(LabelRecord.from_dict(rec))

    def _apply_retrain_completed(self, event: dict):
        kinds: dict[str, KindSnapshot] = {}
        for kind, d in event["kinds"].items():
            kinds[kind] = KindSnapshot(
                kind=kind,
                training_ids=tuple(d["training_ids"]),
                n_vad=d["n_vad"],
                cv=d["cv"],
                oob=d["oob"],
                forest_file=d["forest_file"],
                forest_hash=d["forest_hash"],
            )
        snap = Snapshot(
            snapshot_id=event["snapshot_id"],
            round_no=event["round"],
            kinds=kinds,
            n_labels=event["n_labels"],
        )
        self.snapshots.append(snap)
        rnd = self.rounds[event["round"] - 1]
        if event.get("force") and rnd.state < RoundState.AUDITED:
            rnd.warnings.append(event["warning"])
        rnd.state = RoundState.TRAINED
        for kind, ks in kinds.items():
            forest = Forest.from_json(self.store.read_snapshot(self.session_id, ks.forest_file))
            self.forests[kind] = forest
            ids = [pid for pid in self.pool if self.dataset.parcels[pid].kind.value == kind]
            proba = forest.predict_proba(self.dataset.feature_matrix(ids))
            self.predictions[kind] = {pid: float(p) for pid, p in zip(ids, proba)}

    def _apply_validation_registered(self, event: dict):
        self.validations[event["name"]] = {
            "ids": set(event["ids"]),
            "surveyed_ids": set(event["surveyed_ids"]) if event["surveyed_ids"] else None,
            "as_city_workflow": event["as_city_workflow"],
        }

    def _apply_report_generated(self, event: dict):
        self.rounds[event["round"] - 1].state = RoundState.EVALUATED

    def _apply_session_closed(self, event: dict):
        self.closed = True

    # -- helpers -------------------------------------------------------------

    def _require_open(self):
        if self.closed:
            raise SessionClosed(f"session {self.session_id} is closed")

    def current_round(self) -> Optional[Round]:
        return self.rounds[-1] if self.rounds else None

    def labeled_ids(self) -> set[str]:
        return {rec.parcel_id for rec in self.labels}

    def remaining_pool(self) -> set[str]:
        out = set(self.pool) - self.labeled_ids()
        rnd = self.current_round()
        if rnd is not None and rnd.state < RoundState.LABELED:
            out -= set(rnd.batch.parcel_ids)
        return out

    def effective(self) -> dict[str, LabelValue]:
        pool = set(self.pool)
        return {pid: v for pid, v in effective_labels(self.labels).items() if pid in pool}

    def effective_records(self) -> dict[str, LabelRecord]:
        """Latest superseding record per pool parcel (resolutions first)."""
        pool = set(self.pool)
        best: dict[str, tuple] = {}
        out: dict[str, LabelRecord] = {}
        for seq, rec in enumerate(self.labels):
            if rec.parcel_id not in pool:
                continue
            tier = 1 if rec.provenance is Provenance.RESOLUTION else 0
            key = (tier, rec.timestamp, seq)
            if rec.parcel_id not in best or key > best[rec.parcel_id]:
                best[rec.parcel_id] = key
                out[rec.parcel_id] = rec
        return out

    def _pool_proba(self) -> Optional[dict[str, float]]:
        if not self.predictions:
            return None
        merged: dict[str, float] = {}
        for per_kind in self.predictions.values():
            merged.update(per_kind)
        return merged

    # -- commands ------------------------------------------------------------

    def request_batch(self, n: int, assignments: Mapping[str, int],
                      mix: Optional[MixConfig] = None) -> SamplingBatch:
        """Compose the next round's batch and partition it across annotators."""
        with self._lock:
            self._require_open()
            rnd = self.current_round()
            if rnd is not None and rnd.state < RoundState.LABELED:
                raise RoundStateError(
                    f"round {rnd.round_no} is {rnd.state.name}; finish labeling first"
                )
            if sum(assignments.values()) != n:
                raise BadAssignment(
                    f"assignment counts sum to {sum(assignments.values())}, batch size is {n}"
                )
            pool = self.remaining_pool()
            if n > len(pool):
                raise PoolExhausted(f"batch of {n} requested, {len(pool)} parcels remain")
            round_no = len(self.rounds) + 1
            if mix is None:
                mix = self.config.first_round_mix if round_no == 1 else self.config.later_round_mix
            proba = self._pool_proba()
            if mix.uncertainty > 0 and proba is None:
                raise MixInvalid("uncertainty sampling requires a trained model; "
                                 "use a random/diversity mix for the first round")
            # parcels of a kind that has no model yet score 0.0: maximally far
            # from the boundary, so uncertainty sampling never picks them
            batch = compose_batch(
                pool, self.dataset, None, n, mix,
                seed=stable_seed(self.config.seed, "batch", round_no),
                round_no=round_no,
                batch_id=f"{self.session_id}-r{round_no}",
                proba=None if proba is None else {pid: proba.get(pid, 0.0) for pid in pool},
            )
            slices: dict[str, list[str]] = {}
            cursor = 0
            for annotator, count in assignments.items():
                slices[annotator] = list(batch.parcel_ids[cursor:cursor + count])
                cursor += count
            self._emit({
                "type": "batch_requested",
                "ts": self._now(),
                "round": round_no,
                "batch": batch.to_dict(),
                "assignments": slices,
            })
            return batch

    def submit_labels(self, annotator_id: str, records: Sequence[LabelRecord]) -> dict:
        """Append labels for the open round. Completing the last assignment
        flips the round to LABELED and computes audit flags."""
        with self._lock:
            self._require_open()
            rnd = self.current_round()
            if rnd is None or rnd.state >= RoundState.LABELED:
                raise NotAssigned("no round is open for labeling")
            assigned = set(rnd.assignments.get(annotator_id, ()))
            already = {
                (r.annotator_id, r.parcel_id)
                for r in self.labels
                if r.round == rnd.round_no
            }
            stamped = []
            for rec in records:
                if rec.parcel_id not in assigned:
                    raise NotAssigned(
                        f"parcel {rec.parcel_id} is not assigned to {annotator_id} "
                        f"in round {rnd.round_no}"
                    )
                if (annotator_id, rec.parcel_id) in already:
                    raise DuplicateSubmission(
                        f"{annotator_id} already labeled {rec.parcel_id} in round {rnd.round_no}"
                    )
                already.add((annotator_id, rec.parcel_id))
                stamped.append(LabelRecord(
                    parcel_id=rec.parcel_id,
                    annotator_id=annotator_id,
                    value=rec.value,
                    round=rnd.round_no,
                    timestamp=self._now(),
                    provenance=rec.provenance,
                    comment=rec.comment,
                ))
            complete = all(
                (annotator, pid) in already
                for annotator, ids in rnd.assignments.items()
                for pid in ids
            )
            self._emit({
                "type": "labels_submitted",
                "ts": self._now(),
                "round": rnd.round_no,
                "annotator_id": annotator_id,
                "records": [r.to_dict() for r in stamped],
                "round_complete": complete,
            })
            if complete:
                self._run_audit(rnd.round_no)
            return {
                "accepted": len(stamped),
                "round": rnd.round_no,
                "round_state": self.rounds[rnd.round_no - 1].state.name,
            }

    def _run_audit(self, round_no: int):
        labels = self.effective()
        conflicts: list[audit_mod.ConflictItem] = []
        trees: dict[str, dict] = {}
        for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
            ids = sorted(
                pid for pid in labels if self.dataset.parcels[pid].kind is kind
            )
            if len(ids) < 2:
                continue
            X = self.dataset.feature_matrix(ids)
            y = np.array([labels[pid] is LabelValue.VAD for pid in ids])
            if len(np.unique(y)) < 2:
                continue
            tree = audit_mod.fit_audit_tree(X, y)
            trees[kind.value] = audit_mod.export_tree(tree)
            conflicts.extend(
                audit_mod.flag_isolated_labels(tree, X, y, ids, self.config.audit)
            )
        feats = {pid: self.dataset.features[pid].as_array() for pid in labels}
        conflicts.extend(audit_mod.flag_disagreements(labels, feats, self.config.audit))
        fresh = []
        for item in conflicts:
            item.conflict_id = f"r{round_no}-{item.conflict_id}"
            if item.conflict_id not in self.conflicts:
                fresh.append(item)
        self._emit({
            "type": "conflicts_flagged",
            "ts": self._now(),
            "round": round_no,
            "conflicts": [c.to_dict() for c in fresh],
            "audit_trees": trees,
        })

    def resolve_conflict(self, conflict_id: str, final_label: LabelValue,
                         rationale: str, resolver_id: str) -> dict:
        with self._lock:
            self._require_open()
            if conflict_id not in self.conflicts:
                raise UnknownConflict(f"no conflict with id {conflict_id!r}")
            conflict = self.conflicts[conflict_id]
            round_no = len(self.rounds)
            records = audit_mod.apply_resolution(
                conflict, final_label, rationale, resolver_id,
                round_no=round_no, timestamp=self._now(),
            )
            self._emit({
                "type": "resolution_applied",
                "ts": self._now(),
                "round": round_no,
                "conflict_id": conflict_id,
                "resolution": conflict.resolution,
                "records": [r.to_dict() for r in records],
            })
            return conflict.to_dict()

    def trigger_retrain(self, force: bool = False) -> Snapshot:
        """Train per-kind forests on an immutable snapshot of the effective
        labels. Labels submitted while training runs land in the next
        snapshot, never this one."""
        with self._lock:
            self._require_open()
            rnd = self.current_round()
            if rnd is None:
                raise NoLabels("no rounds yet; request a batch and label it first")
            warning = None
            if rnd.state < RoundState.AUDITED:
                if not force:
                    raise RoundStateError(
                        f"round {rnd.round_no} is {rnd.state.name}; audit gate not passed "
                        "(use force to skip)"
                    )
                warning = (
                    f"forced retrain while round {rnd.round_no} was {rnd.state.name}; "
                    "audit gate skipped"
                )
            labels = self.effective()
            if not labels:
                raise NoLabels("no effective labels to train on")
            round_no = rnd.round_no
            snapshot_id = f"snap-r{round_no}-{len(self.snapshots)}"

        # heavy work outside the session lock; the label snapshot is already
        # taken so concurrent submissions cannot leak in
        trained: dict[str, dict] = {}
        with self._train_lock:
            for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
                ids = sorted(
                    pid for pid in labels if self.dataset.parcels[pid].kind is kind
                )
                if not ids:
                    continue
                X = self.dataset.feature_matrix(ids)
                y = np.array([labels[pid] is LabelValue.VAD for pid in ids])
                if len(np.unique(y)) < 2:
                    raise SingleClass(
                        f"{kind.value} labels are single-class ({int(y.sum())}/{len(y)} VAD)"
                    )
                seed = stable_seed(self.config.seed, "retrain", round_no, kind.value)
                forest = fit_forest(X, y, self.config.forest, seed=seed, kind=kind.value)
                cv = None
                if self.config.cv_at_retrain:
                    try:
                        cv = cross_validate(
                            X, y, self.config.forest, k=self.config.cv_folds, seed=seed
                        ).to_dict()
                    except TooFewRowsPerClass:
                        cv = None
                forest_json = forest.to_json()
                trained[kind.value] = {
                    "training_ids": ids,
                    "n_vad": int(y.sum()),
                    "cv": cv,
                    "oob": oob_score(forest, y),
                    "forest_json": forest_json,
                    "forest_hash": hashlib.sha256(forest_json.encode()).hexdigest(),
                }

        with self._lock:
            kinds_payload = {}
            for kind, d in trained.items():
                relpath = self.store.write_snapshot(
                    self.session_id, f"{snapshot_id}/forest-{kind}.json", d["forest_json"]
                )
                kinds_payload[kind] = {
                    "training_ids": d["training_ids"],
                    "n_vad": d["n_vad"],
                    "cv": d["cv"],
                    "oob": d["oob"],
                    "forest_file": relpath,
                    "forest_hash": d["forest_hash"],
                }
            event = {
                "type": "retrain_completed",
                "ts": self._now(),
                "round": round_no,
                "snapshot_id": snapshot_id,
                "force": force,
                "n_labels": len(labels),
                "kinds": kinds_payload,
            }
            if warning:
                event["warning"] = warning
            self._emit(event)
            return self.snapshots[-1]

    def register_validation(self, name: str, ids: Iterable[str],
                            surveyed_ids: Optional[Iterable[str]] = None,
                            as_city_workflow: bool = False):
        """Attach an external validation source (e.g. a field survey or a
        mail-vacancy list) for use in comparison reports."""
        with self._lock:
            self._require_open()
            self._emit({
                "type": "validation_registered",
                "ts": self._now(),
                "name": name,
                "ids": sorted(ids),
                "surveyed_ids": sorted(surveyed_ids) if surveyed_ids is not None else None,
                "as_city_workflow": as_city_workflow,
            })

    def predicted_vads(self, kind: ParcelKind) -> set[str]:
        per_kind = self.predictions.get(kind.value, {})
        t = self.config.classification_threshold
        return {pid for pid, p in per_kind.items() if p >= t}

    def _sensitivity_thresholds(self) -> SensitivityThresholds:
        low = self.config.low_value_threshold
        if low == "pool_median":
            low = pool_median_value(self.dataset.features, self.pool)
        return SensitivityThresholds(low_value_threshold=float(low))

    def hitl_results(self) -> list[MethodResult]:
        if not self.snapshots:
            raise NotTrained("no model snapshot yet; run a retrain first")
        snap = self.snapshots[-1]
        results = []
        for kind_name, ks in snap.kinds.items():
            kind = ParcelKind(kind_name)
            internal = InternalAccuracy(
                cv_mean=None if ks.cv is None else ks.cv["mean"],
                per_fold=tuple(ks.cv["per_fold"]) if ks.cv else (),
                oob=ks.oob,
            )
            results.append(MethodResult(
                method=Method.HITL,
                kind=kind,
                input_ids=frozenset(ks.training_ids),
                output_ids=frozenset(self.predicted_vads(kind)),
                internal=internal,
            ))
        return results

    def baseline_results(self) -> list[MethodResult]:
        if self._baseline_cache is None:
            per_kind = train_baseline(
                self.dataset, self.pool, self.config.forest,
                seed=self.config.seed,
                threshold=self.config.classification_threshold,
                with_cv=self.config.cv_at_retrain,
            )
            self._baseline_cache = [
                MethodResult(
                    method=Method.SIMPLE_ML,
                    kind=kind,
                    input_ids=res.input_ids,
                    output_ids=res.output_ids,
                    internal=res.internal,
                    excluded_features=EXCLUDED_FEATURES,
                )
                for kind, res in per_kind.items()
            ]
        return self._baseline_cache

    def city_workflow_results(self) -> list[MethodResult]:
        results = []
        for name, val in self.validations.items():
            if not val["as_city_workflow"]:
                continue
            surveyed = val["surveyed_ids"] or val["ids"]
            for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
                kind_ids = {
                    pid for pid in surveyed
                    if pid in self.dataset.parcels and self.dataset.parcels[pid].kind is kind
                }
                out_ids = {
                    pid for pid in val["ids"]
                    if pid in self.dataset.parcels and self.dataset.parcels[pid].kind is kind
                }
                if not kind_ids and not out_ids:
                    continue
                results.append(MethodResult(
                    method=Method.CITY_WORKFLOW,
                    kind=kind,
                    input_ids=frozenset(kind_ids),
                    output_ids=frozenset(out_ids),
                    internal=None,
                    derived_from_validation=name,
                ))
        return results

    def get_report(self, include_baseline: bool = True) -> MetricsReport:
        """Assemble the comparison grid over the HITL model, the rule-labeled
        baseline, and any registered city-workflow source."""
        with self._lock:
            results = self.hitl_results()
            if include_baseline:
                results.extend(self.baseline_results())
            results.extend(self.city_workflow_results())
            validations = {name: val["ids"] for name, val in self.validations.items()}
            kinds_map = {pid: p.kind for pid, p in self.dataset.parcels.items()}
            report = comparison_report(
                results, validations, self.dataset.features, kinds_map,
                self._sensitivity_thresholds(),
            )
            self._emit({
                "type": "report_generated",
                "ts": self._now(),
                "round": len(self.rounds),
                "validations": sorted(validations),
                "report": report.to_dict(),
            })
            return report

    def close(self, reason: str = ""):
        with self._lock:
            self._require_open()
            self._emit({"type": "session_closed", "ts": self._now(), "reason": reason})

    # -- introspection -------------------------------------------------------

    def describe(self) -> dict:
        rnd = self.current_round()
        return {
            "session_id": self.session_id,
            "dataset_ref": str(self.dataset_ref),
            "closed": self.closed,
            "pool_size": len(self.pool),
            "n_labels": len(self.labels),
            "n_effective_labels": len(self.effective()),
            "open_conflicts": sum(
                1 for c in self.conflicts.values()
                if c.status is audit_mod.ConflictStatus.OPEN
            ),
            "rounds": [
                {
                    "round": r.round_no,
                    "state": r.state.name,
                    "batch_id": r.batch.batch_id,
                    "batch_size": len(r.batch.parcel_ids),
                    "assignments": {a: len(ids) for a, ids in r.assignments.items()},
                    "warnings": list(r.warnings),
                }
                for r in self.rounds
            ],
            "snapshots": [
                {
                    "snapshot_id": s.snapshot_id,
                    "round": s.round_no,
                    "n_labels": s.n_labels,
                    "kinds": {
                        k: {
                            "n_rows": len(ks.training_ids),
                            "n_vad": ks.n_vad,
                            "cv_mean": None if ks.cv is None else ks.cv["mean"],
                            "oob": ks.oob,
                            "forest_hash": ks.forest_hash,
                        }
                        for k, ks in s.kinds.items()
                    },
                }
                for s in self.snapshots
            ],
            "validations": sorted(self.validations),
        }

    def state_fingerprint(self) -> str:
        """Digest of everything replay must reproduce."""
        payload = {
            "pool": list(self.pool),
            "labels": [r.to_dict() for r in self.labels],
            "rounds": [
                {
                    "round": r.round_no,
                    "state": r.state.name,
                    "batch": r.batch.to_dict(),
                    "assignments": {a: list(ids) for a, ids in r.assignments.items()},
                    "warnings": r.warnings,
                }
                for r in self.rounds
            ],
            "conflicts": [self.conflicts[k].to_dict() for k in sorted(self.conflicts)],
            "snapshots": [
                {
                    "snapshot_id": s.snapshot_id,
                    "round": s.round_no,
                    "n_labels": s.n_labels,
                    "kinds": {
                        k: {
                            "training_ids": list(ks.training_ids),
                            "n_vad": ks.n_vad,
                            "cv": ks.cv,
                            "oob": ks.oob,
                            "forest_hash": ks.forest_hash,
                        }
                        for k, ks in s.kinds.items()
                    },
                }
                for s in self.snapshots
            ],
            "predictions": {
                kind: sorted(per.items()) for kind, per in self.predictions.items()
            },
            "closed": self.closed,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


class SessionManager:
    """Registry of live sessions backed by one store directory."""

    def __init__(self, store_root):
        self.store = SessionStore(store_root)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, dataset_ref: str, config: AppConfig,
               session_id: Optional[str] = None) -> Session:
        with self._lock:
            session = Session.create(self.store, dataset_ref, config, session_id)
            self._sessions[session.session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self._sessions:
                self._sessions[session_id] = Session.load(self.store, session_id)
            return self._sessions[session_id]

    def list_ids(self) -> list[str]:
        return self.store.list_sessions()
