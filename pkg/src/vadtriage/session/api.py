"""HTTP service over the session layer.

All endpoints exchange JSON. Domain errors map to structured
``{code, message, detail}`` bodies; annotators identify themselves with the
``X-Annotator-Id`` header. Mutating work runs in the threadpool (plain ``def``
endpoints), so label submissions stay responsive while a retrain is running.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .. import errors as err
from ..audit import tree_from_export
from ..config import AppConfig
from ..domain import FEATURE_NAMES, LabelRecord, LabelValue, Provenance
from ..sampler import MixConfig
from .core import Session, SessionManager

NOT_FOUND = (err.DatasetMissing, err.UnknownConflict)
CONFLICT = (
    err.DuplicateSubmission,
    err.AlreadyResolved,
    err.SessionClosed,
    err.RoundStateError,
    err.NotTrained,
)


class CreateSessionBody(BaseModel):
    dataset_ref: str
    config: dict = Field(default_factory=dict)
    session_id: Optional[str] = None


class BatchBody(BaseModel):
    n: int
    assignments: dict[str, int]
    mix: Optional[dict] = None


class LabelItem(BaseModel):
    parcel_id: str
    value: str
    comment: str = ""


class LabelsBody(BaseModel):
    records: list[LabelItem]


class ResolutionBody(BaseModel):
    final_label: str
    rationale: str
    session_id: Optional[str] = None


class ValidationBody(BaseModel):
    name: str
    ids: list[str]
    surveyed_ids: Optional[list[str]] = None
    as_city_workflow: bool = False


class TrainBody(BaseModel):
    force: bool = False


def _batch_payload(session: Session, round_no: int) -> dict:
    rnd = session.rounds[round_no - 1]
    return {
        "session_id": session.session_id,
        "round": rnd.round_no,
        "state": rnd.state.name,
        "batch": rnd.batch.to_dict(),
        "assignments": {a: list(ids) for a, ids in rnd.assignments.items()},
        "warnings": list(rnd.warnings),
    }


def _find_batch(manager: SessionManager, batch_id: str) -> tuple[Session, int]:
    session_id, _, rtag = batch_id.rpartition("-r")
    if not session_id or not rtag.isdigit():
        raise err.DatasetMissing(f"malformed batch id {batch_id!r}")
    session = manager.get(session_id)
    round_no = int(rtag)
    if round_no < 1 or round_no > len(session.rounds):
        raise err.DatasetMissing(f"no round {round_no} in session {session_id}")
    return session, round_no


def create_app(sessions_root, static_dir=None) -> FastAPI:
    app = FastAPI(title="vadtriage", version="0.1.0")
    manager = SessionManager(sessions_root)
    app.state.manager = manager

    @app.exception_handler(err.VadTriageError)
    def domain_error(request: Request, exc: err.VadTriageError):
        if isinstance(exc, NOT_FOUND):
            status = 404
        elif isinstance(exc, CONFLICT):
            status = 409
        else:
            status = 400
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": str(exc), "detail": type(exc).__name__},
        )

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        config = AppConfig.from_dict(body.config)
        session = manager.create(body.dataset_ref, config, body.session_id)
        return session.describe()

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": manager.list_ids()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return manager.get(session_id).describe()

    @app.post("/sessions/{session_id}/batches")
    def request_batch(session_id: str, body: BatchBody):
        session = manager.get(session_id)
        mix = MixConfig(**body.mix) if body.mix else None
        session.request_batch(body.n, body.assignments, mix)
        return _batch_payload(session, len(session.rounds))

    @app.get("/batches/{batch_id}")
    def get_batch(batch_id: str):
        session, round_no = _find_batch(manager, batch_id)
        return _batch_payload(session, round_no)

    @app.post("/batches/{batch_id}/labels")
    def submit_labels(batch_id: str, body: LabelsBody,
                      x_annotator_id: str = Header(alias="X-Annotator-Id")):
        session, round_no = _find_batch(manager, batch_id)
        records = [
            LabelRecord(
                parcel_id=item.parcel_id,
                annotator_id=x_annotator_id,
                value=LabelValue(item.value),
                round=round_no,
                timestamp="",
                provenance=Provenance.EXPERT,
                comment=item.comment,
            )
            for item in body.records
        ]
        return session.submit_labels(x_annotator_id, records)

    @app.get("/sessions/{session_id}/conflicts")
    def list_conflicts(session_id: str, status: Optional[str] = None):
        session = manager.get(session_id)
        items = [c.to_dict() for _, c in sorted(session.conflicts.items())]
        if status:
            items = [c for c in items if c["status"] == status]
        return {"conflicts": items}

    @app.post("/conflicts/{conflict_id}/resolution")
    def resolve(conflict_id: str, body: ResolutionBody,
                x_annotator_id: str = Header(alias="X-Annotator-Id")):
        if body.session_id:
            session = manager.get(body.session_id)
        else:
            session = next(
                (manager.get(sid) for sid in manager.list_ids()
                 if conflict_id in manager.get(sid).conflicts),
                None,
            )
            if session is None:
                raise err.UnknownConflict(f"no conflict with id {conflict_id!r}")
        return session.resolve_conflict(
            conflict_id, LabelValue(body.final_label), body.rationale, x_annotator_id
        )

    @app.post("/sessions/{session_id}/train")
    def train(session_id: str, body: TrainBody = Body(default=TrainBody())):
        session = manager.get(session_id)
        session.trigger_retrain(force=body.force)
        return session.describe()["snapshots"][-1]

    @app.post("/sessions/{session_id}/validations")
    def register_validation(session_id: str, body: ValidationBody):
        session = manager.get(session_id)
        session.register_validation(
            body.name, body.ids, body.surveyed_ids, body.as_city_workflow
        )
        return {"registered": body.name}

    @app.get("/sessions/{session_id}/predictions")
    def predictions(session_id: str, kind: Optional[str] = Query(default=None)):
        session = manager.get(session_id)
        if not session.predictions:
            raise err.NotTrained("no predictions yet; train first")
        kinds = [kind] if kind else sorted(session.predictions)
        threshold = session.config.classification_threshold
        out = []
        for k in kinds:
            for pid, proba in sorted(session.predictions.get(k, {}).items()):
                parcel = session.dataset.parcels[pid]
                out.append({
                    "parcel_id": pid,
                    "kind": k,
                    "proba": proba,
                    "label": "VAD" if proba >= threshold else "NotVAD",
                    "x": parcel.x,
                    "y": parcel.y,
                })
        return {"predictions": out, "threshold": threshold}

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str, include_baseline: bool = True):
        session = manager.get(session_id)
        return session.get_report(include_baseline=include_baseline).to_dict()

    @app.get("/sessions/{session_id}/sheet")
    def sheet(session_id: str, round: int = Query(..., ge=1)):
        from fastapi.responses import PlainTextResponse

        from .sheets import export_sheet

        session = manager.get(session_id)
        if round > len(session.rounds):
            raise err.DatasetMissing(f"no round {round} in session {session_id}")
        batch = session.rounds[round - 1].batch
        records = session.effective_records()
        labels = {pid: records[pid].value.value
                  for pid in batch.parcel_ids if pid in records}
        comments = {pid: records[pid].comment
                    for pid in batch.parcel_ids if pid in records}
        text = export_sheet(batch.parcel_ids, session.dataset,
                            labels=labels, comments=comments)
        return PlainTextResponse(text, media_type="text/csv")

    @app.get("/parcels/{parcel_id}")
    def parcel(parcel_id: str, session_id: str = Query(...)):
        session = manager.get(session_id)
        if parcel_id not in session.dataset.parcels:
            raise err.DatasetMissing(f"no parcel {parcel_id!r} in session dataset")
        p = session.dataset.parcels[parcel_id]
        fv = session.dataset.features[parcel_id]
        incident_summary: dict[str, int] = {}
        for inc in session.dataset.incidents:
            if inc.parcel_id == parcel_id:
                incident_summary[inc.category.value] = incident_summary.get(inc.category.value, 0) + 1
        path = None
        exported = session.audit_trees.get(p.kind.value)
        if exported is not None:
            tree = tree_from_export(exported)
            steps, leaf = tree.path(fv.as_array())
            path = {
                "steps": [
                    {
                        "feature": FEATURE_NAMES[s.feature_index],
                        "threshold": s.threshold,
                        "went_left": s.went_left,
                    }
                    for s in steps
                ],
                "leaf": {"vad": leaf.vad_count, "total": leaf.total},
            }
        effective = session.effective().get(parcel_id)
        return {
            "parcel_id": parcel_id,
            "kind": p.kind.value,
            "neighborhood_id": p.neighborhood_id,
            "x": p.x,
            "y": p.y,
            "flood_risk": p.flood_risk.value,
            "residential_class": p.residential_class.value,
            "features": {name: getattr(fv, name) for name in FEATURE_NAMES},
            "incident_summary": incident_summary,
            "decision_path": path,
            "effective_label": None if effective is None else effective.value,
        }

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
