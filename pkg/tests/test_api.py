import pytest
from fastapi.testclient import TestClient

from vadtriage.session.api import create_app
from vadtriage.synth import CityConfig, generate_city, write_city_csv

HEADERS = {"X-Annotator-Id": "ann1"}


@pytest.fixture(scope="module")
def city_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("api-city")
    ds, truth = generate_city(CityConfig(n_parcels=400, n_neighborhoods=4, seed=8))
    write_city_csv(ds, truth, root)
    return root


@pytest.fixture
def client(city_dir, tmp_path):
    app = create_app(tmp_path / "sessions")
    return TestClient(app)


def make_session(client, city_dir, n=12):
    config = {"seed": 8, "forest": {"n_trees": 8}, "cv_at_retrain": False,
              "audit": {"disagreement_eps": 3.0}}
    created = client.post("/sessions", json={"dataset_ref": str(city_dir),
                                             "config": config}).json()
    sid = created["session_id"]
    batch = client.post(f"/sessions/{sid}/batches",
                        json={"n": n, "assignments": {"ann1": n}}).json()
    return sid, batch


def label_all(client, sid, batch, value="VAD", alternate=True):
    ids = batch["assignments"]["ann1"]
    records = []
    for i, pid in enumerate(ids):
        v = value if not alternate else ("VAD" if i % 2 == 0 else "NotVAD")
        records.append({"parcel_id": pid, "value": v, "comment": f"c{i}"})
    return client.post(f"/batches/{batch['batch']['batch_id']}/labels",
                       headers=HEADERS, json={"records": records})


class TestSessionEndpoints:
    def test_create_and_get(self, client, city_dir):
        sid, batch = make_session(client, city_dir)
        got = client.get(f"/sessions/{sid}").json()
        assert got["session_id"] == sid
        assert got["rounds"][0]["state"] == "ASSIGNED"
        listed = client.get("/sessions").json()["sessions"]
        assert sid in listed

    def test_missing_session_is_structured_404(self, client):
        resp = client.get("/sessions/nope")
        assert resp.status_code == 404
        body = resp.json()
        assert set(body) == {"code", "message", "detail"}
        assert body["code"] == "dataset_missing"

    def test_batch_fetch_by_id(self, client, city_dir):
        sid, batch = make_session(client, city_dir)
        got = client.get(f"/batches/{batch['batch']['batch_id']}").json()
        assert got["batch"]["parcel_ids"] == batch["batch"]["parcel_ids"]


class TestLabeling:
    def test_submit_then_visible(self, client, city_dir):
        sid, batch = make_session(client, city_dir)
        resp = label_all(client, sid, batch)
        assert resp.status_code == 200
        assert resp.json()["round_state"] == "AUDITED"
        session = client.get(f"/sessions/{sid}").json()
        assert session["n_labels"] == 12

    def test_duplicate_submission_is_409(self, client, city_dir):
        sid, batch = make_session(client, city_dir)
        pid = batch["assignments"]["ann1"][0]
        body = {"records": [{"parcel_id": pid, "value": "VAD"}]}
        bid = batch["batch"]["batch_id"]
        assert client.post(f"/batches/{bid}/labels", headers=HEADERS, json=body).status_code == 200
        resp = client.post(f"/batches/{bid}/labels", headers=HEADERS, json=body)
        assert resp.status_code == 409
        assert resp.json()["code"] == "duplicate_submission"

    def test_unassigned_parcel_rejected(self, client, city_dir):
        sid, batch = make_session(client, city_dir)
        session = client.get(f"/sessions/{sid}").json()
        resp = client.post(
            f"/batches/{batch['batch']['batch_id']}/labels",
            headers={"X-Annotator-Id": "intruder"},
            json={"records": [{"parcel_id": batch["assignments"]["ann1"][0], "value": "VAD"}]},
        )
        assert resp.status_code == 400
        assert resp.json()["code"] == "not_assigned"


class TestConflictsAndTraining:
    def test_full_loop(self, client, city_dir):
        sid, batch = make_session(client, city_dir, n=20)
        label_all(client, sid, batch)
        conflicts = client.get(f"/sessions/{sid}/conflicts").json()["conflicts"]
        assert conflicts, "generous eps should flag disagreements"
        cid = conflicts[0]["conflict_id"]
        resolved = client.post(
            f"/conflicts/{cid}/resolution",
            headers={"X-Annotator-Id": "lead"},
            json={"final_label": "VAD", "rationale": "reviewed jointly", "session_id": sid},
        ).json()
        assert resolved["status"] == "Resolved"
        again = client.post(
            f"/conflicts/{cid}/resolution",
            headers={"X-Annotator-Id": "lead"},
            json={"final_label": "VAD", "rationale": "again", "session_id": sid},
        )
        assert again.status_code == 409

        snap = client.post(f"/sessions/{sid}/train", json={}).json()
        assert snap["n_labels"] == 20
        preds = client.get(f"/sessions/{sid}/predictions").json()["predictions"]
        assert preds and {"parcel_id", "proba", "label", "x", "y"} <= set(preds[0])

        kinds = {p["kind"] for p in preds}
        one_kind = sorted(kinds)[0]
        scoped = client.get(f"/sessions/{sid}/predictions", params={"kind": one_kind}).json()
        assert {p["kind"] for p in scoped["predictions"]} == {one_kind}

    def test_train_before_labels_is_409(self, client, city_dir):
        sid, batch = make_session(client, city_dir)
        resp = client.post(f"/sessions/{sid}/train", json={})
        assert resp.status_code == 409

    def test_report_requires_training(self, client, city_dir):
        sid, _ = make_session(client, city_dir)
        resp = client.get(f"/sessions/{sid}/report")
        assert resp.status_code == 409
        assert resp.json()["code"] == "not_trained"

    def test_sheet_endpoint_reflects_submitted_labels(self, client, city_dir):
        sid, batch = make_session(client, city_dir, n=10)
        label_all(client, sid, batch)
        resp = client.get(f"/sessions/{sid}/sheet", params={"round": 1})
        assert resp.status_code == 200
        lines = resp.text.splitlines()
        label_line = next(line for line in lines if line.startswith("label,"))
        assert "VAD" in label_line and "NotVAD" in label_line
        assert any(line.startswith("comment,") and "c0" in line for line in lines)

    def test_report_round_trip(self, client, city_dir):
        sid, batch = make_session(client, city_dir, n=24)
        label_all(client, sid, batch)
        client.post(f"/sessions/{sid}/train", json={})
        ids = batch["assignments"]["ann1"][:5]
        client.post(f"/sessions/{sid}/validations",
                    json={"name": "usps", "ids": ids})
        report = client.get(f"/sessions/{sid}/report").json()
        assert {r["method"] for r in report["rows"]} >= {"hitl", "simple_ml"}
        assert "usps" in report["validation_sources"]


class TestParcelEndpoint:
    def test_attributes_and_path(self, client, city_dir):
        sid, batch = make_session(client, city_dir, n=20)
        label_all(client, sid, batch)
        pid = batch["assignments"]["ann1"][0]
        got = client.get(f"/parcels/{pid}", params={"session_id": sid}).json()
        assert got["parcel_id"] == pid
        assert set(got["features"]) == {
            "crime_w", "drug_crime_w", "code_violation_w", "delinquent_tax",
            "delinquent_years", "unpaid_special_pct", "property_value",
        }
        assert got["effective_label"] in ("VAD", "NotVAD")
        if got["decision_path"] is not None:
            assert "steps" in got["decision_path"]
            assert got["decision_path"]["leaf"]["total"] >= 1

    def test_unknown_parcel_404(self, client, city_dir):
        sid, _ = make_session(client, city_dir)
        resp = client.get("/parcels/XXXX", params={"session_id": sid})
        assert resp.status_code == 404
