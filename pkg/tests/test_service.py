import base64
import json

import pytest
from fastapi.testclient import TestClient

from modpipe.markers import Polarity, Scheme, embed_metadata_marker, sign_content
from modpipe.pipeline import EngineConfig
from modpipe.service import create_app, verdict_message
from modpipe.trustchain import generate_keypair, sign_bytes

from conftest import NOW, raster_item, seeded_secret

CLOCK = {"now": NOW}


@pytest.fixture
def service(tmp_path, pki):
    verifiers = []
    secrets = {}
    for i in range(4):
        secret, public = generate_keypair(seeded_secret(f"svc-verifier-{i}"))
        verifiers.append(
            {"verifier_id": f"rev-{i}", "kind": "crowd", "reputation": 1.0,
             "public_key_b64": base64.b64encode(public).decode()}
        )
        secrets[f"rev-{i}"] = secret
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    (data_dir / "verifiers.json").write_text(json.dumps(verifiers))
    CLOCK["now"] = NOW
    app = create_app(
        data_dir,
        pki["store"],
        config=EngineConfig(),
        clock=lambda: CLOCK["now"],
        debug=True,
    )
    client = TestClient(app)
    return {"client": client, "secrets": secrets, "data_dir": data_dir, "pki": pki, "app": app}


def ingest(client, item_id, payload, marker_block=None, tags=("animals",), reach=10, truth=None):
    manifest = {
        "id": item_id,
        "modality": "raster",
        "payload_path": "",
        "origin": {"source_id": "s-1", "category_tags": list(tags), "expected_reach": reach, "verified_source": False},
    }
    if truth is not None:
        manifest["ground_truth"] = {"is_deepfake": truth}
    files = {"media": (f"{item_id}.pgm", payload)}
    if marker_block is not None:
        files["marker"] = (f"{item_id}.marker", marker_block)
    return client.post("/v1/content", data={"manifest": json.dumps(manifest)}, files=files)


def sign_verdict(secrets, verifier_id, judgment, task_id, content_id, rationale=""):
    message = verdict_message(verifier_id, judgment, rationale, task_id, content_id)
    return {
        "verifier_id": verifier_id,
        "judgment": judgment,
        "rationale": rationale,
        "signature_b64": base64.b64encode(sign_bytes(secrets[verifier_id], message)).decode(),
    }


class TestIngestAndDecision:
    def test_marked_item_labeled_deepfake_final(self, service):
        pki = service["pki"]
        item = raster_item("svc-mk", seed=40)
        marker = sign_content(item, pki["leaf_secret"], Polarity.POSITIVE, pki["chain"], scheme=Scheme.METADATA)
        marked = embed_metadata_marker(item, marker)
        response = ingest(service["client"], "svc-mk", marked.payload, marked.marker_block)
        assert response.status_code == 202
        decision = service["client"].get("/v1/content/svc-mk/decision").json()
        assert decision["label"] == "DEEPFAKE"
        assert decision["status"] == "final"

    def test_unknown_content_404(self, service):
        assert service["client"].get("/v1/content/ghost/decision").status_code == 404

    def test_idempotent_ingest_no_rerun(self, service):
        item = raster_item("svc-idem", seed=41)
        first = ingest(service["client"], "svc-idem", item.payload)
        second = ingest(service["client"], "svc-idem", item.payload)
        assert first.json()["existing"] is False
        assert second.json()["existing"] is True
        counts = service["client"].get("/v1/debug/ingest-counts").json()
        assert counts["svc-idem"] == 1
        # decision count unchanged: still exactly one logged decision
        decisions = service["client"].get("/v1/decisions").json()["decisions"]
        assert sum(1 for d in decisions if d["content_id"] == "svc-idem") == 1

    def test_bad_manifest_400(self, service):
        response = service["client"].post(
            "/v1/content", data={"manifest": "{not json"}, files={"media": ("x.pgm", b"data")}
        )
        assert response.status_code == 400

    def test_media_round_trip(self, service):
        item = raster_item("svc-media", seed=42)
        ingest(service["client"], "svc-media", item.payload)
        got = service["client"].get("/v1/content/svc-media/media")
        assert got.status_code == 200
        assert got.content == item.payload


class TestReviewFlow:
    def _open_task(self, service, item_id="svc-rev", reach=10):
        item = raster_item(item_id, seed=43)
        response = ingest(
            service["client"], item_id, item.payload, tags=("political_communication",), reach=reach
        )
        assert response.status_code == 202
        decision = service["client"].get(f"/v1/content/{item_id}/decision").json()
        assert decision["status"] == "provisional"
        assert decision["label"] == "UNTRUSTWORTHY"
        return f"task-{item_id}"

    def test_queue_and_quorum_flow(self, service):
        client, secrets = service["client"], service["secrets"]
        task_id = self._open_task(service)
        queue = client.get("/v1/review/queue", params={"verifier": "rev-0"}).json()["tasks"]
        assert len(queue) == 1
        view = queue[0]
        assert view["task_id"] == task_id
        assert view["provisional_label"] == "UNTRUSTWORTHY"
        assert view["risk"]["level"] == "high"
        # independence: no judgments or verifier ids in the payload
        assert "verdicts" not in json.dumps(view)
        for i in range(2):
            body = sign_verdict(secrets, f"rev-{i}", "trustworthy", task_id, "svc-rev")
            result = client.post(f"/v1/review/{task_id}/verdict", json=body).json()
            assert result["quorum_met"] is False
            # still provisional before quorum
            assert client.get("/v1/content/svc-rev/decision").json()["status"] == "provisional"
        body = sign_verdict(secrets, "rev-2", "trustworthy", task_id, "svc-rev")
        result = client.post(f"/v1/review/{task_id}/verdict", json=body).json()
        assert result["quorum_met"] is True
        decision = client.get("/v1/content/svc-rev/decision").json()
        assert decision["status"] == "final"
        assert decision["label"] == "TRUSTWORTHY"  # (1,1,0) -> 2/3 > 0.5

    def test_verifier_never_sees_voted_task(self, service):
        client, secrets = service["client"], service["secrets"]
        task_id = self._open_task(service, "svc-rev2")
        assert any(
            t["task_id"] == task_id
            for t in client.get("/v1/review/queue", params={"verifier": "rev-0"}).json()["tasks"]
        )
        body = sign_verdict(secrets, "rev-0", "untrustworthy", task_id, "svc-rev2")
        client.post(f"/v1/review/{task_id}/verdict", json=body)
        assert not any(
            t["task_id"] == task_id
            for t in client.get("/v1/review/queue", params={"verifier": "rev-0"}).json()["tasks"]
        )

    def test_duplicate_verdict_409(self, service):
        client, secrets = service["client"], service["secrets"]
        task_id = self._open_task(service, "svc-rev3")
        body = sign_verdict(secrets, "rev-0", "trustworthy", task_id, "svc-rev3")
        assert client.post(f"/v1/review/{task_id}/verdict", json=body).status_code == 200
        assert client.post(f"/v1/review/{task_id}/verdict", json=body).status_code == 409

    def test_closed_task_409(self, service):
        client, secrets = service["client"], service["secrets"]
        task_id = self._open_task(service, "svc-rev4")
        for i in range(3):
            body = sign_verdict(secrets, f"rev-{i}", "untrustworthy", task_id, "svc-rev4")
            client.post(f"/v1/review/{task_id}/verdict", json=body)
        body = sign_verdict(secrets, "rev-3", "trustworthy", task_id, "svc-rev4")
        assert client.post(f"/v1/review/{task_id}/verdict", json=body).status_code == 409

    def test_unknown_verifier_401(self, service):
        client = service["client"]
        assert client.get("/v1/review/queue", params={"verifier": "nobody"}).status_code == 401
        task_id = self._open_task(service, "svc-rev5")
        body = {"verifier_id": "nobody", "judgment": "trustworthy", "rationale": "", "signature_b64": ""}
        assert client.post(f"/v1/review/{task_id}/verdict", json=body).status_code == 401

    def test_bad_signature_401(self, service):
        client, secrets = service["client"], service["secrets"]
        task_id = self._open_task(service, "svc-rev6")
        body = sign_verdict(secrets, "rev-0", "trustworthy", task_id, "svc-rev6")
        body["signature_b64"] = base64.b64encode(b"\x00" * 64).decode()
        assert client.post(f"/v1/review/{task_id}/verdict", json=body).status_code == 401

    def test_task_expiry(self, service):
        client, secrets = service["client"], service["secrets"]
        task_id = self._open_task(service, "svc-rev7")
        CLOCK["now"] = NOW + int(25 * 3600)
        queue = client.get("/v1/review/queue", params={"verifier": "rev-0"}).json()["tasks"]
        assert not any(t["task_id"] == task_id for t in queue)
        body = sign_verdict(secrets, "rev-0", "trustworthy", task_id, "svc-rev7")
        assert client.post(f"/v1/review/{task_id}/verdict", json=body).status_code == 409
        # decision stays provisional
        assert client.get("/v1/content/svc-rev7/decision").json()["status"] == "provisional"


class TestPolicy:
    def test_get_put_round_trip(self, service):
        client = service["client"]
        before = client.get("/v1/policy").json()
        response = client.put("/v1/policy", json={"scoring": {"weights": {"technical": 2, "trusted": 1, "risk": 1}, "threshold": 0.6}})
        assert response.status_code == 200
        after = response.json()
        assert after["config_fingerprint"] != before["config_fingerprint"]
        assert after["config"]["scoring"]["threshold"] == 0.6

    def test_invalid_weights_400(self, service):
        response = service["client"].put(
            "/v1/policy", json={"scoring": {"weights": {"technical": 0, "trusted": 0, "risk": 0}}}
        )
        assert response.status_code == 400

    def test_invalid_threshold_400(self, service):
        response = service["client"].put("/v1/policy", json={"scoring": {"threshold": 1.7}})
        assert response.status_code == 400

    def test_old_decisions_not_rewritten(self, service):
        client = service["client"]
        item = raster_item("svc-pol", seed=44)
        ingest(client, "svc-pol", item.payload)
        before = client.get("/v1/content/svc-pol/decision").json()
        client.put("/v1/policy", json={"scoring": {"threshold": 0.9}})
        after = client.get("/v1/content/svc-pol/decision").json()
        assert after == before

    def test_decision_table_export(self, service):
        client = service["client"]
        text = client.get("/v1/policy/decision-table").text
        assert text.splitlines()[0] == "marker_status,v_t,v_tr,v_r,score,label"
        assert len(text.strip().splitlines()) == 33
        candidate = client.post(
            "/v1/policy/decision-table",
            json={"weights": {"technical": 1, "trusted": 1, "risk": 1}, "threshold": 0.9},
        ).text
        assert "TRUSTWORTHY" in candidate


class TestAuditEndpoints:
    def test_run_and_fetch(self, service):
        client = service["client"]
        truth = {}
        for i in range(10):
            item = raster_item(f"svc-au-{i}", seed=100 + i)
            ingest(client, f"svc-au-{i}", item.payload, truth=None)
            truth[f"svc-au-{i}"] = i % 2 == 0
        response = client.post("/v1/audit/run", json={"ground_truth": truth, "n": 10, "seed": 5})
        assert response.status_code == 200
        body = response.json()
        report = client.get(f"/v1/audit/{body['audit_id']}").json()
        assert report["sample"]["n"] == 10
        counts = report["counts"]
        assert counts["tp"] + counts["fp"] + counts["tn"] + counts["fn"] == 10

    def test_insufficient_population_400(self, service):
        response = service["client"].post("/v1/audit/run", json={"ground_truth": {}, "n": 10**6, "seed": 1})
        assert response.status_code == 400

    def test_missing_audit_404(self, service):
        assert service["client"].get("/v1/audit/none").status_code == 404


class TestCrashConsistency:
    def test_restart_replays_consistent_state(self, service, pki):
        client = service["client"]
        for i in range(4):
            item = raster_item(f"svc-cr-{i}", seed=200 + i)
            ingest(client, f"svc-cr-{i}", item.payload)
        log_path = service["data_dir"] / "decisions.log"
        raw = log_path.read_bytes()
        log_path.write_bytes(raw[:-9])  # simulate a torn final write
        app2 = create_app(service["data_dir"], pki["store"], config=EngineConfig(), debug=True)
        client2 = TestClient(app2)
        assert client2.get("/v1/content/svc-cr-2/decision").status_code == 200
        assert client2.get("/v1/content/svc-cr-3/decision").status_code == 404
        # the torn item can be re-ingested cleanly
        item = raster_item("svc-cr-3", seed=203)
        assert ingest(client2, "svc-cr-3", item.payload).status_code == 202
        assert client2.get("/v1/content/svc-cr-3/decision").status_code == 200

    def test_debug_verify_endpoint(self, service):
        client = service["client"]
        item = raster_item("svc-dbg", seed=300)
        ingest(client, "svc-dbg", item.payload)
        body = client.get("/v1/debug/decisions/svc-dbg/verify").json()
        assert body["consistent"] is True


class TestManifestPreload:
    def test_preload_decisions_and_tasks(self, service, tmp_path):
        from modpipe.core import ManifestRecord, write_manifest
        from modpipe.service import preload_manifest

        import dataclasses

        from conftest import high_risk_origin

        items = []
        for i in range(3):
            item = dataclasses.replace(raster_item(f"pre-{i}", seed=400 + i), origin=high_risk_origin())
            (tmp_path / f"pre-{i}.pgm").write_bytes(item.payload)
            items.append(ManifestRecord(item=item, payload_path=f"pre-{i}.pgm"))
        write_manifest(items, tmp_path / "manifest.jsonl")
        state = service["app"].state.service
        count = preload_manifest(state, tmp_path / "manifest.jsonl")
        assert count == 3
        client = service["client"]
        assert client.get("/v1/content/pre-0/decision").status_code == 200
        queue = client.get("/v1/review/queue", params={"verifier": "rev-0"}).json()["tasks"]
        assert {t["content_id"] for t in queue} >= {"pre-0", "pre-1", "pre-2"}
        # idempotent: preloading again moderates nothing new
        assert preload_manifest(state, tmp_path / "manifest.jsonl") == 0
