import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from gazelab.config import load_config
from gazelab.pipeline import (
    compute_kappa_report,
    run_ingest,
    run_mine,
    run_score,
    run_segment,
)
from gazelab.service import create_app
from gazelab.store import RunStore

RID = "svc1"


@pytest.fixture(scope="module")
def store(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc") / "runs"
    store = RunStore(root)
    config = load_config(overrides={
        "data": {"synthetic": {"n_experts": 2, "n_students": 1, "sequence_length": 24}},
        "mining": {"n_runs": 2, "stages": ["direct", "H"], "prompt_levels": ["detailed"]},
    })
    run_ingest(store, RID, config, seed=3, use_synthetic=True)
    run_segment(store, RID, config)
    run_mine(store, RID, config, seed=3, force_mock=True)
    # literature verdicts only; expert side left pending for review
    run_score(store, RID, config, seed=3, skip_expert=True)
    return store


@pytest.fixture(scope="module")
def client(store):
    return TestClient(create_app(store.root))


def pending_ids(client):
    return [p["id"] for p in client.get(f"/runs/{RID}/patterns",
                                        params={"status": "pending"}).json()]


class TestReadEndpoints:
    def test_list_runs(self, client):
        runs = client.get("/runs").json()
        assert [r["run_id"] for r in runs] == [RID]
        assert runs[0]["stages"]["score"] == "done"

    def test_get_run(self, client):
        assert client.get(f"/runs/{RID}").json()["run_id"] == RID

    def test_unknown_run_404_shape(self, client):
        resp = client.get("/runs/nope")
        assert resp.status_code == 404
        body = resp.json()
        assert body["code"] == "not_found"
        assert "message" in body

    def test_patterns_pending_initially_all(self, client):
        all_items = client.get(f"/runs/{RID}/patterns").json()
        pending = pending_ids(client)
        assert len(all_items) > 0
        assert len(pending) == len(all_items)
        assert all(p["literature_verdict"] in ("valid", "invalid") for p in all_items)
        assert all(p["expert_verdict"] is None for p in all_items)

    def test_pattern_detail_carries_evidence_and_score(self, client):
        pid = pending_ids(client)[0]
        detail = client.get(f"/patterns/{pid}").json()
        assert detail["run_id"] == RID
        assert len(detail["evidence"]) == 5
        assert len(detail["components"]) == 5
        assert detail["total"] == sum(detail["components"])

    def test_unknown_pattern_404(self, client):
        assert client.get("/patterns/ffff00000000ffff").status_code == 404


class TestVerdictFlow:
    def test_post_then_kappa_includes_verdict(self, client, store):
        pid = pending_ids(client)[0]
        before = client.get(f"/runs/{RID}/reports/kappa").json()
        resp = client.post(f"/patterns/{pid}/verdict", json={"verdict": "valid"})
        assert resp.status_code == 200
        assert resp.json()["appended"] is True
        after = client.get(f"/runs/{RID}/reports/kappa").json()
        assert after["overall_items"] == before["overall_items"] + 1
        # server-side recomputation matches the pipeline's own math
        assert after["overall"] == compute_kappa_report(store, RID)["overall"]

    def test_double_submit_identical_is_idempotent(self, client, store):
        pid = pending_ids(client)[0]
        body = {"verdict": "invalid", "note": "dup check"}
        first = client.post(f"/patterns/{pid}/verdict", json=body).json()
        count_after_first = len(store.verdict_records(RID))
        second = client.post(f"/patterns/{pid}/verdict", json=body).json()
        assert first["appended"] is True
        assert second["appended"] is False
        assert len(store.verdict_records(RID)) == count_after_first

    def test_conflicting_verdict_replaces_with_audit(self, client, store):
        pid = pending_ids(client)[0]
        client.post(f"/patterns/{pid}/verdict", json={"verdict": "valid"})
        records_before = len(store.verdict_records(RID))
        client.post(f"/patterns/{pid}/verdict", json={"verdict": "invalid"})
        assert len(store.verdict_records(RID)) == records_before + 1
        assert store.verdict_map(RID)[(pid, "expert")] == "invalid"

    def test_malformed_verdict_validation_error(self, client):
        pid = pending_ids(client)[0]
        resp = client.post(f"/patterns/{pid}/verdict", json={"verdict": "maybe"})
        assert resp.status_code == 422
        assert resp.json()["code"] == "validation"

    def test_reviewed_moves_out_of_pending(self, client):
        pid = pending_ids(client)[0]
        client.post(f"/patterns/{pid}/verdict", json={"verdict": "valid"})
        assert pid not in pending_ids(client)
        reviewed = [p["id"] for p in client.get(f"/runs/{RID}/patterns",
                                                params={"status": "reviewed"}).json()]
        assert pid in reviewed

    def test_concurrent_posts_to_distinct_patterns(self, client, store):
        pids = pending_ids(client)[:6]
        assert len(pids) >= 2

        def post(pid):
            return client.post(f"/patterns/{pid}/verdict", json={"verdict": "valid"}).status_code

        with ThreadPoolExecutor(max_workers=4) as pool:
            codes = list(pool.map(post, pids))
        assert codes == [200] * len(pids)
        verdicts = store.verdict_map(RID)
        for pid in pids:
            assert verdicts[(pid, "expert")] == "valid"
        kappa = client.get(f"/runs/{RID}/reports/kappa").json()
        assert kappa["overall_items"] >= len(pids)


class TestReports:
    def test_kappa_grid_shape(self, client):
        grid = client.get(f"/runs/{RID}/reports/kappa").json()["grid"]
        assert grid["columns"] == ["4o", "o1", "r1"]
        assert len(grid["rows"]) == 10

    def test_missing_reports_404(self, client):
        assert client.get(f"/runs/{RID}/reports/anomalies").status_code == 404
        assert client.get(f"/runs/{RID}/reports/difficulty").status_code == 404


class TestEvidenceWrite:
    def test_post_evidence_rescoring_flows_into_kappa(self, client, store):
        pid = client.get(f"/runs/{RID}/patterns").json()[0]["id"]
        records = [
            {"pattern_id": pid, "rank": r, "quartile": "Q4", "stance": -1}
            for r in range(1, 6)
        ]
        resp = client.post(f"/runs/{RID}/evidence",
                           json={"pattern_id": pid, "records": records})
        assert resp.status_code == 200
        body = resp.json()
        assert body["total"] == -20.0  # all five oppose: -((6+5+4+3+2))
        assert body["literature_verdict"] == "invalid"
        # detail endpoint reflects the replacement
        detail = client.get(f"/patterns/{pid}").json()
        assert detail["total"] == -20.0
        assert detail["literature_verdict"] == "invalid"
        assert len(detail["evidence"]) == 5

    def test_post_evidence_validation(self, client):
        pid = client.get(f"/runs/{RID}/patterns").json()[0]["id"]
        records = [{"pattern_id": pid, "rank": 1, "quartile": "Q1", "stance": 1}] * 5
        resp = client.post(f"/runs/{RID}/evidence",
                           json={"pattern_id": pid, "records": records})
        assert resp.status_code == 422
        assert resp.json()["code"] == "validation"
