import json

import pytest
from fastapi.testclient import TestClient

from conftest import CARE_EVENTS, care_doc, example1_trace
from procsift.model import StepType, parse_model
from procsift.pipeline import Analysis, PipelineConfig
from procsift.reasoner import InterpretationQuery, Session
from procsift.service import create_app
from procsift.tagger import UniformTagger


@pytest.fixture()
def client(tmp_path):
    (tmp_path / "care_restricted.json").write_text(care_doc(restricted=True))
    (tmp_path / "care.json").write_text(care_doc())
    app = create_app(artifact_dir=str(tmp_path))
    with TestClient(app) as c:
        yield c


def start_session(client, model="care_restricted.json", config=None):
    body = {"model": model}
    if config:
        body["config"] = config
    response = client.post("/sessions", json=body)
    assert response.status_code == 200
    return response.json()["id"]


def feed_example1(client, sid):
    results = []
    for name in CARE_EVENTS:
        r = client.post(f"/sessions/{sid}/events", json={"event": {"type": name}})
        assert r.status_code == 200
        results.append(r.json())
    return results


class TestLifecycle:
    def test_example1_session(self, client):
        sid = start_session(client)
        results = feed_example1(client, sid)
        assert [r["index"] for r in results] == [1, 2, 3, 4]
        assert results[3]["ranking"] == [{"activity": "A2", "probability": 1.0}]

        boolean = client.post(
            f"/sessions/{sid}/query",
            json={"activity": "A2", "step": "last", "instance": 1},
        ).json()
        assert boolean == {"v": 1, "answer": True}

        wildcard = client.post(f"/sessions/{sid}/query", json={"activity": "A1"}).json()
        assert wildcard == {"v": 1, "matches": []}

        explain = client.post(
            f"/sessions/{sid}/explain",
            json={"activity": "A1", "step": "first", "instance": 1},
        ).json()
        assert [r["kind"] for r in explain["reasons"]] == ["mapping_violation"]
        assert explain["reasons"][0]["indices"] == [4]

        summary = client.post(f"/sessions/{sid}/finalize").json()
        assert summary["inconsistent"] == []
        final_accepted = summary["accepted"][3]
        assert final_accepted == [
            {"event_index": 4, "activity": "A2", "step": "last", "instance": 1}
        ]

    def test_state_reflects_prefix_and_results(self, client):
        sid = start_session(client)
        feed_example1(client, sid)
        state = client.get(f"/sessions/{sid}/state").json()
        assert [e["type"] for e in state["prefix"]] == CARE_EVENTS
        assert len(state["results"]) == 4
        assert state["finalized"] is False

    def test_inline_model_document(self, client):
        inline = json.loads(care_doc())
        r = client.post("/sessions", json={"model": inline})
        assert r.status_code == 200

    def test_skeptical_query(self, client):
        sid = start_session(client, model="care.json")
        client.post(f"/sessions/{sid}/events", json={"event": {"type": "BloodSample"}})
        r = client.post(
            f"/sessions/{sid}/query",
            json={"activity": "A1", "step": "first", "instance": 1, "semantics": "skeptical"},
        )
        assert r.json()["answer"] is False


class TestErrors:
    def test_unknown_session_is_404(self, client):
        assert client.post("/sessions/nope/events", json={"event": {"type": "x"}}).status_code == 404
        assert client.get("/sessions/nope/state").status_code == 404

    def test_unknown_event_type_is_400(self, client):
        sid = start_session(client)
        r = client.post(f"/sessions/{sid}/events", json={"event": {"type": "Nope"}})
        assert r.status_code == 400

    def test_query_beyond_prefix_is_400(self, client):
        sid = start_session(client)
        feed_example1(client, sid)
        r = client.post(
            f"/sessions/{sid}/query", json={"activity": "A2", "event_index": 9}
        )
        assert r.status_code == 400

    def test_malformed_body_is_400(self, client):
        sid = start_session(client)
        r = client.post(
            f"/sessions/{sid}/events",
            content=b"{not json",
            headers={"content-type": "application/json"},
        )
        assert r.status_code == 400

    def test_missing_model_is_400(self, client):
        assert client.post("/sessions", json={}).status_code == 400

    def test_unknown_model_file_is_400(self, client):
        assert client.post("/sessions", json={"model": "missing.json"}).status_code == 400


class TestDifferentialAgainstLibrary:
    def test_api_matches_direct_calls(self, client):
        sid = start_session(client)
        api_results = feed_example1(client, sid)
        api_answer = client.post(
            f"/sessions/{sid}/query",
            json={"activity": "A2", "step": "last", "instance": 1},
        ).json()["answer"]

        mapping, model = parse_model(care_doc(restricted=True))
        session = Session(mapping, model)
        analysis = Analysis(session, PipelineConfig(), tagger=UniformTagger(3))
        lib_results = [
            analysis.process_event(ev)
            for ev in example1_trace(mapping, finalized=False).events
        ]
        for api_step, lib_step in zip(api_results, lib_results):
            lib_wire = [
                {"activity": mapping.activities[a], "probability": p}
                for a, p in lib_step.ranking
            ]
            assert api_step["ranking"] == lib_wire
            assert api_step["deviation"] == lib_step.deviation
        a2 = mapping.activity_id("A2")
        assert api_answer == session.answer(
            InterpretationQuery(4, a2, StepType.LAST, 1)
        )


class TestIsolationAndStream:
    def test_sessions_do_not_interfere(self, client):
        sid1 = start_session(client)
        sid2 = start_session(client)
        client.post(f"/sessions/{sid1}/events", json={"event": {"type": "BloodSample"}})
        client.post(f"/sessions/{sid2}/events", json={"event": {"type": "BloodSample"}})
        client.post(f"/sessions/{sid1}/events", json={"event": {"type": "BloodPressure"}})
        state1 = client.get(f"/sessions/{sid1}/state").json()
        state2 = client.get(f"/sessions/{sid2}/state").json()
        assert len(state1["prefix"]) == 2
        assert len(state2["prefix"]) == 1

    def test_stream_replays_in_event_order(self, client):
        sid = start_session(client)
        feed_example1(client, sid)
        with client.stream("GET", f"/sessions/{sid}/stream?replay=1") as response:
            text = "".join(response.iter_text())
        payloads = [
            json.loads(line[len("data: "):])
            for line in text.splitlines()
            if line.startswith("data: ")
        ]
        step_indices = [p["index"] for p in payloads if "ranking" in p]
        assert step_indices == [1, 2, 3, 4]

    def test_stream_carries_deviation_alerts(self, client):
        sid = start_session(client)
        client.post(f"/sessions/{sid}/events", json={"event": {"type": "BloodSample"}})
        r = client.post(
            f"/sessions/{sid}/events", json={"event": {"type": "CannulaInsertion"}}
        )
        assert r.json()["deviation"] is True
        with client.stream("GET", f"/sessions/{sid}/stream?replay=1") as response:
            text = "".join(response.iter_text())
        assert "event: deviation" in text


class TestOverflow:
    def test_solver_overflow_maps_to_503(self, client):
        sid = start_session(client, config={"solver_budget": 1})
        r = client.post(f"/sessions/{sid}/events", json={"event": {"type": "BloodSample"}})
        assert r.status_code == 503
        assert r.json()["retry"] is True
