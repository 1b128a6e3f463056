import json
from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from maritime_intel.chat import MockChatClient, StaticChatClient
from maritime_intel.evalharness import judge
from maritime_intel.ingest import VesselCategory
from maritime_intel.sampler import Region
from maritime_intel.service import (QueryRejected, create_app, parse_query,
                                    retrieve_and_assemble)
from maritime_intel.store import BoundingBox, RecordStore
from maritime_intel.qagen import DATA_MARKER
from testutil import rec

NOW = datetime(2024, 3, 16, 0, 0, 0, tzinfo=timezone.utc)


# --- query parsing ----------------------------------------------------------------

def test_parse_region_day_and_category():
    q = parse_query("How many cargo vessels in the Gulf of Mexico on 2024-03-01?",
                    now=NOW)
    assert q.region == Region.GULF_OF_MEXICO
    assert q.vessel_category == VesselCategory.CARGO
    assert q.window == (datetime(2024, 3, 1, tzinfo=timezone.utc),
                        datetime(2024, 3, 2, tzinfo=timezone.utc))


def test_parse_relative_window_near_port():
    q = parse_query("vessels last 6 hours near Miami", now=NOW)
    assert q.window == (NOW - timedelta(hours=6), NOW)
    assert q.bbox is not None
    assert q.bbox.contains(25.77, -80.17)


def test_parse_date_range_and_mmsi():
    q = parse_query("track mmsi 367000123 from 2024-03-01 to 2024-03-03", now=NOW)
    assert q.mmsi == "367000123"
    assert q.window[0] == datetime(2024, 3, 1, tzinfo=timezone.utc)
    assert q.window[1] == datetime(2024, 3, 4, tzinfo=timezone.utc)


def test_parse_explicit_box():
    q = parse_query("anchored ships in box 25.0,-85.0 to 30.0,-80.0 on 2024-03-15",
                    now=NOW)
    assert q.bbox == BoundingBox(25.0, -85.0, 30.0, -80.0)
    assert q.status_category is not None


def test_parse_rejects_unconstrained_query():
    with pytest.raises(QueryRejected) as err:
        parse_query("tell me about ships", now=NOW)
    assert len(err.value.missing) == 2
    assert any("time" in m for m in err.value.missing)
    assert any("spatial" in m.lower() for m in err.value.missing)


def test_parse_rejects_empty_text():
    with pytest.raises(ValueError):
        parse_query("   ", now=NOW)


# --- retrieval and assembly ----------------------------------------------------------

def _service_store(n_vessels=120):
    store = RecordStore()
    records = [rec(mmsi=f"36733{i:04d}", minutes=i % 60,
                   lat=26.0 + (i % 25) * 0.02, lon=-89.0 - (i // 25) * 0.02)
               for i in range(n_vessels)]
    store.add_many(records)
    return store


def test_assemble_question_first_with_all_vessels():
    store = _service_store(120)
    q = parse_query("how many vessels in the gulf of mexico on 2024-03-15", now=NOW)
    assembled = retrieve_and_assemble(q, store)
    assert assembled.vessel_count == 120
    assert not assembled.truncated
    assert assembled.prompt.index("Q1.") < assembled.prompt.index('{"lat"')
    store.close()


def test_assemble_caps_at_max_vessels_deterministically():
    store = _service_store(700)
    q = parse_query("vessels in the gulf of mexico on 2024-03-15", now=NOW)
    first = retrieve_and_assemble(q, store, max_vessels=500)
    second = retrieve_and_assemble(q, store, max_vessels=500)
    assert first.vessel_count == 500
    assert first.total_matching == 700
    assert first.truncated
    assert "showing 500 of 700" in first.prompt
    assert first.prompt == second.prompt
    store.close()


def test_assemble_no_matches_produces_no_prompt():
    store = _service_store(5)
    q = parse_query("vessels in the great lakes on 2024-03-15", now=NOW)
    assembled = retrieve_and_assemble(q, store)
    assert assembled.vessel_count == 0
    assert assembled.prompt is None
    store.close()


# --- HTTP service -----------------------------------------------------------------------

def _read_stream(response):
    chunks = [json.loads(line) for line in response.text.splitlines() if line.strip()]
    return chunks


def test_health_endpoint():
    store = _service_store(10)
    app = create_app(store, StaticChatClient("ok"))
    with TestClient(app) as client:
        body = client.get("/health").json()
    assert body == {"status": "ok", "records": 10}
    store.close()


def test_query_stream_round_trips_oracle_count():
    store = _service_store(120)
    question = "How many vessels in the gulf of mexico on 2024-03-15?"
    # ground truth computed independently of the service path
    expected = len({r.mmsi for r in store.query()})
    reference = f"{expected} distinct vessels reported in the area during the window."
    app = create_app(store, StaticChatClient(reference))
    with TestClient(app) as client:
        response = client.post("/query", json={"question": question})
        assert response.status_code == 200
        chunks = _read_stream(response)
    assert chunks[0]["type"] == "meta"
    assert chunks[0]["payload"]["vessel_count"] == 120
    assert chunks[-1]["type"] == "done"
    answer = chunks[-1]["payload"]["answer"]
    assert judge(answer, reference).correct
    assert chunks[-1]["payload"]["vessel_count"] == 120
    assert chunks[-1]["payload"]["elapsed_s"] >= 0
    store.close()


def test_query_malformed_body_is_400():
    store = _service_store(3)
    app = create_app(store, StaticChatClient("ok"))
    with TestClient(app) as client:
        assert client.post("/query", content=b"not json",
                           headers={"content-type": "application/json"}).status_code == 400
        assert client.post("/query", json={"nope": 1}).status_code == 400
        assert client.post("/query", json={"question": "  "}).status_code == 400
    store.close()


def test_query_unresolvable_is_422_with_guidance():
    store = _service_store(3)
    app = create_app(store, StaticChatClient("ok"))
    with TestClient(app) as client:
        response = client.post("/query", json={"question": "tell me about ships"})
    assert response.status_code == 422
    body = response.json()
    assert body["error"] == "query_unresolvable"
    assert body["missing"]
    assert "guidance" in body
    store.close()


def test_query_no_data_skips_inference():
    store = _service_store(5)
    client_spy = StaticChatClient("should never be called")
    app = create_app(store, client_spy)
    with TestClient(app) as client:
        response = client.post("/query",
                               json={"question": "vessels in the great lakes on 2024-03-15"})
        chunks = _read_stream(response)
    assert chunks[0]["payload"]["no_data"] is True
    assert chunks[-1]["type"] == "done"
    assert client_spy.calls == 0
    store.close()


def test_query_inference_failure_emits_error_chunk():
    store = _service_store(10)
    app = create_app(store, MockChatClient(mode="fail"))
    with TestClient(app) as client:
        response = client.post("/query",
                               json={"question": "vessels in the gulf of mexico on 2024-03-15"})
        chunks = _read_stream(response)
    assert chunks[0]["type"] == "meta"
    assert chunks[-1]["type"] == "error"
    store.close()


def test_query_relative_window_uses_store_anchor():
    # without an explicit `now`, "last N hours" anchors to the newest record
    store = _service_store(50)
    app = create_app(store, StaticChatClient("50 vessels"))
    with TestClient(app) as client:
        response = client.post("/query",
                               json={"question": "vessels near Houston last 2 days"})
        chunks = _read_stream(response)
    assert chunks[0]["type"] == "meta"
    store.close()


def test_prompt_marker_shared_with_generator():
    store = _service_store(20)
    q = parse_query("vessels in the gulf of mexico on 2024-03-15", now=NOW)
    assembled = retrieve_and_assemble(q, store)
    assert DATA_MARKER in assembled.prompt
    store.close()
