import json

import pytest
from fastapi.testclient import TestClient

from mugcat.gateway import create_app
from mugcat.model import PipelineConfig

from conftest import FIXTURES, make_frames, stub_backends


@pytest.fixture
def config() -> PipelineConfig:
    return PipelineConfig(window_len=16, stride=16, k=2, width=384, height=384, seed=7)


@pytest.fixture
def client(config):
    app = create_app(config)
    with TestClient(app) as tc:
        # in-process transports for every stage, same stubs the CLI uses
        tc.app.state.gateway.backends = stub_backends()
        yield tc


def frames_payload(fill: int, n: int = 16) -> dict:
    return {"frames": [f.model_dump(mode="json") for f in make_frames(n, fill=fill)]}


def fixture_frames() -> list[dict]:
    from mugcat.ingest import load_clip_container

    clip = load_clip_container(FIXTURES / "book_read.mclip")
    return [f.model_dump(mode="json") for f in clip.frames]


class TestSessions:
    def test_health_with_stubs(self, client):
        body = client.get("/v1/health").json()
        assert body["ok"] is True
        assert set(body["stages"]) == {"recognize", "synthesize", "caption", "embed", "image_features"}
        assert body["stages"]["embed"]["capabilities"]["embedding_dim"] == 64

    def test_unknown_session_404(self, client):
        resp = client.post("/v1/sessions/nope/flush")
        assert resp.status_code == 404
        assert resp.json()["code"] == "UnknownSession"

    def test_full_turn_flow_and_event_order(self, client):
        sid = client.post("/v1/sessions", json={"source_id": "book_read"}).json()["session_id"]
        fed = client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()}).json()
        assert fed["windows"] == 2
        assert fed["accepted_keywords"] == ["book", "read"]

        flushed = client.post(f"/v1/sessions/{sid}/flush").json()
        turn = flushed["turn"]
        assert turn["selection"]["selected_caption"] == "a photo of book read"
        assert turn["turn_id"] == f"{sid}-t0001"

        events = client.get(f"/v1/sessions/{sid}/events").json()["events"]
        kinds = [e["kind"] for e in events]
        assert kinds == ["keyword_accepted", "keyword_accepted", "turn_started", "candidates_ready", "selection_made"]
        assert [e["seq"] for e in events] == list(range(1, 6))

        stored = client.get(f"/v1/turns/{turn['turn_id']}").json()
        assert stored == turn

    def test_frames_as_mclip_chunk(self, client):
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        blob = (FIXTURES / "book_read.mclip").read_bytes()
        fed = client.post(
            f"/v1/sessions/{sid}/frames", content=blob, headers={"content-type": "application/octet-stream"}
        ).json()
        assert fed["accepted_keywords"] == ["book", "read"]

    def test_events_since_filter_is_idempotent(self, client):
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()})
        all_events = client.get(f"/v1/sessions/{sid}/events").json()["events"]
        tail = client.get(f"/v1/sessions/{sid}/events", params={"since": 1}).json()["events"]
        assert tail == all_events[1:]
        again = client.get(f"/v1/sessions/{sid}/events", params={"since": 1}).json()["events"]
        assert again == tail

    def test_flush_without_keywords_is_noop_with_error_event(self, client):
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        body = client.post(f"/v1/sessions/{sid}/flush").json()
        assert body == {"turn": None, "detail": "EmptyKeywords"}
        events = client.get(f"/v1/sessions/{sid}/events").json()["events"]
        assert events[-1]["kind"] == "error"
        assert events[-1]["payload"]["code"] == "EmptyKeywords"


class TestWebSocket:
    def test_live_replay_equals_rest_events(self, client):
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()})
        rest = client.get(f"/v1/sessions/{sid}/events").json()["events"]
        with client.websocket_connect(f"/v1/sessions/{sid}/live") as ws:
            received = [ws.receive_json() for _ in range(len(rest))]
        assert received == rest

    def test_live_since_skips_backlog(self, client):
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()})
        with client.websocket_connect(f"/v1/sessions/{sid}/live?since=1") as ws:
            first = ws.receive_json()
        assert first["seq"] == 2


class TestOverride:
    def _turn(self, client):
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()})
        return sid, client.post(f"/v1/sessions/{sid}/flush").json()["turn"]

    def test_override_round_trip(self, client):
        sid, turn = self._turn(client)
        updated = client.post(f"/v1/turns/{turn['turn_id']}/override", json={"index": 1}).json()
        assert updated["override"] == 1
        assert updated["selection"]["selected_index"] == 0  # audit trail intact
        stored = client.get(f"/v1/turns/{turn['turn_id']}").json()
        assert stored["override"] == 1
        events = client.get(f"/v1/sessions/{sid}/events").json()["events"]
        assert events[-1]["kind"] == "turn_overridden"
        assert events[-1]["payload"] == {"turn_id": turn["turn_id"], "override": 1}

    def test_override_out_of_range(self, client):
        _, turn = self._turn(client)
        resp = client.post(f"/v1/turns/{turn['turn_id']}/override", json={"index": 9})
        assert resp.status_code == 422
        assert resp.json()["code"] == "IndexOutOfRange"

    def test_override_unknown_turn(self, client):
        resp = client.post("/v1/turns/ghost/override", json={"index": 0})
        assert resp.status_code == 404
        assert resp.json()["code"] == "UnknownTurn"


class TestConfig:
    def test_get_round_trip(self, client, config):
        assert client.get("/v1/config").json() == config.model_dump(mode="json")

    def test_put_applies_to_next_turn(self, client):
        captured = []

        class CapturingSynth:
            def __init__(self, inner):
                self.inner = inner

            async def synthesize(self, request, **kwargs):
                captured.append(request)
                return await self.inner.synthesize(request, **kwargs)

            async def aclose(self):
                await self.inner.aclose()

            async def handshake(self):
                return await self.inner.handshake()

        gw = client.app.state.gateway
        gw.backends.synthesize = CapturingSynth(gw.backends.synthesize)

        assert client.put("/v1/config", json={"steps": 15}).json()["steps"] == 15

        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()})
        client.post(f"/v1/sessions/{sid}/flush")
        assert captured[-1].steps == 15

    def test_put_invalid_config_rejected(self, client):
        resp = client.put("/v1/config", json={"width": 500, "height": 500})
        assert resp.status_code == 422
        assert resp.json()["code"] == "InvalidResolution"
        resp = client.put("/v1/config", json={"stride": 0})
        assert resp.status_code == 422
        assert resp.json()["code"] == "InvalidWindow"

    def test_idle_gap_setting_snapshot_at_session_creation(self, client):
        # sessions keep their ingest parameters; new turn params apply at flush
        sid = client.post("/v1/sessions", json={}).json()["session_id"]
        client.put("/v1/config", json={"window_len": 8, "stride": 8})
        view = client.get(f"/v1/sessions/{sid}").json()
        assert view["session_id"] == sid
        fed = client.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()}).json()
        assert fed["windows"] == 2  # still the creation-time 16/16 windowing


class TestTranscriptsAndReports:
    def test_transcript_dump(self, config, tmp_path):
        app = create_app(config, transcript_dir=tmp_path / "transcripts")
        with TestClient(app) as tc:
            tc.app.state.gateway.backends = stub_backends()
            sid = tc.post("/v1/sessions", json={}).json()["session_id"]
            tc.post(f"/v1/sessions/{sid}/frames", json={"frames": fixture_frames()})
            turn = tc.post(f"/v1/sessions/{sid}/flush").json()["turn"]
        dumped = json.loads((tmp_path / "transcripts" / f"{turn['turn_id']}.json").read_text())
        assert dumped == turn

    def test_bench_reports_listing(self, config, tmp_path):
        reports = tmp_path / "reports"
        reports.mkdir()
        (reports / "sweep.json").write_text("{}")
        (reports / "fps.txt").write_text("x")
        (reports / "ignore.bin").write_text("x")
        app = create_app(config, reports_dir=reports)
        with TestClient(app) as tc:
            names = [r["name"] for r in tc.get("/v1/bench/reports").json()["reports"]]
        assert names == ["fps.txt", "sweep.json"]
