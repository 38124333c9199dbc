import asyncio

import httpx
import pytest
from fastapi import FastAPI

from mugcat.codec import encode
from mugcat.errors import StageFailed, TurnTimeout
from mugcat.model import GlossPrediction, KeywordSequence, PipelineConfig
from mugcat.pipeline import (
    ClipItem,
    Flush,
    FrozenClock,
    KeywordAccepted,
    MonotonicClock,
    TurnCompleted,
    TurnSkipped,
    TurnState,
    accept_gloss,
    run_stream,
    run_turn,
)
from mugcat.protocol import BackendSet
from mugcat.stubs import StubLatency, build_stub_app, stub_capabilities, stub_caption

from conftest import FIXTURES, go, make_clip, stub_backends


def kw(*words: str) -> KeywordSequence:
    return KeywordSequence(keywords=list(words), accepted_at=[f"c{i}" for i in range(len(words))])


class TestAcceptGloss:
    def test_confident_gloss_accepted(self):
        state = TurnState()
        assert accept_gloss(state, [GlossPrediction(label="book", confidence=0.9)], 0.5, clip_id="c0")
        assert state.keywords == ["book"]
        assert state.accepted_at == ["c0"]

    def test_low_confidence_rejected(self):
        state = TurnState()
        assert not accept_gloss(state, [GlossPrediction(label="book", confidence=0.3)], 0.5, clip_id="c0")
        assert state.keywords == []
        assert state.idle_windows == 1

    def test_consecutive_duplicates_suppressed(self):
        state = TurnState()
        preds = [GlossPrediction(label="book", confidence=0.9)]
        accept_gloss(state, preds, 0.5, clip_id="c0")
        accept_gloss(state, preds, 0.5, clip_id="c1")
        assert state.keywords == ["book"]

    def test_non_consecutive_repeat_allowed(self):
        state = TurnState()
        accept_gloss(state, [GlossPrediction(label="book", confidence=0.9)], 0.5, clip_id="c0")
        accept_gloss(state, [GlossPrediction(label="read", confidence=0.9)], 0.5, clip_id="c1")
        accept_gloss(state, [GlossPrediction(label="book", confidence=0.9)], 0.5, clip_id="c2")
        assert state.keywords == ["book", "read", "book"]


class TestRunTurn:
    def test_matches_committed_golden(self, fixture_config):
        async def t():
            backends = stub_backends()
            try:
                keywords = KeywordSequence(
                    keywords=["book", "read"], accepted_at=["book_read-c0000", "book_read-c0001"]
                )
                return await run_turn(keywords, fixture_config, backends, clock=FrozenClock())
            finally:
                await backends.aclose()

        turn = go(t())
        assert turn.selection.selected_index == 0
        assert turn.selection.selected_caption == "a photo of book read"
        golden = (FIXTURES / "book_read_turn.json").read_bytes()
        assert encode(turn) + b"\n" == golden

    def test_deterministic_across_runs(self, fixture_config):
        async def once():
            backends = stub_backends()
            try:
                return await run_turn(kw("book", "read"), fixture_config, backends, clock=FrozenClock())
            finally:
                await backends.aclose()

        assert encode(go(once())) == encode(go(once()))

    def test_real_clock_timings_are_consistent(self, fixture_config):
        async def t():
            backends = stub_backends()
            try:
                clock = MonotonicClock()
                start = clock.now()
                turn = await run_turn(kw("book"), fixture_config, backends, clock=clock)
                wall_ms = (clock.now() - start) * 1000.0
                return turn, wall_ms
            finally:
                await backends.aclose()

        turn, wall_ms = go(t())
        timings = turn.stage_timings_ms
        assert set(timings) == {"recognize", "synthesize", "caption", "embed", "select"}
        assert all(v >= 0 for v in timings.values())
        assert sum(timings.values()) <= wall_ms

    def test_captioner_down_fails_with_partial_timings(self, fixture_config):
        app = FastAPI()

        @app.get("/v1/capabilities")
        async def caps():
            return stub_capabilities("caption").model_dump(mode="json")

        @app.post("/v1/caption")
        async def caption(payload: dict):
            from fastapi.responses import JSONResponse

            return JSONResponse(status_code=500, content={"code": "Down", "message": "no captions today"})

        async def t():
            from conftest import stub_client

            backends = stub_backends()
            await backends.caption.aclose()
            backends.caption = stub_client("caption", app=app)
            try:
                with pytest.raises(StageFailed) as err:
                    await run_turn(kw("book"), fixture_config, backends, clock=MonotonicClock())
                return err.value
            finally:
                await backends.aclose()

        failure = go(t())
        assert failure.stage == "caption"
        assert "synthesize" in failure.timings_ms
        assert "recognize" in failure.timings_ms

    def test_turn_timeout(self):
        config = PipelineConfig(window_len=16, stride=16, k=2, width=384, height=384, seed=7, turn_timeout_s=0.05)
        slow = StubLatency(per_call_s=0.5)

        async def t():
            backends = stub_backends(synthesize=slow)
            try:
                with pytest.raises(TurnTimeout):
                    await run_turn(kw("book"), config, backends)
            finally:
                await backends.aclose()

        go(t())

    def test_bounded_caption_concurrency(self):
        counter = {"now": 0, "max": 0}
        app = FastAPI()

        @app.get("/v1/capabilities")
        async def caps():
            return stub_capabilities("caption").model_dump(mode="json")

        @app.post("/v1/caption")
        async def caption(payload: dict):
            from mugcat.model import GeneratedImage

            counter["now"] += 1
            counter["max"] = max(counter["max"], counter["now"])
            await asyncio.sleep(0.03)
            counter["now"] -= 1
            image = GeneratedImage.model_validate(payload["image"])
            return {"caption": stub_caption(image).model_dump(mode="json")}

        def run_with(concurrency):
            counter["now"] = counter["max"] = 0
            config = PipelineConfig(
                window_len=16, stride=16, k=8, width=384, height=384, seed=7, caption_concurrency=concurrency
            )

            async def t():
                from conftest import stub_client

                backends = stub_backends()
                await backends.caption.aclose()
                backends.caption = stub_client("caption", app=app)
                try:
                    await run_turn(kw("book"), config, backends)
                finally:
                    await backends.aclose()

            go(t())
            return counter["max"]

        assert run_with(3) <= 3
        assert run_with(8) >= 2  # fan-out genuinely overlaps


class TestRunStream:
    def _collect(self, items, config, **kwargs):
        async def t():
            backends = stub_backends()

            async def source():
                for item in items:
                    yield item

            events = []
            try:
                async for event in run_stream(source(), config, backends, **kwargs):
                    events.append(event)
            finally:
                await backends.aclose()
            return events

        return go(t())

    def test_hinted_clips_and_flush(self, fixture_config):
        items = [
            ClipItem(make_clip(16, clip_id="s-c0000"), hint="book"),
            ClipItem(make_clip(16, clip_id="s-c0001"), hint="read"),
            Flush(),
        ]
        events = self._collect(items, fixture_config)
        kinds = [type(e).__name__ for e in events]
        assert kinds == ["KeywordAccepted", "KeywordAccepted", "TurnCompleted"]
        turn = events[-1].turn
        assert turn.keywords.keywords == ("book", "read")
        assert turn.selection.selected_caption == "a photo of book read"

    def test_flush_without_keywords_is_noop(self, fixture_config):
        events = self._collect([Flush()], fixture_config)
        assert isinstance(events[0], TurnSkipped)
        assert events[0].reason == "EmptyKeywords"

    def test_two_flushes_two_turns_with_increasing_ids(self, fixture_config):
        items = [
            ClipItem(make_clip(16, clip_id="s-c0000"), hint="book"),
            Flush(),
            ClipItem(make_clip(16, clip_id="s-c0001"), hint="read"),
            Flush(),
        ]
        events = self._collect(items, fixture_config)
        turns = [e.turn for e in events if isinstance(e, TurnCompleted)]
        assert [t.turn_id for t in turns] == ["t0001", "t0002"]
        assert turns[0].keywords.keywords == ("book",)
        assert turns[1].keywords.keywords == ("read",)

    def test_idle_gap_triggers_turn(self):
        # high threshold rejects fingerprint glosses (conf 0.9), hints pass at 1.0
        config = PipelineConfig(
            window_len=16, stride=16, k=2, width=384, height=384, seed=7,
            confidence_threshold=0.95, idle_gap_windows=3,
        )
        items = [ClipItem(make_clip(16, clip_id=f"s-c{i:04d}"), hint="book" if i == 0 else None) for i in range(4)]
        events = self._collect(items, config)
        turns = [e for e in events if isinstance(e, TurnCompleted)]
        assert len(turns) == 1
        assert turns[0].turn.keywords.keywords == ("book",)

    def test_frame_stream_matches_fixture_keywords(self, fixture_config):
        from mugcat.ingest import load_clip_container

        clip = load_clip_container(FIXTURES / "book_read.mclip")
        items = [*clip.frames, Flush()]
        events = self._collect(items, fixture_config, source_id="book_read", source_fps=clip.fps)
        accepted = [e.keyword for e in events if isinstance(e, KeywordAccepted)]
        assert accepted == ["book", "read"]
        turn = [e for e in events if isinstance(e, TurnCompleted)][0].turn
        assert turn.keywords.accepted_at == ("book_read-c0000", "book_read-c0001")

    def test_stream_determinism(self, fixture_config):
        from mugcat.ingest import load_clip_container

        clip = load_clip_container(FIXTURES / "book_read.mclip")

        def once():
            items = [*clip.frames, Flush()]
            events = self._collect(items, fixture_config, source_id="book_read", source_fps=clip.fps)
            return b"".join(encode(e.turn) for e in events if isinstance(e, TurnCompleted))

        assert once() == once()
