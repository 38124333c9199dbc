"""Turn orchestration: recognize clips, accumulate keywords, synthesize K
candidates, caption and embed them concurrently, select the winning pair.

Timing uses an injectable clock. Live serving measures real wall time;
batch replays against all-stub backends freeze the clock at zero so turn
JSON is bit-reproducible (the determinism the golden tests rely on).
"""

import asyncio
import time
from dataclasses import dataclass, field
from typing import AsyncIterable, AsyncIterator, Awaitable, Callable, Optional, Protocol, Sequence, Union

from .errors import EmptyKeywords, MugcatError, StageFailed, TurnTimeout
from .ingest import ClipSegmenter
from .model import (
    CandidatePair,
    Clip,
    ConversationTurn,
    Frame,
    GlossPrediction,
    KeywordSequence,
    PipelineConfig,
    SynthesisRequest,
)
from .protocol import BackendSet
from .selection import build_query, select


class Clock(Protocol):
    def now(self) -> float: ...


class MonotonicClock:
    def now(self) -> float:
        return time.monotonic()


class FrozenClock:
    """Always reads 0.0; turns timed with it serialize identically."""

    def now(self) -> float:
        return 0.0


def clock_for(config: PipelineConfig) -> Clock:
    return FrozenClock() if config.endpoints.all_stub() else MonotonicClock()


@dataclass
class TurnState:
    """Mutable per-conversation collection state (one task owns it)."""

    phase: str = "collecting"
    keywords: list[str] = field(default_factory=list)
    accepted_at: list[str] = field(default_factory=list)
    recognize_ms: float = 0.0
    idle_windows: int = 0

    def keyword_sequence(self) -> KeywordSequence:
        return KeywordSequence(keywords=self.keywords, accepted_at=self.accepted_at)


def accept_gloss(
    state: TurnState,
    predictions: Sequence[GlossPrediction],
    threshold: float,
    *,
    clip_id: str = "",
) -> bool:
    """Accepts the top-1 gloss if confident and not a consecutive repeat."""
    if not predictions:
        return False
    top = predictions[0]
    last = state.keywords[-1] if state.keywords else None
    if top.confidence >= threshold and top.label != last:
        state.keywords.append(top.label)
        state.accepted_at.append(clip_id)
        state.idle_windows = 0
        return True
    state.idle_windows += 1
    return False


ProgressHook = Callable[[str, dict], Awaitable[None]]


async def run_turn(
    keywords: KeywordSequence,
    config: PipelineConfig,
    backends: BackendSet,
    *,
    turn_id: str = "t0001",
    clock: Optional[Clock] = None,
    recognize_ms: float = 0.0,
    on_progress: Optional[ProgressHook] = None,
) -> ConversationTurn:
    """One conversation turn: synthesize -> caption -> embed -> select."""
    clk = clock if clock is not None else clock_for(config)
    timings: dict[str, float] = {"recognize": recognize_ms}

    async def staged(stage: str, coro):
        start = clk.now()
        try:
            result = await coro
        except MugcatError as e:
            raise StageFailed(stage, e, timings)
        timings[stage] = (clk.now() - start) * 1000.0
        return result

    async def inner() -> ConversationTurn:
        query = build_query(keywords)
        if on_progress:
            await on_progress("turn_started", {"turn_id": turn_id, "query_text": query})

        request = SynthesisRequest(
            request_id=f"{turn_id}-synth",
            prompt=query,
            steps=config.steps,
            width=config.width,
            height=config.height,
            k=config.k,
            seed=config.seed,
        )
        images = await staged("synthesize", backends.synthesize.synthesize(request))

        limit = asyncio.Semaphore(config.effective_caption_concurrency)

        async def bounded(coro):
            async with limit:
                return await coro

        captions = await staged(
            "caption",
            asyncio.gather(*(bounded(backends.caption.caption(img)) for img in images)),
        )
        if on_progress:
            await on_progress(
                "candidates_ready",
                {
                    "turn_id": turn_id,
                    "candidates": [
                        {"image_id": img.image_id, "ordinal": img.ordinal, "caption": cap.text}
                        for img, cap in zip(images, captions)
                    ],
                },
            )

        embeds = await staged(
            "embed",
            asyncio.gather(
                bounded(backends.embed.embed(query)),
                *(bounded(backends.embed.embed(cap.text)) for cap in captions),
            ),
        )
        query_embedding, caption_embeddings = embeds[0], embeds[1:]

        start = clk.now()
        pairs = [
            CandidatePair(image=img, caption=cap, caption_embedding=emb)
            for img, cap, emb in zip(images, captions, caption_embeddings)
        ]
        try:
            selection = select(pairs, query_embedding)
        except MugcatError as e:
            raise StageFailed("select", e, timings)
        timings["select"] = (clk.now() - start) * 1000.0
        if on_progress:
            await on_progress("selection_made", {"turn_id": turn_id, "selection": selection.model_dump(mode="json")})

        return ConversationTurn(
            turn_id=turn_id,
            keywords=keywords,
            query_text=query,
            candidates=[
                pair.model_copy(update={"score": selection.scores[i]}) for i, pair in enumerate(pairs)
            ],
            selection=selection,
            stage_timings_ms=timings,
            override=None,
        )

    if config.turn_timeout_s is None:
        return await inner()
    try:
        return await asyncio.wait_for(inner(), timeout=config.turn_timeout_s)
    except asyncio.TimeoutError:
        raise TurnTimeout(config.turn_timeout_s, timings)


# ---------------------------------------------------------------------------
# streaming


@dataclass
class ClipItem:
    """Pre-segmented clip pushed straight to the recognizer.

    ``hint`` rides the request's debug_label_hint; only the stub honors it.
    """

    clip: Clip
    hint: Optional[str] = None


class Flush:
    """Explicit end-of-utterance signal."""


StreamItem = Union[Frame, ClipItem, Flush]


@dataclass
class KeywordAccepted:
    keyword: str
    clip_id: str


@dataclass
class TurnCompleted:
    turn: ConversationTurn


@dataclass
class TurnSkipped:
    reason: str


@dataclass
class TurnFailed:
    stage: str
    message: str
    timings_ms: dict[str, float]


@dataclass
class StreamError:
    message: str


StreamEvent = Union[KeywordAccepted, TurnCompleted, TurnSkipped, TurnFailed, StreamError]


async def run_stream(
    items: AsyncIterable[StreamItem],
    config: PipelineConfig,
    backends: BackendSet,
    *,
    source_id: str = "live",
    source_fps: float = 30.0,
    clock: Optional[Clock] = None,
    on_progress: Optional[ProgressHook] = None,
) -> AsyncIterator[StreamEvent]:
    """Segments a frame/clip stream into turns.

    A turn triggers on an explicit Flush or after idle_gap_windows
    consecutive windows without an accepted gloss.
    """
    clk = clock if clock is not None else clock_for(config)
    segmenter = ClipSegmenter(config.window_len, config.stride, fps=source_fps, source_id=source_id)
    state = TurnState()
    turn_no = 0

    async def recognize(clip: Clip, hint: Optional[str]) -> list[StreamEvent]:
        start = clk.now()
        try:
            preds = await backends.recognize.recognize(clip, debug_label_hint=hint)
        except MugcatError as e:
            raise StageFailed("recognize", e, {"recognize": state.recognize_ms})
        state.recognize_ms += (clk.now() - start) * 1000.0
        if accept_gloss(state, preds, config.confidence_threshold, clip_id=clip.clip_id):
            return [KeywordAccepted(keyword=state.keywords[-1], clip_id=clip.clip_id)]
        return []

    async def flush() -> StreamEvent:
        nonlocal state, turn_no
        if not state.keywords:
            return TurnSkipped(reason="EmptyKeywords")
        turn_no += 1
        turn_id = f"t{turn_no:04d}"
        keywords = state.keyword_sequence()
        recognize_ms = state.recognize_ms
        state = TurnState()
        try:
            turn = await run_turn(
                keywords,
                config,
                backends,
                turn_id=turn_id,
                clock=clk,
                recognize_ms=recognize_ms,
                on_progress=on_progress,
            )
        except StageFailed as e:
            return TurnFailed(stage=e.stage, message=str(e), timings_ms=e.timings_ms)
        return TurnCompleted(turn=turn)

    try:
        async for item in items:
            if isinstance(item, Flush):
                yield await flush()
                continue
            clips = [ClipItem(c) for c in segmenter.push(item)] if isinstance(item, Frame) else [item]
            for clip_item in clips:
                for event in await recognize(clip_item.clip, clip_item.hint):
                    yield event
                if (
                    state.idle_windows >= config.idle_gap_windows
                    and state.keywords
                ):
                    yield await flush()
    except StageFailed as e:
        yield TurnFailed(stage=e.stage, message=str(e), timings_ms=e.timings_ms)
    except MugcatError as e:
        yield StreamError(message=str(e))
