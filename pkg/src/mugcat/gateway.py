"""Operator-facing HTTP/WebSocket service.

Sessions ingest frames, accumulate keywords, and produce conversation turns
on flush (or after an idle gap). Every state change is published as a
SessionEvent with a per-session monotone ``seq`` — WebSocket subscribers
get them live, and GET /v1/sessions/{id}/events?since=seq replays them, so
delivery is at-least-once and idempotent.
"""

import asyncio
import itertools
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import codec
from .errors import (
    BackendUnreachable,
    EmptyKeywords,
    IndexOutOfRange,
    MugcatError,
    StageFailed,
    TurnTimeout,
    UnknownSession,
    UnknownTurn,
)
from .ingest import ClipSegmenter, decode_clip_bytes
from .model import ConversationTurn, Frame, FrozenModel, PipelineConfig, validate_config
from .pipeline import MonotonicClock, TurnState, accept_gloss, run_turn
from .protocol import BackendSet

EventKind = Literal[
    "keyword_accepted",
    "turn_started",
    "candidates_ready",
    "selection_made",
    "turn_overridden",
    "error",
]


class SessionEvent(FrozenModel):
    seq: int = Field(ge=1)
    kind: EventKind
    payload: dict


class NewSessionRequest(BaseModel):
    source_id: Optional[str] = None
    fps: float = Field(default=30.0, gt=0)


class FrameBatch(BaseModel):
    frames: list[Frame]


class OverrideRequest(BaseModel):
    index: int = Field(ge=0)


@dataclass
class Session:
    session_id: str
    source_id: str
    fps: float
    window_len: int
    stride: int
    confidence_threshold: float
    idle_gap_windows: int
    segmenter: ClipSegmenter
    state: TurnState = field(default_factory=TurnState)
    events: list[SessionEvent] = field(default_factory=list)
    subscribers: set = field(default_factory=set)
    turn_count: int = 0
    frame_count: int = 0
    turn_ids: list[str] = field(default_factory=list)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)

    def emit(self, kind: EventKind, payload: dict) -> SessionEvent:
        event = SessionEvent(seq=len(self.events) + 1, kind=kind, payload=payload)
        self.events.append(event)
        for queue in list(self.subscribers):
            queue.put_nowait(event)
        return event


class Gateway:
    def __init__(
        self,
        config: PipelineConfig,
        *,
        lazy: bool = True,
        transcript_dir: Optional[Path] = None,
        reports_dir: Optional[Path] = None,
    ):
        self.config = config
        self.lazy = lazy
        self.transcript_dir = Path(transcript_dir) if transcript_dir else None
        self.reports_dir = Path(reports_dir) if reports_dir else None
        self.sessions: dict[str, Session] = {}
        self.turns: dict[str, tuple[str, ConversationTurn]] = {}
        self.backends = BackendSet.from_endpoints(config.endpoints)
        self.retired_backends: list[BackendSet] = []
        self.clock = MonotonicClock()
        self._session_counter = itertools.count(1)

    async def startup(self) -> None:
        if not self.lazy:
            try:
                await self.backends.handshake_all()
            except MugcatError as e:
                raise BackendUnreachable(str(e))

    async def shutdown(self) -> None:
        await self.backends.aclose()
        for retired in self.retired_backends:
            await retired.aclose()

    def session(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise UnknownSession(f"no session {session_id!r}")
        return self.sessions[session_id]

    def create_session(self, source_id: Optional[str], fps: float) -> Session:
        sid = f"s{next(self._session_counter):04d}"
        cfg = self.config
        sess = Session(
            session_id=sid,
            source_id=source_id or sid,
            fps=fps,
            window_len=cfg.window_len,
            stride=cfg.stride,
            confidence_threshold=cfg.confidence_threshold,
            idle_gap_windows=cfg.idle_gap_windows,
            segmenter=ClipSegmenter(cfg.window_len, cfg.stride, fps=fps, source_id=source_id or sid),
        )
        self.sessions[sid] = sess
        return sess

    def apply_config(self, updates: dict) -> PipelineConfig:
        merged = self.config.model_dump()
        endpoints = merged.pop("endpoints")
        for key, value in updates.items():
            if key.startswith("endpoint."):
                endpoints[key.split(".", 1)[1]] = value
            elif key == "endpoints":
                endpoints.update(value)
            else:
                merged[key] = value
        merged["endpoints"] = endpoints
        new = validate_config(merged)
        if new.endpoints != self.config.endpoints:
            self.retired_backends.append(self.backends)
            self.backends = BackendSet.from_endpoints(new.endpoints)
        self.config = new
        return new

    async def ingest_frames(self, sess: Session, frames: list[Frame]) -> dict:
        """Renumbers, windows, recognizes; may trigger an idle-gap turn."""
        accepted: list[str] = []
        windows = 0
        turn_payload = None
        for frame in frames:
            renumbered = Frame(
                index=sess.frame_count,
                timestamp_ms=sess.frame_count * 1000.0 / sess.fps,
                width=frame.width,
                height=frame.height,
                pixels=frame.pixels,
            )
            sess.frame_count += 1
            for clip in sess.segmenter.push(renumbered):
                windows += 1
                start = self.clock.now()
                preds = await self.backends.recognize.recognize(clip)
                sess.state.recognize_ms += (self.clock.now() - start) * 1000.0
                if accept_gloss(sess.state, preds, sess.confidence_threshold, clip_id=clip.clip_id):
                    keyword = sess.state.keywords[-1]
                    accepted.append(keyword)
                    sess.emit("keyword_accepted", {"keyword": keyword, "clip_id": clip.clip_id})
                elif sess.state.idle_windows >= sess.idle_gap_windows and sess.state.keywords:
                    turn = await self.run_session_turn(sess)
                    turn_payload = codec.to_jsonable(turn)
        return {"accepted_keywords": accepted, "windows": windows, "turn": turn_payload}

    async def run_session_turn(self, sess: Session) -> ConversationTurn:
        if not sess.state.keywords:
            sess.emit("error", {"code": "EmptyKeywords", "message": "flush with no accepted keywords"})
            raise EmptyKeywords("no accepted keywords in session")
        sess.turn_count += 1
        turn_id = f"{sess.session_id}-t{sess.turn_count:04d}"
        keywords = sess.state.keyword_sequence()
        recognize_ms = sess.state.recognize_ms
        sess.state = TurnState()

        async def progress(kind: str, payload: dict) -> None:
            sess.emit(kind, payload)  # kinds mirror EventKind values

        try:
            turn = await run_turn(
                keywords,
                self.config,
                self.backends,
                turn_id=turn_id,
                clock=self.clock,
                recognize_ms=recognize_ms,
                on_progress=progress,
            )
        except (StageFailed, TurnTimeout) as e:
            sess.emit("error", {"code": e.code, "message": str(e)})
            raise
        self.turns[turn_id] = (sess.session_id, turn)
        sess.turn_ids.append(turn_id)
        if self.transcript_dir:
            self.transcript_dir.mkdir(parents=True, exist_ok=True)
            (self.transcript_dir / f"{turn_id}.json").write_bytes(codec.encode(turn) + b"\n")
        return turn

    def override_turn(self, turn_id: str, index: int) -> ConversationTurn:
        if turn_id not in self.turns:
            raise UnknownTurn(f"no turn {turn_id!r}")
        session_id, turn = self.turns[turn_id]
        if index >= len(turn.candidates):
            raise IndexOutOfRange(f"override index {index} out of range for K={len(turn.candidates)}")
        updated = turn.model_copy(update={"override": index})
        self.turns[turn_id] = (session_id, updated)
        sess = self.sessions.get(session_id)
        if sess:
            sess.emit("turn_overridden", {"turn_id": turn_id, "override": index})
        return updated


_STATUS = {
    "UnknownSession": 404,
    "UnknownTurn": 404,
    "IndexOutOfRange": 422,
    "InvalidResolution": 422,
    "InvalidWindow": 422,
    "InvalidThreshold": 422,
    "EmptyKeywords": 409,
    "StageFailed": 502,
    "TurnTimeout": 504,
    "BackendUnreachable": 502,
}


def create_app(
    config: Optional[PipelineConfig] = None,
    *,
    lazy: bool = True,
    transcript_dir: Optional[Path] = None,
    reports_dir: Optional[Path] = None,
) -> FastAPI:
    gw = Gateway(
        config or PipelineConfig(),
        lazy=lazy,
        transcript_dir=transcript_dir,
        reports_dir=reports_dir,
    )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await gw.startup()
        yield
        await gw.shutdown()

    app = FastAPI(title="mugcat gateway", lifespan=lifespan, docs_url=None, redoc_url=None)
    app.state.gateway = gw

    @app.exception_handler(MugcatError)
    async def _domain_error(request: Request, exc: MugcatError):
        return JSONResponse(
            status_code=_STATUS.get(exc.code, 400),
            content={"code": exc.code, "message": str(exc)},
        )

    @app.exception_handler(RequestValidationError)
    async def _invalid(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"code": "MalformedRequest", "message": str(exc.errors()[:1])})

    @app.post("/v1/sessions", status_code=201)
    async def create_session(body: Optional[NewSessionRequest] = None):
        body = body or NewSessionRequest()
        sess = gw.create_session(body.source_id, body.fps)
        return {
            "session_id": sess.session_id,
            "source_id": sess.source_id,
            "window_len": sess.window_len,
            "stride": sess.stride,
        }

    @app.post("/v1/sessions/{session_id}/frames")
    async def post_frames(session_id: str, request: Request):
        sess = gw.session(session_id)
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            batch = FrameBatch.model_validate(await request.json())
            frames = batch.frames
        else:
            clip = decode_clip_bytes(await request.body(), source_id=sess.source_id)
            frames = list(clip.frames)
        async with sess.lock:
            return await gw.ingest_frames(sess, frames)

    @app.post("/v1/sessions/{session_id}/flush")
    async def flush(session_id: str):
        sess = gw.session(session_id)
        async with sess.lock:
            if not sess.state.keywords:
                sess.emit("error", {"code": "EmptyKeywords", "message": "flush with no accepted keywords"})
                return {"turn": None, "detail": "EmptyKeywords"}
            turn = await gw.run_session_turn(sess)
        return {"turn": codec.to_jsonable(turn)}

    @app.get("/v1/sessions/{session_id}")
    async def session_view(session_id: str):
        sess = gw.session(session_id)
        return {
            "session_id": sess.session_id,
            "keywords": list(sess.state.keywords),
            "turn_ids": list(sess.turn_ids),
            "events": len(sess.events),
            "pending_frames": sess.segmenter.pending,
        }

    @app.get("/v1/sessions/{session_id}/events")
    async def events(session_id: str, since: int = Query(default=0, ge=0)):
        sess = gw.session(session_id)
        return {"events": [e.model_dump(mode="json") for e in sess.events if e.seq > since]}

    @app.websocket("/v1/sessions/{session_id}/live")
    async def live(ws: WebSocket, session_id: str):
        await ws.accept()
        try:
            sess = gw.session(session_id)
        except UnknownSession:
            await ws.close(code=4404)
            return
        since = int(ws.query_params.get("since", "0"))
        queue: asyncio.Queue = asyncio.Queue()
        sess.subscribers.add(queue)
        try:
            for event in sess.events:
                if event.seq > since:
                    await ws.send_json(event.model_dump(mode="json"))
            while True:
                event = await queue.get()
                await ws.send_json(event.model_dump(mode="json"))
        except WebSocketDisconnect:
            pass
        finally:
            sess.subscribers.discard(queue)

    @app.post("/v1/turns/{turn_id}/override")
    async def override(turn_id: str, body: OverrideRequest):
        turn = gw.override_turn(turn_id, body.index)
        return codec.to_jsonable(turn)

    @app.get("/v1/turns/{turn_id}")
    async def get_turn(turn_id: str):
        if turn_id not in gw.turns:
            raise UnknownTurn(f"no turn {turn_id!r}")
        return codec.to_jsonable(gw.turns[turn_id][1])

    @app.get("/v1/config")
    async def get_config():
        return gw.config.model_dump(mode="json")

    @app.put("/v1/config")
    async def put_config(body: dict):
        return gw.apply_config(body).model_dump(mode="json")

    @app.get("/v1/health")
    async def health():
        stages = {}
        ok = True
        for stage, client in gw.backends.clients().items():
            try:
                caps = await client.handshake()
                stages[stage] = {"ok": True, "capabilities": caps.model_dump(mode="json")}
            except MugcatError as e:
                ok = False
                stages[stage] = {"ok": False, "error": f"{e.code}: {e}"}
        return {"ok": ok, "stages": stages}

    @app.get("/v1/bench/reports")
    async def bench_reports():
        if not gw.reports_dir or not gw.reports_dir.is_dir():
            return {"reports": []}
        out = []
        for path in sorted(gw.reports_dir.iterdir()):
            if path.suffix in (".json", ".csv", ".txt") and path.is_file():
                stat = path.stat()
                out.append({"name": path.name, "bytes": stat.st_size, "modified": stat.st_mtime})
        return {"reports": out}

    return app
