"""Protocol-conformant adapter server.

One in-flight inference at a time by default (GPU contention); the
checkpoint loads lazily under the same lock, so callers measuring
infer-and-load throughput see the load inside their total scope. Load time
is logged. debug_label_hint is deliberately never forwarded to the model.
"""

import asyncio
import io
import logging
import time

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, ValidationError

from .config import AdapterConfig
from .wire import (
    CaptionRequest,
    CaptionResponse,
    Capabilities,
    EmbedRequest,
    EmbedResponse,
    ImageFeaturesRequest,
    ImageFeaturesResponse,
    RecognizeRequest,
    RecognizeResponse,
    SynthesizeRequest,
    SynthesizeResponse,
    WireCaption,
    WireEmbedding,
    WireImage,
    Prediction,
)

log = logging.getLogger("mugcat_adapters")


def _png_to_array(png: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(png)).convert("RGB")
    return np.asarray(img)


def _clip_to_array(clip) -> np.ndarray:
    frames = [
        np.frombuffer(f.pixels, dtype=np.uint8).reshape(f.height, f.width, 3) for f in clip.frames
    ]
    return np.stack(frames)


def build_adapter_app(config: AdapterConfig, runner) -> FastAPI:
    config = config.validated()
    app = FastAPI(title=f"mugcat adapter: {config.stage}", docs_url=None, redoc_url=None)
    state = {"loaded": False, "load_seconds": None}
    gate = asyncio.Lock()  # one inference in flight; also guards lazy load

    async def ensure_loaded() -> None:
        if state["loaded"]:
            return
        start = time.monotonic()
        await asyncio.get_event_loop().run_in_executor(None, runner.load)
        state["load_seconds"] = time.monotonic() - start
        state["loaded"] = True
        log.info("loaded %s checkpoint %s in %.2fs", config.stage, config.checkpoint, state["load_seconds"])

    def capabilities() -> Capabilities:
        return Capabilities(
            stage=config.stage,
            name=config.name,
            version=config.version,
            embedding_dim=config.embedding_dim,
            input_resolution=config.input_resolution,
            vocabulary_size=config.vocabulary_size,
            supported_resolutions=config.supported_resolutions,
        )

    def _failure(exc: Exception) -> JSONResponse:
        log.exception("request failed")
        return JSONResponse(status_code=500, content={"code": type(exc).__name__, "message": str(exc)})

    def _json_route(path: str, request_model, handler):
        @app.post(path)
        async def route(request: Request) -> Response:
            try:
                req = request_model.model_validate_json(await request.body())
            except (ValidationError, ValueError) as e:
                return JSONResponse(status_code=422, content={"code": "MalformedRequest", "message": str(e)[:300]})
            try:
                async with gate:
                    await ensure_loaded()
                    result: BaseModel = await handler(req)
            except Exception as e:  # noqa: BLE001 - model failures map to 5xx bodies
                return _failure(e)
            return Response(content=result.model_dump_json(), media_type="application/json")

    @app.get("/v1/capabilities")
    async def caps() -> Response:
        try:
            async with gate:
                await ensure_loaded()
        except Exception as e:  # noqa: BLE001
            return _failure(e)
        return Response(content=capabilities().model_dump_json(), media_type="application/json")

    if config.stage == "recognize":

        async def recognize(req: RecognizeRequest) -> RecognizeResponse:
            ranked = runner.predict(_clip_to_array(req.clip), req.top_k)
            preds = [Prediction(label=label, confidence=conf) for label, conf in ranked[: req.top_k]]
            return RecognizeResponse(clip_id=req.clip.clip_id, predictions=preds)

        _json_route("/v1/recognize", RecognizeRequest, recognize)

    elif config.stage == "synthesize":

        async def synthesize(req: SynthesizeRequest) -> SynthesizeResponse:
            pngs = runner.generate(req.prompt, req.steps, req.width, req.height, req.k, req.seed)
            images = [
                WireImage(image_id=f"{req.request_id}-i{i}", request_ref=req.request_id, ordinal=i, png_bytes=png)
                for i, png in enumerate(pngs)
            ]
            return SynthesizeResponse(request_id=req.request_id, images=images)

        _json_route("/v1/synthesize", SynthesizeRequest, synthesize)

    elif config.stage == "caption":

        async def caption(req: CaptionRequest) -> CaptionResponse:
            text = runner.describe(_png_to_array(req.image.png_bytes))
            return CaptionResponse(caption=WireCaption(image_ref=req.image.image_id, text=text))

        _json_route("/v1/caption", CaptionRequest, caption)

    elif config.stage == "embed":

        async def embed(req: EmbedRequest) -> EmbedResponse:
            vector = np.asarray(runner.encode(req.text), dtype=np.float64)
            return EmbedResponse(embedding=WireEmbedding(vector=[float(x) for x in vector], dim=int(vector.shape[0])))

        _json_route("/v1/embed", EmbedRequest, embed)

    elif config.stage == "image_features":

        async def features(req: ImageFeaturesRequest) -> ImageFeaturesResponse:
            vector = np.asarray(runner.extract(_png_to_array(req.image.png_bytes)), dtype=np.float64)
            return ImageFeaturesResponse(features=WireEmbedding(vector=[float(x) for x in vector], dim=int(vector.shape[0])))

        _json_route("/v1/image_features", ImageFeaturesRequest, features)

    return app


def serve_adapter(config: AdapterConfig, runner=None, *, host: str = "127.0.0.1", port: int = 9200, eager: bool = True) -> None:
    """Blocking entry point; exits nonzero with a reason on startup failure."""
    import sys

    import uvicorn

    if runner is None:
        from .runners import build_runner

        runner = build_runner(config.stage, config.checkpoint, config.device)
    if eager:
        try:
            start = time.monotonic()
            runner.load()
            log.info("loaded %s in %.2fs", config.checkpoint, time.monotonic() - start)
        except Exception as e:  # noqa: BLE001 - startup failures must be readable
            print(f"adapter startup failed: {type(e).__name__}: {e}", file=sys.stderr)
            raise SystemExit(1)
        app = build_adapter_app(config, _Preloaded(runner))
    else:
        app = build_adapter_app(config, runner)
    uvicorn.run(app, host=host, port=port, log_level="info")


class _Preloaded:
    """Wraps an already-loaded runner so the lazy path is a no-op."""

    def __init__(self, runner):
        self._runner = runner

    def load(self) -> None:
        pass

    def __getattr__(self, name):
        return getattr(self._runner, name)
