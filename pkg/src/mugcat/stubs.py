"""Deterministic reference backends for all five stages.

No GPU, no weights: the synthesizer emits seeded procedural noise with the
prompt hidden steganographically in the leading pixels, the captioner reads
it back, the embedder is a signed feature-hashing bag of words, and the
feature extractor is an 8x8 block-mean over luma. Every stub is a pure
function of its request, so full-pipeline runs are bit-reproducible.

Fixed primitives (portable across implementations): FNV-1a 64-bit for all
hashing; splitmix64 with little-endian 8-byte words for noise.
"""

import asyncio
import io
import time
from dataclasses import dataclass
from typing import Awaitable, Callable, Optional, Type, TypeVar

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, ValidationError

from .errors import EmptyText, MugcatError, PayloadTooLarge
from .model import (
    ALLOWED_RESOLUTIONS,
    Caption,
    Clip,
    Embedding,
    GeneratedImage,
    GlossPrediction,
    StageName,
    SynthesisRequest,
)
from .protocol import (
    PROTOCOL_VERSION,
    BackendCapabilities,
    CaptionRequest,
    CaptionResponse,
    EmbedRequest,
    EmbedResponse,
    ImageFeaturesRequest,
    ImageFeaturesResponse,
    RecognizeRequest,
    RecognizeResponse,
    SynthesizeResponse,
)
from .vocab import STUB_VOCABULARY

MASK64 = (1 << 64) - 1
EMBED_DIM = 64
STEGANO_MAGIC = b"MGCT"


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def splitmix64_fill(seed: int, nbytes: int) -> bytes:
    """Byte stream from successive splitmix64 outputs, little-endian words."""
    nwords = (nbytes + 7) // 8
    # state after k increments is seed + k*gamma mod 2^64, so vectorize
    k = np.arange(1, nwords + 1, dtype=np.uint64)
    z = np.uint64(seed & MASK64) + k * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return z.astype("<u8").tobytes()[:nbytes]


def stegano_encode(pixels: bytearray, text: str, width: int, height: int) -> None:
    """Writes magic + u32-BE length + UTF-8 across RGB channels from (0,0)."""
    payload = text.encode("utf-8")
    blob = STEGANO_MAGIC + len(payload).to_bytes(4, "big") + payload
    if len(blob) > 3 * width * height:
        raise PayloadTooLarge(f"{len(payload)}-byte payload exceeds {width}x{height} stegano capacity")
    pixels[: len(blob)] = blob


def stegano_decode(pixels: bytes) -> Optional[str]:
    if pixels[:4] != STEGANO_MAGIC:
        return None
    n = int.from_bytes(pixels[4:8], "big")
    if 8 + n > len(pixels):
        return None
    try:
        return pixels[8 : 8 + n].decode("utf-8")
    except UnicodeDecodeError:
        return None


def png_encode(pixels: bytes, width: int, height: int) -> bytes:
    buf = io.BytesIO()
    Image.frombytes("RGB", (width, height), pixels).save(buf, format="PNG")
    return buf.getvalue()


def png_decode(png: bytes) -> tuple[bytes, int, int]:
    img = Image.open(io.BytesIO(png)).convert("RGB")
    return img.tobytes(), img.size[0], img.size[1]


def stub_recognize(clip: Clip, debug_label_hint: Optional[str] = None) -> list[GlossPrediction]:
    """Hint wins outright; otherwise the center frame's FNV-1a fingerprint
    indexes the bundled vocabulary at confidence 0.9."""
    if debug_label_hint:
        return [GlossPrediction(label=debug_label_hint, confidence=1.0)]
    center = clip.frames[len(clip.frames) // 2]
    fingerprint = fnv1a64(center.pixels)
    label = STUB_VOCABULARY[fingerprint % len(STUB_VOCABULARY)]
    return [GlossPrediction(label=label, confidence=0.9)]


def stub_synthesize(request: SynthesisRequest) -> list[GeneratedImage]:
    images = []
    prompt_hash = fnv1a64(request.prompt.encode("utf-8"))
    for i in range(request.k):
        stream_seed = (request.seed ^ i ^ prompt_hash) & MASK64
        pixels = bytearray(splitmix64_fill(stream_seed, request.width * request.height * 3))
        stegano_encode(pixels, f"{request.prompt}|k={i}", request.width, request.height)
        images.append(
            GeneratedImage(
                image_id=f"{request.request_id}-i{i}",
                request_ref=request.request_id,
                ordinal=i,
                png_bytes=png_encode(bytes(pixels), request.width, request.height),
            )
        )
    return images


def stub_caption(image: GeneratedImage) -> Caption:
    pixels, _, _ = png_decode(image.png_bytes)
    payload = stegano_decode(pixels)
    text = "an unrecognized picture"
    if payload is not None and "|k=" in payload:
        prompt, _, ordinal = payload.rpartition("|k=")
        if ordinal.isdigit():
            i = int(ordinal)
            text = f"a photo of {prompt}" if i == 0 else f"a photo of {prompt} variant {i}"
    return Caption(image_ref=image.image_id, text=text)


def stub_embed(text: str) -> Embedding:
    """Signed feature hashing: lowercase, whitespace tokens, FNV-1a index
    and sign (bit 63)."""
    tokens = text.lower().split()
    if not tokens:
        raise EmptyText("cannot embed empty text")
    vec = [0.0] * EMBED_DIM
    for token in tokens:
        h = fnv1a64(token.encode("utf-8"))
        vec[h % EMBED_DIM] += 1.0 if (h >> 63) == 0 else -1.0
    return Embedding(vector=vec, dim=EMBED_DIM)


def stub_image_features(image: GeneratedImage) -> Embedding:
    """8x8 block-mean luma in [0,1]; sides not divisible by 8 are trimmed."""
    pixels, w, h = png_decode(image.png_bytes)
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3).astype(np.float64)
    luma = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    bh, bw = h // 8, w // 8
    luma = luma[: bh * 8, : bw * 8].reshape(8, bh, 8, bw)
    means = luma.mean(axis=(1, 3)) / 255.0
    return Embedding(vector=[float(x) for x in means.reshape(-1)], dim=EMBED_DIM)


@dataclass
class StubLatency:
    """Injected delays for benchmark tests (seconds)."""

    handshake_s: float = 0.0
    per_call_s: float = 0.0
    synth_seconds_per_step: float = 0.0


async def _delay(seconds: float) -> None:
    """Near-exact injected latency. asyncio.sleep overshoots by the kernel
    timer slack (milliseconds in containers), which would swamp a 10 ms
    injection, so short delays busy-wait instead."""
    if seconds <= 0:
        return
    if seconds >= 0.05:
        await asyncio.sleep(seconds)
        return
    target = time.monotonic() + seconds
    while time.monotonic() < target:
        pass


def stub_capabilities(stage: StageName) -> BackendCapabilities:
    extra: dict = {}
    if stage in ("embed", "image_features"):
        extra["embedding_dim"] = EMBED_DIM
    if stage == "recognize":
        extra["vocabulary_size"] = len(STUB_VOCABULARY)
    if stage == "synthesize":
        extra["supported_resolutions"] = ALLOWED_RESOLUTIONS
    return BackendCapabilities(
        protocol=PROTOCOL_VERSION, stage=stage, name=f"stub-{stage}", version="1.0", **extra
    )


ReqT = TypeVar("ReqT", bound=BaseModel)


def _json_route(
    app: FastAPI,
    path: str,
    request_model: Type[ReqT],
    handler: Callable[[ReqT], Awaitable[BaseModel]],
) -> None:
    """POST route on pydantic's fast JSON path (body validated by hand so
    the {code, message} error shape holds and the FPS-critical routes skip
    the framework's encoder layers)."""

    @app.post(path)
    async def route(request: Request) -> Response:
        try:
            req = request_model.model_validate_json(await request.body())
        except (ValidationError, ValueError) as e:
            return JSONResponse(status_code=422, content={"code": "MalformedRequest", "message": str(e)[:300]})
        result = await handler(req)
        return Response(content=result.model_dump_json(), media_type="application/json")


def build_stub_app(stage: StageName, latency: Optional[StubLatency] = None, fault: Optional[str] = None) -> FastAPI:
    """One protocol-conformant FastAPI app per stage.

    ``fault="short_batch"`` makes the synthesizer drop the last image, for
    client-validation fault-injection tests.
    """
    lat = latency or StubLatency()
    app = FastAPI(title=f"mugcat stub: {stage}", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _invalid(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"code": "MalformedRequest", "message": str(exc.errors()[:1])})

    @app.exception_handler(MugcatError)
    async def _domain(request: Request, exc: MugcatError):
        status = 413 if isinstance(exc, PayloadTooLarge) else 400
        return JSONResponse(status_code=status, content={"code": exc.code, "message": str(exc)})

    @app.get("/v1/capabilities")
    async def capabilities() -> Response:
        await _delay(lat.handshake_s)
        return Response(content=stub_capabilities(stage).model_dump_json(), media_type="application/json")

    async def recognize(req: RecognizeRequest) -> RecognizeResponse:
        await _delay(lat.per_call_s)
        preds = stub_recognize(req.clip, req.debug_label_hint)[: req.top_k]
        return RecognizeResponse(clip_id=req.clip.clip_id, predictions=preds)

    async def synthesize(req: SynthesisRequest) -> SynthesizeResponse:
        await _delay(lat.per_call_s + lat.synth_seconds_per_step * req.steps)
        images = stub_synthesize(req)
        if fault == "short_batch":
            images = images[:-1]
        return SynthesizeResponse(request_id=req.request_id, images=images)

    async def caption(req: CaptionRequest) -> CaptionResponse:
        await _delay(lat.per_call_s)
        return CaptionResponse(caption=stub_caption(req.image))

    async def embed(req: EmbedRequest) -> EmbedResponse:
        await _delay(lat.per_call_s)
        return EmbedResponse(embedding=stub_embed(req.text))

    async def image_features(req: ImageFeaturesRequest) -> ImageFeaturesResponse:
        await _delay(lat.per_call_s)
        return ImageFeaturesResponse(features=stub_image_features(req.image))

    handlers = {
        "recognize": (RecognizeRequest, recognize),
        "synthesize": (SynthesisRequest, synthesize),
        "caption": (CaptionRequest, caption),
        "embed": (EmbedRequest, embed),
        "image_features": (ImageFeaturesRequest, image_features),
    }
    if stage not in handlers:  # pragma: no cover
        raise ValueError(f"unknown stage {stage!r}")
    request_model, handler = handlers[stage]
    _json_route(app, f"/v1/{stage}", request_model, handler)
    return app


async def serve_stubs(port_base: int, host: str = "127.0.0.1", latency: Optional[StubLatency] = None) -> None:
    """Runs the five stubs on consecutive ports (stage order as documented)."""
    import uvicorn

    from .protocol import STAGE_NAMES

    servers = []
    for offset, stage in enumerate(STAGE_NAMES):
        config = uvicorn.Config(
            build_stub_app(stage, latency), host=host, port=port_base + offset, log_level="warning"
        )
        servers.append(uvicorn.Server(config))
    await asyncio.gather(*(s.serve() for s in servers))
