"""Versioned HTTP wire protocol between the engine and the model stages.

Routes: GET /v1/capabilities, POST /v1/<stage>. Bodies are the canonical
JSON of the message types below; PNG payloads travel base64. Validation of
every response invariant is the client's duty — a backend can never hand
the pipeline a value that violates the domain model.
"""

import asyncio
import struct
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import httpx

# httpx's ASGI transport probes for trio via sniffio on every request; when
# sniffio is absent each probe repeats a failed filesystem import (~0.4 ms)
# that would pollute per-call latency accounting. Cache the absence.
try:
    import sniffio  # noqa: F401
except ImportError:
    sys.modules["sniffio"] = None
from pydantic import Field, ValidationError, model_validator

from .errors import (
    BackendError,
    DeadlineExceeded,
    MalformedResponse,
    StageMismatch,
    Unreachable,
    UnsupportedVersion,
)
from .model import (
    ALLOWED_RESOLUTIONS,
    Caption,
    Clip,
    Embedding,
    FrozenModel,
    GeneratedImage,
    GlossPrediction,
    StageName,
    SynthesisRequest,
)

PROTOCOL_VERSION = "1"
STAGE_NAMES: tuple[StageName, ...] = ("recognize", "synthesize", "caption", "embed", "image_features")
DEFAULT_DEADLINE_MS = 30_000.0


class BackendCapabilities(FrozenModel):
    protocol: str = PROTOCOL_VERSION
    stage: StageName
    name: str
    version: str
    embedding_dim: Optional[int] = Field(default=None, ge=1)
    input_resolution: Optional[tuple[int, int]] = None
    vocabulary_size: Optional[int] = Field(default=None, ge=1)
    supported_resolutions: Optional[tuple[tuple[int, int], ...]] = None

    @model_validator(mode="after")
    def _check_resolutions(self) -> "BackendCapabilities":
        if self.supported_resolutions is not None:
            bad = [r for r in self.supported_resolutions if tuple(r) not in ALLOWED_RESOLUTIONS]
            if bad:
                raise ValueError(f"unsupported resolutions declared: {bad}")
        return self


class RecognizeRequest(FrozenModel):
    clip: Clip
    top_k: int = Field(default=1, ge=1, le=10)
    debug_label_hint: Optional[str] = None


class RecognizeResponse(FrozenModel):
    clip_id: str
    predictions: tuple[GlossPrediction, ...] = Field(min_length=1, max_length=10)


class SynthesizeResponse(FrozenModel):
    request_id: str
    images: tuple[GeneratedImage, ...] = Field(min_length=1)


class CaptionRequest(FrozenModel):
    image: GeneratedImage


class CaptionResponse(FrozenModel):
    caption: Caption


class EmbedRequest(FrozenModel):
    text: str


class EmbedResponse(FrozenModel):
    embedding: Embedding


class ImageFeaturesRequest(FrozenModel):
    image: GeneratedImage


class ImageFeaturesResponse(FrozenModel):
    features: Embedding


class ErrorBody(FrozenModel):
    code: str
    message: str


def png_dimensions(png: bytes) -> tuple[int, int]:
    """Reads width/height from the IHDR chunk without a full decode."""
    if len(png) < 24 or not png.startswith(b"\x89PNG\r\n\x1a\n"):
        raise MalformedResponse("not a PNG stream")
    w, h = struct.unpack(">II", png[16:24])
    return w, h


@dataclass
class CallRecord:
    stage: str
    route: str
    ms: float


@dataclass
class StageClient:
    """HTTP client for one backend stage.

    ``stub://`` endpoints are served by the bundled stub app over an
    in-process ASGI transport — same wire format, no sockets.
    """

    stage: StageName
    base_url: str
    deadline_ms: float = DEFAULT_DEADLINE_MS
    transport: Optional[httpx.AsyncBaseTransport] = None
    capabilities: Optional[BackendCapabilities] = None
    calls: list[CallRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        url = self.base_url
        if url.startswith("stub://"):
            if self.transport is None:
                from .stubs import build_stub_app  # local import: stubs serve this protocol

                self.transport = httpx.ASGITransport(app=build_stub_app(self.stage))
            url = "http://stub.local"
        self._http = httpx.AsyncClient(base_url=url, transport=self.transport, timeout=None)

    async def aclose(self) -> None:
        await self._http.aclose()

    async def handshake(self, deadline_ms: Optional[float] = None) -> BackendCapabilities:
        """GET /v1/capabilities; caches the result."""
        budget = (deadline_ms or self.deadline_ms) / 1000.0
        start = time.monotonic()
        try:
            # wait_for covers in-process ASGI transports, which ignore httpx timeouts
            resp = await asyncio.wait_for(self._http.get("/v1/capabilities", timeout=budget), timeout=budget)
        except (httpx.TimeoutException, asyncio.TimeoutError):
            raise Unreachable(f"{self.stage} backend timed out during handshake", (time.monotonic() - start) * 1000)
        except httpx.TransportError as e:
            raise Unreachable(f"{self.stage} backend unreachable: {e}", (time.monotonic() - start) * 1000)
        self._raise_for_status(resp)
        try:
            caps = BackendCapabilities.model_validate(resp.json())
        except (ValueError, ValidationError) as e:
            raise MalformedResponse(f"bad capabilities payload: {e}")
        if caps.protocol != PROTOCOL_VERSION:
            raise UnsupportedVersion(f"backend speaks protocol {caps.protocol!r}, engine requires {PROTOCOL_VERSION!r}")
        if caps.stage != self.stage:
            raise StageMismatch(f"endpoint {self.base_url} is a {caps.stage} backend, expected {self.stage}")
        self.capabilities = caps
        return caps

    async def ensure_handshake(self) -> BackendCapabilities:
        return self.capabilities or await self.handshake()

    def _raise_for_status(self, resp: httpx.Response) -> None:
        if resp.status_code >= 400:
            try:
                body = ErrorBody.model_validate(resp.json())
                message = f"{body.code}: {body.message}"
            except Exception:
                message = resp.text[:200]
            raise BackendError(resp.status_code, message)

    async def _post(self, route: str, payload: dict, deadline_ms: Optional[float]) -> dict:
        budget = (deadline_ms or self.deadline_ms) / 1000.0
        start = time.monotonic()
        try:
            resp = await asyncio.wait_for(self._http.post(route, json=payload, timeout=budget), timeout=budget)
        except (httpx.TimeoutException, asyncio.TimeoutError):
            raise DeadlineExceeded(f"{self.stage} call exceeded deadline", (time.monotonic() - start) * 1000)
        except httpx.TransportError as e:
            raise Unreachable(f"{self.stage} backend unreachable: {e}", (time.monotonic() - start) * 1000)
        elapsed_ms = (time.monotonic() - start) * 1000
        self._raise_for_status(resp)
        self.calls.append(CallRecord(self.stage, route, elapsed_ms))
        try:
            return resp.json()
        except ValueError as e:
            raise MalformedResponse(f"response is not JSON: {e}")

    @staticmethod
    def _decode(cls, payload: dict):
        try:
            return cls.model_validate(payload)
        except (ValidationError, ValueError) as e:
            raise MalformedResponse(f"invalid {cls.__name__}: {e}")

    async def recognize(
        self,
        clip: Clip,
        *,
        top_k: int = 1,
        debug_label_hint: Optional[str] = None,
        deadline_ms: Optional[float] = None,
    ) -> tuple[GlossPrediction, ...]:
        await self.ensure_handshake()
        req = RecognizeRequest(clip=clip, top_k=top_k, debug_label_hint=debug_label_hint)
        out = self._decode(RecognizeResponse, await self._post("/v1/recognize", req.model_dump(mode="json"), deadline_ms))
        if out.clip_id != clip.clip_id:
            raise MalformedResponse(f"clip_id echo mismatch: {out.clip_id!r} != {clip.clip_id!r}")
        if len(out.predictions) > top_k:
            raise MalformedResponse(f"got {len(out.predictions)} predictions for top_k={top_k}")
        confs = [p.confidence for p in out.predictions]
        if confs != sorted(confs, reverse=True):
            raise MalformedResponse("predictions not sorted by confidence descending")
        return out.predictions

    async def synthesize(self, request: SynthesisRequest, *, deadline_ms: Optional[float] = None) -> tuple[GeneratedImage, ...]:
        await self.ensure_handshake()
        out = self._decode(SynthesizeResponse, await self._post("/v1/synthesize", request.model_dump(mode="json"), deadline_ms))
        if out.request_id != request.request_id:
            raise MalformedResponse(f"request_id echo mismatch: {out.request_id!r}")
        if len(out.images) != request.k:
            raise MalformedResponse(f"got {len(out.images)} images for k={request.k}")
        if sorted(img.ordinal for img in out.images) != list(range(request.k)):
            raise MalformedResponse("image ordinals must be distinct and contiguous from 0")
        for img in out.images:
            if img.request_ref != request.request_id:
                raise MalformedResponse(f"image {img.image_id} references {img.request_ref!r}")
            if png_dimensions(img.png_bytes) != (request.width, request.height):
                raise MalformedResponse(f"image {img.image_id} is not {request.width}x{request.height}")
        return tuple(sorted(out.images, key=lambda im: im.ordinal))

    async def caption(self, image: GeneratedImage, *, deadline_ms: Optional[float] = None) -> Caption:
        await self.ensure_handshake()
        req = CaptionRequest(image=image)
        out = self._decode(CaptionResponse, await self._post("/v1/caption", req.model_dump(mode="json"), deadline_ms))
        if out.caption.image_ref != image.image_id:
            raise MalformedResponse(f"caption references {out.caption.image_ref!r}, expected {image.image_id!r}")
        return out.caption

    async def embed(self, text: str, *, deadline_ms: Optional[float] = None) -> Embedding:
        caps = await self.ensure_handshake()
        out = self._decode(EmbedResponse, await self._post("/v1/embed", EmbedRequest(text=text).model_dump(mode="json"), deadline_ms))
        if caps.embedding_dim is not None and out.embedding.dim != caps.embedding_dim:
            raise MalformedResponse(f"embedding dim {out.embedding.dim} != declared {caps.embedding_dim}")
        return out.embedding

    async def image_features(self, image: GeneratedImage, *, deadline_ms: Optional[float] = None) -> Embedding:
        caps = await self.ensure_handshake()
        req = ImageFeaturesRequest(image=image)
        out = self._decode(ImageFeaturesResponse, await self._post("/v1/image_features", req.model_dump(mode="json"), deadline_ms))
        if caps.embedding_dim is not None and out.features.dim != caps.embedding_dim:
            raise MalformedResponse(f"feature dim {out.features.dim} != declared {caps.embedding_dim}")
        return out.features


@dataclass
class BackendSet:
    """One client per stage, built from the configured endpoints."""

    recognize: StageClient
    synthesize: StageClient
    caption: StageClient
    embed: StageClient
    image_features: StageClient

    @classmethod
    def from_endpoints(cls, endpoints, *, deadline_ms: float = DEFAULT_DEADLINE_MS, transports: Optional[dict] = None) -> "BackendSet":
        mapping = dict(endpoints.items()) if hasattr(endpoints, "items") else dict(endpoints)
        transports = transports or {}
        return cls(
            **{
                stage: StageClient(stage, mapping[stage], deadline_ms=deadline_ms, transport=transports.get(stage))
                for stage in STAGE_NAMES
            }
        )

    def clients(self) -> dict[str, StageClient]:
        return {stage: getattr(self, stage) for stage in STAGE_NAMES}

    async def handshake_all(self) -> dict[str, BackendCapabilities]:
        return {stage: await client.handshake() for stage, client in self.clients().items()}

    async def aclose(self) -> None:
        for client in self.clients().values():
            await client.aclose()
