"""Shared value types and validation.

All types are immutable after construction and enforce their invariants at
construction time; an invalid value cannot be built through the public
surface. Canonical JSON field order is the declaration order below — the
gateway, the backend protocol, and the golden-file tests all rely on it.
"""

import base64
import binascii
from typing import Annotated, Literal, Mapping, Optional

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    model_validator,
)

from .errors import InvalidResolution, InvalidThreshold, InvalidWindow

# The seven synthesis resolutions, in decreasing execution-cost order.
ALLOWED_RESOLUTIONS: tuple[tuple[int, int], ...] = (
    (512, 512),
    (512, 448),
    (448, 448),
    (512, 384),
    (448, 384),
    (512, 320),
    (384, 384),
)

STAGES: tuple[str, ...] = ("recognize", "synthesize", "caption", "embed", "select")

StageName = Literal["recognize", "synthesize", "caption", "embed", "image_features"]


def _b64_decode(v: object) -> object:
    if isinstance(v, str):
        try:
            return base64.b64decode(v.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError) as e:
            raise ValueError(f"invalid base64: {e}")
    return v


B64Bytes = Annotated[
    bytes,
    BeforeValidator(_b64_decode),
    PlainSerializer(lambda b: base64.b64encode(b).decode("ascii"), return_type=str, when_used="json"),
]


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Frame(FrozenModel):
    index: int = Field(ge=0)
    timestamp_ms: float
    width: int = Field(ge=16)
    height: int = Field(ge=16)
    pixels: B64Bytes

    @model_validator(mode="after")
    def _check(self) -> "Frame":
        expect = self.width * self.height * 3
        if len(self.pixels) != expect:
            raise ValueError(f"pixel byte count {len(self.pixels)} != {self.width}x{self.height}x3 = {expect}")
        return self


class Clip(FrozenModel):
    clip_id: str = Field(min_length=1)
    source_id: str = Field(min_length=1)
    fps: float = Field(gt=0)
    frames: tuple[Frame, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _check(self) -> "Clip":
        w, h = self.frames[0].width, self.frames[0].height
        for f in self.frames:
            if (f.width, f.height) != (w, h):
                raise ValueError("all frames must share width/height")
        for a, b in zip(self.frames, self.frames[1:]):
            if b.index <= a.index:
                raise ValueError("frame indices must be strictly increasing")
            if b.timestamp_ms < a.timestamp_ms:
                raise ValueError("timestamps must be non-decreasing")
        return self

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


class GlossPrediction(FrozenModel):
    label: str = Field(min_length=1)
    confidence: float = Field(ge=0.0, le=1.0)


class KeywordSequence(FrozenModel):
    keywords: tuple[str, ...]
    accepted_at: tuple[str, ...]

    @model_validator(mode="after")
    def _check(self) -> "KeywordSequence":
        if any(not k for k in self.keywords):
            raise ValueError("empty keyword label")
        if len(self.accepted_at) != len(self.keywords):
            raise ValueError("accepted_at must carry one clip id per keyword")
        return self


class SynthesisRequest(FrozenModel):
    request_id: str = Field(min_length=1)
    prompt: str = Field(min_length=1)
    steps: int = 20
    width: int = 512
    height: int = 512
    k: int = Field(default=8, ge=1)
    seed: int = Field(default=0, ge=0, lt=1 << 64)

    @model_validator(mode="after")
    def _check(self) -> "SynthesisRequest":
        if (self.width, self.height) not in ALLOWED_RESOLUTIONS:
            raise InvalidResolution(f"{self.width}x{self.height} is not one of the seven supported resolutions")
        if not 1 <= self.steps <= 200:
            raise ValueError(f"steps must be in [1, 200], got {self.steps}")
        return self


class GeneratedImage(FrozenModel):
    image_id: str = Field(min_length=1)
    request_ref: str = Field(min_length=1)
    ordinal: int = Field(ge=0)
    png_bytes: B64Bytes

    @model_validator(mode="after")
    def _check(self) -> "GeneratedImage":
        if not self.png_bytes.startswith(b"\x89PNG\r\n\x1a\n"):
            raise ValueError("png_bytes is not a PNG stream")
        return self


class Caption(FrozenModel):
    image_ref: str = Field(min_length=1)
    text: str = Field(min_length=1)


class Embedding(FrozenModel):
    vector: tuple[float, ...] = Field(min_length=1)
    dim: int = Field(ge=1)

    @model_validator(mode="after")
    def _check(self) -> "Embedding":
        if self.dim != len(self.vector):
            raise ValueError(f"dim {self.dim} != vector length {len(self.vector)}")
        return self


class SelectionResult(FrozenModel):
    selected_index: int = Field(ge=0)
    selected_image: str = Field(min_length=1)
    selected_caption: str = Field(min_length=1)
    scores: tuple[float, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _check(self) -> "SelectionResult":
        if self.selected_index >= len(self.scores):
            raise ValueError("selected_index out of range")
        if any(not -1.0 <= s <= 1.0 for s in self.scores):
            raise ValueError("scores must lie in [-1, 1]")
        best = max(self.scores)
        if self.scores[self.selected_index] != best:
            raise ValueError("selected score must equal max(scores)")
        if self.selected_index != min(i for i, s in enumerate(self.scores) if s == best):
            raise ValueError("selected_index must be the smallest index attaining the max")
        return self


class CandidatePair(FrozenModel):
    image: GeneratedImage
    caption: Caption
    caption_embedding: Optional[Embedding] = None
    score: Optional[float] = Field(default=None, ge=-1.0, le=1.0)

    @model_validator(mode="after")
    def _check(self) -> "CandidatePair":
        if self.caption.image_ref != self.image.image_id:
            raise ValueError("caption.image_ref must reference the paired image")
        return self


class ConversationTurn(FrozenModel):
    turn_id: str = Field(min_length=1)
    keywords: KeywordSequence
    query_text: str = Field(min_length=1)
    candidates: tuple[CandidatePair, ...] = Field(min_length=1)
    selection: SelectionResult
    stage_timings_ms: dict[str, float]
    override: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "ConversationTurn":
        if set(self.stage_timings_ms) != set(STAGES):
            raise ValueError(f"stage_timings_ms must have exactly the keys {STAGES}")
        if any(v < 0 for v in self.stage_timings_ms.values()):
            raise ValueError("timings must be non-negative")
        # canonical key order, independent of construction order
        object.__setattr__(self, "stage_timings_ms", {s: self.stage_timings_ms[s] for s in STAGES})
        if len(self.selection.scores) != len(self.candidates):
            raise ValueError("selection.scores length must equal candidate count")
        if self.override is not None and self.override >= len(self.candidates):
            raise ValueError("override index out of range")
        return self


class StageEndpoints(FrozenModel):
    recognize: str = "stub://local"
    synthesize: str = "stub://local"
    caption: str = "stub://local"
    embed: str = "stub://local"
    image_features: str = "stub://local"

    def items(self):
        return self.model_dump().items()

    def all_stub(self) -> bool:
        return all(url.startswith("stub://") for _, url in self.items())


class PipelineConfig(FrozenModel):
    window_len: int = 64
    stride: int = 32
    confidence_threshold: float = 0.5
    k: int = 8
    steps: int = 20
    width: int = 512
    height: int = 512
    seed: int = Field(default=0, ge=0, lt=1 << 64)
    caption_concurrency: Optional[int] = Field(default=None, ge=1)
    idle_gap_windows: int = Field(default=3, ge=1)
    turn_timeout_s: Optional[float] = Field(default=None, gt=0)
    endpoints: StageEndpoints = StageEndpoints()

    @model_validator(mode="after")
    def _check(self) -> "PipelineConfig":
        if self.window_len < 1 or self.stride < 1 or self.stride > self.window_len:
            raise InvalidWindow(f"need 1 <= stride <= window_len, got stride={self.stride} window_len={self.window_len}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise InvalidThreshold(f"confidence threshold must be in [0, 1], got {self.confidence_threshold}")
        if (self.width, self.height) not in ALLOWED_RESOLUTIONS:
            raise InvalidResolution(f"{self.width}x{self.height} is not one of the seven supported resolutions")
        if not 1 <= self.steps <= 200:
            raise ValueError(f"steps must be in [1, 200], got {self.steps}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        return self

    @property
    def effective_caption_concurrency(self) -> int:
        return self.caption_concurrency if self.caption_concurrency is not None else self.k


def validate_config(values: Mapping[str, object] | PipelineConfig) -> PipelineConfig:
    """Builds a PipelineConfig from a flat mapping, filling defaults.

    Accepts dotted ``endpoint.<stage>`` keys as produced by the config-file
    parser. Raises InvalidResolution / InvalidWindow / InvalidThreshold on
    the corresponding invariant violations.
    """
    if isinstance(values, PipelineConfig):
        return values
    plain: dict[str, object] = {}
    endpoints: dict[str, object] = {}
    for key, value in values.items():
        if key.startswith("endpoint."):
            endpoints[key.split(".", 1)[1]] = value
        elif key == "endpoints":
            merged = value.model_dump() if isinstance(value, StageEndpoints) else dict(value)  # type: ignore[arg-type]
            endpoints.update(merged)
        else:
            plain[key] = value
    if endpoints:
        plain["endpoints"] = StageEndpoints.model_validate(endpoints)
    return PipelineConfig.model_validate(plain)
