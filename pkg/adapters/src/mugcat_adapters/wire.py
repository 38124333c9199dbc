"""Wire types for protocol v1, as documented by the engine.

Deliberately re-declared here: adapters couple to the engine only through
its HTTP surface, never through its internals.
"""

import base64
import binascii
from typing import Annotated, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer

PROTOCOL_VERSION = "1"

Stage = Literal["recognize", "synthesize", "caption", "embed", "image_features"]

ALLOWED_RESOLUTIONS: tuple[tuple[int, int], ...] = (
    (512, 512),
    (512, 448),
    (448, 448),
    (512, 384),
    (448, 384),
    (512, 320),
    (384, 384),
)


def _b64(v: object) -> object:
    if isinstance(v, str):
        try:
            return base64.b64decode(v.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError) as e:
            raise ValueError(f"invalid base64: {e}")
    return v


B64Bytes = Annotated[
    bytes,
    BeforeValidator(_b64),
    PlainSerializer(lambda b: base64.b64encode(b).decode("ascii"), return_type=str, when_used="json"),
]


class WireModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Capabilities(WireModel):
    protocol: str = PROTOCOL_VERSION
    stage: Stage
    name: str
    version: str
    embedding_dim: Optional[int] = None
    input_resolution: Optional[tuple[int, int]] = None
    vocabulary_size: Optional[int] = None
    supported_resolutions: Optional[tuple[tuple[int, int], ...]] = None


class WireFrame(WireModel):
    index: int
    timestamp_ms: float
    width: int
    height: int
    pixels: B64Bytes


class WireClip(WireModel):
    clip_id: str
    source_id: str
    fps: float
    frames: tuple[WireFrame, ...] = Field(min_length=1)


class Prediction(WireModel):
    label: str
    confidence: float = Field(ge=0.0, le=1.0)


class RecognizeRequest(WireModel):
    clip: WireClip
    top_k: int = Field(default=1, ge=1, le=10)
    debug_label_hint: Optional[str] = None  # adapters must ignore this


class RecognizeResponse(WireModel):
    clip_id: str
    predictions: tuple[Prediction, ...]


class SynthesizeRequest(WireModel):
    request_id: str
    prompt: str
    steps: int = 20
    width: int = 512
    height: int = 512
    k: int = Field(default=8, ge=1)
    seed: int = 0


class WireImage(WireModel):
    image_id: str
    request_ref: str
    ordinal: int
    png_bytes: B64Bytes


class SynthesizeResponse(WireModel):
    request_id: str
    images: tuple[WireImage, ...]


class CaptionRequest(WireModel):
    image: WireImage


class WireCaption(WireModel):
    image_ref: str
    text: str


class CaptionResponse(WireModel):
    caption: WireCaption


class EmbedRequest(WireModel):
    text: str


class WireEmbedding(WireModel):
    vector: tuple[float, ...]
    dim: int


class EmbedResponse(WireModel):
    embedding: WireEmbedding


class ImageFeaturesRequest(WireModel):
    image: WireImage


class ImageFeaturesResponse(WireModel):
    features: WireEmbedding
