"""mugcat: real-time sign-to-visual communication engine.

Recognized sign-language keywords become K synthesized candidate images;
each is captioned, and the pair whose caption is semantically closest to
the keywords wins. Ships with deterministic stub backends, a benchmark
suite (FPS, FID, sampling-steps sweep), an HTTP/WS gateway, and a CLI.
"""

from .errors import MugcatError
from .model import (
    ALLOWED_RESOLUTIONS,
    CandidatePair,
    Caption,
    Clip,
    ConversationTurn,
    Embedding,
    Frame,
    GeneratedImage,
    GlossPrediction,
    KeywordSequence,
    PipelineConfig,
    SelectionResult,
    StageEndpoints,
    SynthesisRequest,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "ALLOWED_RESOLUTIONS",
    "CandidatePair",
    "Caption",
    "Clip",
    "ConversationTurn",
    "Embedding",
    "Frame",
    "GeneratedImage",
    "GlossPrediction",
    "KeywordSequence",
    "MugcatError",
    "PipelineConfig",
    "SelectionResult",
    "StageEndpoints",
    "SynthesisRequest",
    "validate_config",
    "__version__",
]
