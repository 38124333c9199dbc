"""Adapter configuration."""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .wire import ALLOWED_RESOLUTIONS, Stage


class AdapterConfig(BaseModel):
    """Declared capabilities must stay truthful to the loaded model; the
    server re-checks the declarable ones (embedding_dim against an actual
    model output, resolutions against the allowed set) at load time."""

    model_config = ConfigDict(extra="forbid")

    stage: Stage
    checkpoint: str
    name: str = "adapter"
    version: str = "0"
    device: str = "cpu"
    max_batch: int = Field(default=16, ge=1)
    embedding_dim: Optional[int] = Field(default=None, ge=1)
    input_resolution: Optional[tuple[int, int]] = None
    vocabulary_size: Optional[int] = Field(default=None, ge=1)
    supported_resolutions: Optional[tuple[tuple[int, int], ...]] = None

    def validated(self) -> "AdapterConfig":
        if self.supported_resolutions is not None:
            bad = [r for r in self.supported_resolutions if tuple(r) not in ALLOWED_RESOLUTIONS]
            if bad:
                raise ValueError(f"declared resolutions outside the protocol's seven: {bad}")
        return self
