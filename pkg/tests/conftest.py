import asyncio
import sys
from pathlib import Path

import httpx
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent / "oracles"))

from mugcat.model import Clip, Frame, PipelineConfig
from mugcat.protocol import BackendSet, StageClient

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def go(coro):
    """Drive an async test body to completion."""
    return asyncio.run(coro)


def make_frames(n: int, width: int = 16, height: int = 16, fill: int = 0, fps: float = 25.0) -> list[Frame]:
    return [
        Frame(
            index=i,
            timestamp_ms=i * 1000.0 / fps,
            width=width,
            height=height,
            pixels=bytes([fill]) * (width * height * 3),
        )
        for i in range(n)
    ]


def make_clip(n: int = 16, width: int = 16, height: int = 16, fill: int = 0, clip_id: str = "test-c0000") -> Clip:
    return Clip(clip_id=clip_id, source_id="test", fps=25.0, frames=make_frames(n, width, height, fill))


def stub_backends(**latencies) -> BackendSet:
    """All-stub backend set; per-stage StubLatency via keyword (stage=StubLatency)."""
    from mugcat.stubs import build_stub_app

    transports = {
        stage: httpx.ASGITransport(app=build_stub_app(stage, latencies.get(stage)))
        for stage in ("recognize", "synthesize", "caption", "embed", "image_features")
    }
    endpoints = {stage: "stub://local" for stage in transports}
    return BackendSet.from_endpoints(endpoints, transports=transports)


def stub_client(stage: str, app=None, **kwargs) -> StageClient:
    if app is None:
        return StageClient(stage, "stub://local", **kwargs)
    return StageClient(stage, "stub://local", transport=httpx.ASGITransport(app=app), **kwargs)


@pytest.fixture
def fixture_config() -> PipelineConfig:
    """Matches tests/fixtures/book_read.conf."""
    return PipelineConfig(window_len=16, stride=16, k=2, width=384, height=384, seed=7)
