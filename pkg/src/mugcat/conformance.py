"""Backend protocol conformance checks.

The same suite runs against the bundled stubs and against real model
adapters; only the debug_label_hint check differs in polarity (the stub
recognizer honors hints as a test affordance, real adapters must ignore
them). Run standalone:

    python -m mugcat.conformance http://host:port recognize --hint-mode ignored
"""

import asyncio
from dataclasses import dataclass
from typing import Literal, Optional

import httpx

from .errors import MugcatError
from .model import Clip, Frame, GeneratedImage, StageName, SynthesisRequest
from .protocol import StageClient
from .stubs import png_encode

HintMode = Literal["honored", "ignored", "skip"]


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _tiny_clip() -> Clip:
    frames = [
        Frame(index=i, timestamp_ms=i * 40.0, width=16, height=16, pixels=bytes(16 * 16 * 3))
        for i in range(2)
    ]
    return Clip(clip_id="conformance-c0000", source_id="conformance", fps=25.0, frames=frames)


def _tiny_image() -> GeneratedImage:
    return GeneratedImage(
        image_id="conformance-i0",
        request_ref="conformance",
        ordinal=0,
        png_bytes=png_encode(bytes(16 * 16 * 3), 16, 16),
    )


async def run_conformance(
    stage: StageName,
    base_url: str,
    *,
    hint_mode: HintMode = "ignored",
    transport: Optional[httpx.AsyncBaseTransport] = None,
) -> list[CheckResult]:
    client = StageClient(stage, base_url, transport=transport)
    results: list[CheckResult] = []

    async def check(name: str, coro) -> None:
        try:
            detail = await coro
            results.append(CheckResult(name, True, detail or ""))
        except MugcatError as e:
            results.append(CheckResult(name, False, f"{e.code}: {e}"))
        except Exception as e:  # noqa: BLE001 - report, don't crash the suite
            results.append(CheckResult(name, False, f"{type(e).__name__}: {e}"))

    async def handshake():
        caps = await client.handshake()
        if stage in ("embed", "image_features") and caps.embedding_dim is None:
            raise MugcatError(f"{stage} capabilities must declare embedding_dim")
        if stage == "synthesize" and not caps.supported_resolutions:
            raise MugcatError("synthesize capabilities must declare supported_resolutions")
        return f"{caps.name} v{caps.version}"

    async def happy_path():
        if stage == "recognize":
            preds = await client.recognize(_tiny_clip(), top_k=3)
            return f"top-1 {preds[0].label!r} @ {preds[0].confidence:.2f}"
        if stage == "synthesize":
            request = SynthesisRequest(
                request_id="conformance", prompt="conformance check", steps=1, width=384, height=384, k=2, seed=1
            )
            images = await client.synthesize(request)
            return f"{len(images)} images"
        if stage == "caption":
            caption = await client.caption(_tiny_image())
            return f"caption {caption.text!r}"
        if stage == "embed":
            embedding = await client.embed("conformance check")
            return f"dim {embedding.dim}"
        features = await client.image_features(_tiny_image())
        return f"dim {features.dim}"

    async def error_shape():
        resp = await client._http.post(f"/v1/{stage}", content=b'{"nonsense": tru', headers={"content-type": "application/json"})
        if not 400 <= resp.status_code < 500:
            raise MugcatError(f"malformed body answered {resp.status_code}, expected 4xx")
        body = resp.json()
        if "code" not in body or "message" not in body:
            raise MugcatError(f"error body missing code/message: {body}")
        return f"{resp.status_code} {body['code']}"

    async def hint_check():
        preds = await client.recognize(_tiny_clip(), debug_label_hint="xyzzy-sentinel")
        honored = preds[0].label == "xyzzy-sentinel"
        if hint_mode == "honored" and not honored:
            raise MugcatError(f"stub must honor hints, got {preds[0].label!r}")
        if hint_mode == "ignored" and honored:
            raise MugcatError("adapter must ignore debug_label_hint")
        return "honored" if honored else "ignored"

    try:
        await check("handshake", handshake())
        await check("happy_path", happy_path())
        await check("error_shape", error_shape())
        if stage == "recognize" and hint_mode != "skip":
            await check("debug_label_hint", hint_check())
    finally:
        await client.aclose()
    return results


def run_conformance_sync(stage: StageName, base_url: str, *, hint_mode: HintMode = "ignored") -> list[CheckResult]:
    return asyncio.run(run_conformance(stage, base_url, hint_mode=hint_mode))


def main(argv: Optional[list[str]] = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="run backend protocol conformance checks")
    parser.add_argument("base_url")
    parser.add_argument("stage", choices=["recognize", "synthesize", "caption", "embed", "image_features"])
    parser.add_argument("--hint-mode", choices=["honored", "ignored", "skip"], default="ignored")
    args = parser.parse_args(argv)
    results = run_conformance_sync(args.stage, args.base_url, hint_mode=args.hint_mode)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {args.stage}.{r.name}: {r.detail}")
        failed += not r.ok
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
