"""Command-line interface.

Subcommands: serve, run, stubs up, bench fps|sweep|fid|accuracy.
Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

import asyncio
import json
import socket
import sys
from pathlib import Path
from typing import Optional

import click

from . import codec
from .bench import measure_fps_run, render_report, run_sweep, topk_accuracy
from .config import resolve_config
from .errors import BindError, MugcatError
from .model import Frame, PipelineConfig, validate_config
from .pipeline import (
    Flush,
    FrozenClock,
    KeywordAccepted,
    MonotonicClock,
    StreamError,
    TurnCompleted,
    TurnFailed,
    TurnSkipped,
    run_stream,
)
from .protocol import BackendSet, StageClient

DEFAULT_SWEEP_STEPS = "15,20,25,30,35,40,45,50"
DEFAULT_SWEEP_PROMPT = "A beautiful flower garden on a sunny day with a valley background"


@click.group()
def cli() -> None:
    """mugcat: sign-to-visual communication engine."""


def _load_config(config_path: Optional[str], **overrides) -> PipelineConfig:
    config = resolve_config(config_path)
    updates = {k: v for k, v in overrides.items() if v is not None}
    if updates:
        merged = config.model_dump()
        merged.update(updates)
        config = validate_config(merged)
    return config


def _write_output(data: bytes, out: Optional[str]) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()


# ---------------------------------------------------------------------------
# serve


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="pipeline config file")
@click.option("--lazy", is_flag=True, help="do not require backends at startup")
@click.option("--transcript-dir", type=click.Path(), default=None, help="dump turn JSON transcripts here")
@click.option("--reports-dir", type=click.Path(), default=None, help="directory listed by GET /v1/bench/reports")
def serve(host: str, port: int, config_path: Optional[str], lazy: bool, transcript_dir: Optional[str], reports_dir: Optional[str]) -> None:
    """Run the gateway service."""
    import uvicorn

    from .gateway import create_app

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as e:
        raise BindError(f"cannot bind {host}:{port}: {e}")
    finally:
        probe.close()

    app = create_app(
        _load_config(config_path),
        lazy=lazy,
        transcript_dir=Path(transcript_dir) if transcript_dir else None,
        reports_dir=Path(reports_dir) if reports_dir else None,
    )
    uvicorn.run(app, host=host, port=port, log_level="info")


# ---------------------------------------------------------------------------
# run (batch)


async def _run_batch(
    inputs: tuple[str, ...],
    flush_per_file: bool,
    config: PipelineConfig,
    clock_mode: str,
    as_json: bool,
) -> int:
    from .ingest import load_clip_container

    clips = [load_clip_container(p) for p in inputs]
    source_id = Path(inputs[0]).stem
    fps = clips[0].fps

    if clock_mode == "auto":
        clock = FrozenClock() if config.endpoints.all_stub() else MonotonicClock()
    else:
        clock = FrozenClock() if clock_mode == "frozen" else MonotonicClock()

    async def items():
        counter = 0
        for clip in clips:
            for frame in clip.frames:
                yield Frame(
                    index=counter,
                    timestamp_ms=counter * 1000.0 / fps,
                    width=frame.width,
                    height=frame.height,
                    pixels=frame.pixels,
                )
                counter += 1
            if flush_per_file:
                yield Flush()
        if not flush_per_file:
            yield Flush()

    backends = BackendSet.from_endpoints(config.endpoints)
    status = 0
    try:
        async for event in run_stream(
            items(), config, backends, source_id=source_id, source_fps=fps, clock=clock
        ):
            if isinstance(event, KeywordAccepted):
                if not as_json:
                    click.echo(f"keyword accepted: {event.keyword} ({event.clip_id})")
            elif isinstance(event, TurnCompleted):
                if as_json:
                    sys.stdout.buffer.write(codec.encode(event.turn) + b"\n")
                    sys.stdout.buffer.flush()
                else:
                    turn = event.turn
                    sel = turn.selection
                    click.echo(
                        f"turn {turn.turn_id}: keywords={' '.join(turn.keywords.keywords)!r} "
                        f"selected #{sel.selected_index} {sel.selected_caption!r} "
                        f"(score {sel.scores[sel.selected_index]:.4f})"
                    )
            elif isinstance(event, TurnSkipped):
                click.echo(f"no-op turn: {event.reason}", err=True)
            elif isinstance(event, TurnFailed):
                click.echo(f"turn failed at {event.stage}: {event.message}", err=True)
                status = 1
            elif isinstance(event, StreamError):
                click.echo(f"stream error: {event.message}", err=True)
                status = 1
    finally:
        await backends.aclose()
    return status


@cli.command()
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(exists=True), help=".mclip file or frame directory")
@click.option("--flush-per-file", is_flag=True, help="end a turn after every input file")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True, help="emit canonical ConversationTurn JSON per turn")
@click.option("--seed", type=int, default=None)
@click.option("--k", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--clock", "clock_mode", type=click.Choice(["auto", "real", "frozen"]), default="auto", show_default=True, help="auto freezes timings for all-stub runs")
def run(inputs, flush_per_file, config_path, as_json, seed, k, steps, clock_mode) -> None:
    """Batch-run clips through the pipeline."""
    config = _load_config(config_path, seed=seed, k=k, steps=steps)
    status = asyncio.run(_run_batch(inputs, flush_per_file, config, clock_mode, as_json))
    if status:
        raise SystemExit(status)


# ---------------------------------------------------------------------------
# stubs


@cli.group()
def stubs() -> None:
    """Manage the bundled deterministic stage backends."""


@stubs.command()
@click.option("--port-base", default=9100, show_default=True, help="five consecutive ports, stage order: recognize, synthesize, caption, embed, image_features")
@click.option("--host", default="127.0.0.1", show_default=True)
def up(port_base: int, host: str) -> None:
    """Serve all five stub backends."""
    from .stubs import serve_stubs

    try:
        asyncio.run(serve_stubs(port_base, host))
    except KeyboardInterrupt:
        pass


# ---------------------------------------------------------------------------
# bench


@cli.group()
def bench() -> None:
    """Benchmarks: FPS, hyperparameter sweep, FID, accuracy."""


def _collect_clips(paths: tuple[str, ...]) -> list[Path]:
    out: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.mclip")))
        else:
            out.append(path)
    if not out:
        raise click.UsageError("no clips found")
    return out


@bench.command()
@click.option("--clips", "clip_paths", multiple=True, required=True, type=click.Path(exists=True), help=".mclip file or directory of them")
@click.option("--endpoint", default="stub://local", show_default=True, help="recognizer endpoint")
@click.option("--mode", type=click.Choice(["both", "infer_only", "infer_and_load"]), default="both", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def fps(clip_paths, endpoint, mode, fmt, out) -> None:
    """Measure recognizer throughput in both accounting modes."""
    clips = _collect_clips(clip_paths)

    async def go():
        client = StageClient("recognize", endpoint)
        try:
            return await measure_fps_run(clips, client)
        finally:
            await client.aclose()

    run_report = asyncio.run(go())
    report = run_report if mode == "both" else getattr(run_report, mode)
    _write_output(render_report(report, fmt), out)


@bench.command()
@click.option("--steps", default=DEFAULT_SWEEP_STEPS, show_default=True, help="comma-separated; the largest is the reference distribution")
@click.option("--width", default=512, show_default=True)
@click.option("--height", default=512, show_default=True)
@click.option("--k", default=8, show_default=True, help="images per batch")
@click.option("--prompt", default=DEFAULT_SWEEP_PROMPT, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--synth-endpoint", default="stub://local", show_default=True)
@click.option("--features-endpoint", default="stub://local", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def sweep(steps, width, height, k, prompt, seed, synth_endpoint, features_endpoint, fmt, out) -> None:
    """Sampling-steps sweep: FID and seconds-per-batch per steps value."""
    try:
        steps_list = [int(s) for s in steps.split(",") if s.strip()]
    except ValueError:
        raise click.UsageError(f"--steps must be comma-separated integers, got {steps!r}")

    async def go():
        synthesizer = StageClient("synthesize", synth_endpoint)
        features = StageClient("image_features", features_endpoint)
        try:
            return await run_sweep(steps_list, (width, height), k, prompt, seed, synthesizer, features)
        finally:
            await synthesizer.aclose()
            await features.aclose()

    _write_output(render_report(asyncio.run(go()), fmt), out)


def _dir_features(directory: Path, client: StageClient):
    import numpy as np

    from .model import GeneratedImage

    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if len(paths) < 2:
        raise click.UsageError(f"{directory} needs at least 2 .png images")

    async def go():
        feats = []
        for i, p in enumerate(paths):
            img = GeneratedImage(image_id=p.name, request_ref=directory.name, ordinal=i, png_bytes=p.read_bytes())
            feats.append((await client.image_features(img)).vector)
        return np.array(feats)

    return go()


@bench.command()
@click.option("--real", "real_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--generated", "generated_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--features-endpoint", default="stub://local", show_default=True)
@click.option("--json", "as_json", is_flag=True)
def fid(real_dir, generated_dir, features_endpoint, as_json) -> None:
    """FID between two image directories (features from the backend stage)."""
    from .bench import fid as fid_metric
    from .bench import gaussian_stats

    async def go():
        client = StageClient("image_features", features_endpoint)
        try:
            real = gaussian_stats(await _dir_features(Path(real_dir), client))
            generated = gaussian_stats(await _dir_features(Path(generated_dir), client))
        finally:
            await client.aclose()
        return fid_metric(generated, real)

    value = asyncio.run(go())
    click.echo(json.dumps({"fid": value}) if as_json else str(value))


@bench.command()
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True), help="JSON: list of ranked label lists")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True), help="JSON: list of true labels")
@click.option("--k", default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def accuracy(predictions_path, labels_path, k, as_json) -> None:
    """Top-k accuracy of recorded predictions against labels."""
    predictions = json.loads(Path(predictions_path).read_text())
    labels = json.loads(Path(labels_path).read_text())
    value = topk_accuracy(predictions, labels, k)
    click.echo(json.dumps({"k": k, "accuracy": value}) if as_json else str(value))


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except MugcatError as e:
        print(f"error: {e.code}: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
