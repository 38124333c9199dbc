"""Benchmark and evaluation suite.

Covers top-k accuracy, the two FPS accounting modes (pure inference wall
time vs. total wall time including handshake and data loading), the Fréchet
distance between Gaussian fits of image-feature sets, the sampling-steps
sweep, and table rendering. Published headline numbers are carried as
recorded report fixtures and rendered, never recomputed: reproducing them
needs pretrained models and datacenter GPUs.
"""

import csv
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import Field

from .errors import (
    BackendError,
    DimMismatch,
    EigenFailure,
    LengthMismatch,
    MugcatError,
    TooFewSamples,
)
from .ingest import load_clip_container
from .model import Clip, FrozenModel, GeneratedImage, GlossPrediction, SynthesisRequest
from .protocol import StageClient

ReportFormat = Literal["text", "json", "csv"]


# ---------------------------------------------------------------------------
# accuracy


def topk_accuracy(
    predictions: Sequence[Sequence[Union[str, GlossPrediction]]],
    labels: Sequence[str],
    k: int = 1,
) -> float:
    """Fraction of samples whose true label is in the first k predictions."""
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} prediction lists vs {len(labels)} labels")
    if not labels:
        raise LengthMismatch("need at least one sample")
    hits = 0
    for ranked, label in zip(predictions, labels):
        if not ranked:
            raise LengthMismatch("empty ranked list")
        names = [p.label if isinstance(p, GlossPrediction) else p for p in ranked]
        hits += label in names[:k]
    return hits / len(labels)


# ---------------------------------------------------------------------------
# Gaussian statistics and the Fréchet distance


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.cov, dtype=np.float64)
        cov = np.atleast_2d(cov)
        if cov.shape != (self.dim, self.dim):
            raise DimMismatch(f"cov shape {cov.shape} does not match mean dim {self.dim}")
        self.cov = (cov + cov.T) / 2.0
        if self.n < 2:
            raise TooFewSamples(f"need n >= 2 samples, got {self.n}")
        eigs = np.linalg.eigvalsh(self.cov)
        floor = -1e-8 * max(1.0, float(eigs[-1]))
        if eigs[0] < floor:
            raise EigenFailure(f"covariance has eigenvalue {eigs[0]:.3e} below tolerance")

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def gaussian_stats(features: np.ndarray) -> GaussianStats:
    """Column mean and unbiased (n-1) sample covariance, symmetrized."""
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise DimMismatch(f"expected an n x d matrix, got shape {arr.shape}")
    n, d = arr.shape
    if n < 2:
        raise TooFewSamples(f"need n >= 2 samples, got {n}")
    mean = arr.mean(axis=0)
    cov = np.atleast_2d(np.cov(arr, rowvar=False, ddof=1))
    return GaussianStats(mean=mean, cov=cov, n=n)


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    try:
        eigvals, eigvecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(f"eigendecomposition failed: {e}")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def fid(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^1/2).

    The cross term is computed from the symmetric product
    S = S_a^1/2 S_b S_a^1/2 whose eigenvalues are those of S_a S_b;
    eigenvalues are clamped at zero before the square root so nearly
    rank-deficient feature sets (n < d) stay finite.
    """
    if a.dim != b.dim:
        raise DimMismatch(f"feature dims differ: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    a_half = _sqrt_psd(a.cov)
    inner = a_half @ b.cov @ a_half
    inner = (inner + inner.T) / 2.0
    try:
        eigvals = np.linalg.eigvalsh(inner)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(f"eigendecomposition failed: {e}")
    trace_sqrt = 2.0 * float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())
    value = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - trace_sqrt
    return max(0.0, value)


# ---------------------------------------------------------------------------
# FPS harness


class FpsReport(FrozenModel):
    mode: Literal["infer_only", "infer_and_load"]
    frames: int = Field(ge=1)
    elapsed_s: float = Field(gt=0)
    fps: float


class FpsRun(FrozenModel):
    """Both accounting modes measured on the same run."""

    clips: int
    infer_only: FpsReport
    infer_and_load: FpsReport


async def measure_fps_run(
    sources: Sequence[Union[str, Path, Clip]],
    recognizer: StageClient,
) -> FpsRun:
    """One pass over the clips, one call in flight at a time.

    infer_only counts per-call inference wall time; infer_and_load counts
    everything from before the handshake to the last response, including
    clip loading and decoding.
    """
    if not sources:
        raise LengthMismatch("need at least one clip")
    total_start = time.monotonic()
    await recognizer.handshake()
    frames = 0
    infer_s = 0.0
    for source in sources:
        clip = source if isinstance(source, Clip) else load_clip_container(source)
        call_start = time.monotonic()
        try:
            await recognizer.recognize(clip)
        except MugcatError:
            raise  # partial counts are discarded with the run
        infer_s += time.monotonic() - call_start
        frames += len(clip.frames)
    total_s = time.monotonic() - total_start
    return FpsRun(
        clips=len(sources),
        infer_only=FpsReport(mode="infer_only", frames=frames, elapsed_s=infer_s, fps=frames / infer_s),
        infer_and_load=FpsReport(mode="infer_and_load", frames=frames, elapsed_s=total_s, fps=frames / total_s),
    )


async def measure_fps(
    sources: Sequence[Union[str, Path, Clip]],
    recognizer: StageClient,
    mode: Literal["infer_only", "infer_and_load"],
) -> FpsReport:
    run = await measure_fps_run(sources, recognizer)
    return run.infer_only if mode == "infer_only" else run.infer_and_load


# ---------------------------------------------------------------------------
# recognition efficiency table (accuracy + FPS per method)


class EfficiencyRow(FrozenModel):
    method: str
    pretraining: Optional[str] = None
    accuracy_pct: Optional[float] = None
    fps_infer_only: Optional[float] = None
    fps_infer_and_load: Optional[float] = None


class EfficiencyReport(FrozenModel):
    dataset: str
    rows: tuple[EfficiencyRow, ...]


# ---------------------------------------------------------------------------
# sampling-steps sweep


class SweepRow(FrozenModel):
    steps: int
    fid: Optional[float] = None
    seconds_per_batch: Optional[float] = None
    error: Optional[str] = None


class SweepReport(FrozenModel):
    width: int
    height: int
    k: int
    prompt: str
    seed: int
    reference_steps: int
    rows: tuple[SweepRow, ...]


async def run_sweep(
    steps_list: Sequence[int],
    resolution: tuple[int, int],
    k: int,
    prompt: str,
    seed: int,
    synthesizer: StageClient,
    features: StageClient,
) -> SweepReport:
    """Times one synthesis batch per steps value and scores its FID against
    the largest steps value's batch (the reference distribution)."""
    if not steps_list:
        raise LengthMismatch("steps_list must be non-empty")
    order = sorted(set(int(s) for s in steps_list), reverse=True)
    reference_steps = order[0]
    width, height = resolution

    async def one_batch(steps: int) -> tuple[float, list[GeneratedImage]]:
        request = SynthesisRequest(
            request_id=f"sweep-{steps}",
            prompt=prompt,
            steps=steps,
            width=width,
            height=height,
            k=k,
            seed=seed,
        )
        start = time.monotonic()
        images = await synthesizer.synthesize(request)
        return time.monotonic() - start, list(images)

    async def batch_stats(images: list[GeneratedImage]) -> GaussianStats:
        feats = [await features.image_features(img) for img in images]
        return gaussian_stats(np.array([f.vector for f in feats]))

    rows: list[SweepRow] = []
    reference: Optional[GaussianStats] = None
    for steps in order:
        try:
            seconds, images = await one_batch(steps)
            stats = await batch_stats(images)
        except (BackendError, MugcatError) as e:
            rows.append(SweepRow(steps=steps, error=str(e)))
            continue
        if steps == reference_steps:
            reference = stats
            rows.append(SweepRow(steps=steps, fid=0.0, seconds_per_batch=seconds))
        elif reference is None:
            rows.append(SweepRow(steps=steps, seconds_per_batch=seconds, error="reference batch unavailable"))
        else:
            rows.append(SweepRow(steps=steps, fid=fid(stats, reference), seconds_per_batch=seconds))
    return SweepReport(
        width=width,
        height=height,
        k=k,
        prompt=prompt,
        seed=seed,
        reference_steps=reference_steps,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# rendering

Report = Union[FpsReport, FpsRun, EfficiencyReport, SweepReport]


def _fmt_fid(value: Optional[float]) -> str:
    if value is None:
        return ""
    return "0" if value == 0 else f"{value:.2f}"


def _fmt_fps(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.0f}"


def _text_table(header: list[str], body: list[list[str]]) -> str:
    rows = [header] + body
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = [" | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _rows_for(report: Report) -> tuple[list[str], list[list[str]]]:
    if isinstance(report, SweepReport):
        header = ["Sampling steps", "FID Score", "Seconds per Batch"]
        body = []
        for row in report.rows:
            if row.error and row.seconds_per_batch is None:
                body.append([str(row.steps), f"failed: {row.error}", ""])
            else:
                secs = "" if row.seconds_per_batch is None else f"{row.seconds_per_batch:.2f}"
                body.append([str(row.steps), _fmt_fid(row.fid), secs])
        return header, body
    if isinstance(report, EfficiencyReport):
        header = ["Method", "Pretraining Dataset", "Accuracy (%)", "FPS (infer only)", "FPS (infer & load data)"]
        body = [
            [
                row.method,
                row.pretraining or "",
                "" if row.accuracy_pct is None else f"{row.accuracy_pct:.1f}",
                _fmt_fps(row.fps_infer_only),
                _fmt_fps(row.fps_infer_and_load),
            ]
            for row in report.rows
        ]
        return header, body
    if isinstance(report, FpsRun):
        header = ["Mode", "Frames", "Elapsed (s)", "FPS"]
        body = [
            [r.mode, str(r.frames), f"{r.elapsed_s:.3f}", f"{r.fps:.1f}"]
            for r in (report.infer_only, report.infer_and_load)
        ]
        return header, body
    if isinstance(report, FpsReport):
        header = ["Mode", "Frames", "Elapsed (s)", "FPS"]
        return header, [[report.mode, str(report.frames), f"{report.elapsed_s:.3f}", f"{report.fps:.1f}"]]
    raise TypeError(f"cannot render {type(report).__name__}")


def render_report(report: Report, format: ReportFormat = "text") -> bytes:
    if format == "json":
        return json.dumps(report.model_dump(mode="json"), separators=(",", ":"), ensure_ascii=False).encode() + b"\n"
    header, body = _rows_for(report)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue().encode()
    return _text_table(header, body).encode()
