"""Frame sources: clip containers, sliding-window segmentation, model resize.

The ``.mclip`` container is the engine's interchange format for raw RGB
clips: magic "MCLP" | version u8=1 | width u16-BE | height u16-BE |
fps u16-BE | frame_count u32-BE | concatenated RGB8 frames. A frame
directory (meta.json + frame_%05d.png) is accepted as an equivalent source.
"""

import io
import json
import struct
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

import numpy as np
from PIL import Image
from pydantic import Field

from .errors import BadMagic, DimensionMismatch, InvalidWindow, TruncatedPayload
from .model import Clip, Frame, FrozenModel

MCLIP_MAGIC = b"MCLP"
_HEADER = struct.Struct(">4sBHHHI")


class FrameSource(FrozenModel):
    source_id: str = Field(min_length=1)
    mode: Literal["file", "live"]
    fps: float = Field(gt=0)


def _frame(index: int, fps: float, width: int, height: int, pixels: bytes) -> Frame:
    return Frame(
        index=index,
        timestamp_ms=index * 1000.0 / fps,
        width=width,
        height=height,
        pixels=pixels,
    )


def write_clip_container(path: str | Path, frames: Sequence[Frame], fps: int) -> None:
    path = Path(path)
    w, h = frames[0].width, frames[0].height
    header = _HEADER.pack(MCLIP_MAGIC, 1, w, h, fps, len(frames))
    path.write_bytes(header + b"".join(f.pixels for f in frames))


def decode_clip_bytes(blob: bytes, *, source_id: str, clip_id: Optional[str] = None) -> Clip:
    """Parses a full .mclip container from memory."""
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"container shorter than header ({len(blob)} bytes)")
    magic, version, width, height, fps, count = _HEADER.unpack_from(blob)
    if magic != MCLIP_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != 1:
        raise BadMagic(f"unsupported container version {version}")
    frame_bytes = width * height * 3
    body = blob[_HEADER.size :]
    if len(body) != frame_bytes * count:
        raise TruncatedPayload(
            f"payload is {len(body)} bytes, expected {count} frames x {frame_bytes} bytes"
        )
    frames = [
        _frame(i, float(fps), width, height, body[i * frame_bytes : (i + 1) * frame_bytes])
        for i in range(count)
    ]
    return Clip(clip_id=clip_id or source_id, source_id=source_id, fps=float(fps), frames=frames)


def _load_frame_dir(path: Path) -> Clip:
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise BadMagic(f"{path} has no meta.json")
    meta = json.loads(meta_path.read_text())
    fps, width, height, count = meta["fps"], meta["width"], meta["height"], meta["count"]
    frames = []
    for i in range(count):
        f = path / f"frame_{i:05d}.png"
        if not f.is_file():
            raise TruncatedPayload(f"missing {f.name}")
        img = Image.open(f).convert("RGB")
        if img.size != (width, height):
            raise DimensionMismatch(f"{f.name} is {img.size[0]}x{img.size[1]}, meta says {width}x{height}")
        frames.append(_frame(i, float(fps), width, height, img.tobytes()))
    return Clip(clip_id=path.name, source_id=path.name, fps=float(fps), frames=frames)


def load_clip_container(path: str | Path) -> Clip:
    """Loads a validated Clip from an .mclip file or a frame directory."""
    path = Path(path)
    if path.is_dir():
        return _load_frame_dir(path)
    return decode_clip_bytes(path.read_bytes(), source_id=path.stem)


def segment(
    frames: Sequence[Frame],
    window_len: int,
    stride: int,
    *,
    fps: float,
    source_id: str = "seg",
    start_ordinal: int = 0,
) -> list[Clip]:
    """Fixed-length strided windows at offsets 0, stride, 2*stride, ...

    Yields floor((n - window_len) / stride) + 1 clips for n >= window_len,
    none otherwise; trailing partial windows are dropped (file-mode
    semantics — use ClipSegmenter for live buffering).
    """
    if window_len < 1 or stride < 1 or stride > window_len:
        raise InvalidWindow(f"need 1 <= stride <= window_len, got stride={stride} window_len={window_len}")
    n = len(frames)
    clips = []
    j = start_ordinal
    for off in range(0, n - window_len + 1, stride):
        clips.append(
            Clip(
                clip_id=f"{source_id}-c{j:04d}",
                source_id=source_id,
                fps=fps,
                frames=frames[off : off + window_len],
            )
        )
        j += 1
    return clips


class ClipSegmenter:
    """Live-mode windowing: buffers frames, emits full windows, keeps the tail."""

    def __init__(self, window_len: int, stride: int, *, fps: float, source_id: str):
        if window_len < 1 or stride < 1 or stride > window_len:
            raise InvalidWindow(f"need 1 <= stride <= window_len, got stride={stride} window_len={window_len}")
        self.window_len = window_len
        self.stride = stride
        self.fps = fps
        self.source_id = source_id
        self.emitted = 0
        self._buffer: list[Frame] = []

    def push(self, frame: Frame) -> list[Clip]:
        self._buffer.append(frame)
        out = []
        while len(self._buffer) >= self.window_len:
            out.append(
                Clip(
                    clip_id=f"{self.source_id}-c{self.emitted:04d}",
                    source_id=self.source_id,
                    fps=self.fps,
                    frames=self._buffer[: self.window_len],
                )
            )
            self.emitted += 1
            self._buffer = self._buffer[self.stride :]
        return out

    def extend(self, frames: Iterable[Frame]) -> list[Clip]:
        out = []
        for f in frames:
            out.extend(self.push(f))
        return out

    @property
    def pending(self) -> int:
        return len(self._buffer)


def _bilinear(arr: np.ndarray, tw: int, th: int) -> np.ndarray:
    """Pixel-center bilinear resample of an HxWx3 uint8 array."""
    h, w = arr.shape[:2]
    if (w, h) == (tw, th):
        return arr.copy()
    src = arr.astype(np.float64)
    fx = (np.arange(tw) + 0.5) * (w / tw) - 0.5
    fy = (np.arange(th) + 0.5) * (h / th) - 0.5
    x0 = np.clip(np.floor(fx), 0, w - 1).astype(np.int64)
    y0 = np.clip(np.floor(fy), 0, h - 1).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = np.clip(fx - np.floor(fx), 0.0, 1.0)
    wy = np.clip(fy - np.floor(fy), 0.0, 1.0)
    wx[fx < 0] = 0.0
    wy[fy < 0] = 0.0
    top = src[y0[:, None], x0[None, :]] * (1 - wx)[None, :, None] + src[y0[:, None], x1[None, :]] * wx[None, :, None]
    bot = src[y1[:, None], x0[None, :]] * (1 - wx)[None, :, None] + src[y1[:, None], x1[None, :]] * wx[None, :, None]
    out = top * (1 - wy)[:, None, None] + bot * wy[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _center_crop(arr: np.ndarray, tw: int, th: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if w * th == h * tw:
        return arr
    if w * th > h * tw:  # too wide
        cw = max(1, int(round(h * tw / th)))
        x0 = (w - cw) // 2
        return arr[:, x0 : x0 + cw]
    ch = max(1, int(round(w * th / tw)))
    y0 = (h - ch) // 2
    return arr[y0 : y0 + ch, :]


def resize_for_model(clip: Clip, target_w: int, target_h: int) -> Clip:
    """Deterministic center-crop + bilinear resize of every frame."""
    if target_w < 16 or target_h < 16:
        raise DimensionMismatch(f"target {target_w}x{target_h} below 16x16 minimum")
    if (clip.width, clip.height) == (target_w, target_h):
        return clip
    frames = []
    for f in clip.frames:
        arr = np.frombuffer(f.pixels, dtype=np.uint8).reshape(f.height, f.width, 3)
        out = _bilinear(_center_crop(arr, target_w, target_h), target_w, target_h)
        frames.append(
            Frame(
                index=f.index,
                timestamp_ms=f.timestamp_ms,
                width=target_w,
                height=target_h,
                pixels=out.tobytes(),
            )
        )
    return Clip(clip_id=clip.clip_id, source_id=clip.source_id, fps=clip.fps, frames=frames)
