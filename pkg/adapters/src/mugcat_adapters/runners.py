"""Stage runners: the model-specific code behind an adapter.

A runner owns one checkpoint. ``load()`` is called once, lazily, under a
lock; inference methods take/return plain numpy so harness tests can inject
lightweight stand-ins. The real wrappers below import their frameworks
lazily and fail startup with a readable reason when a dependency or
checkpoint is missing.
"""

import json
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np


class RecognizeRunner(Protocol):
    def load(self) -> None: ...

    def predict(self, frames: np.ndarray, top_k: int) -> Sequence[tuple[str, float]]:
        """frames: (T, H, W, 3) uint8; returns ranked (label, confidence)."""
        ...


class SynthesizeRunner(Protocol):
    def load(self) -> None: ...

    def generate(self, prompt: str, steps: int, width: int, height: int, k: int, seed: int) -> Sequence[bytes]:
        """Returns k PNG-encoded images at the requested resolution."""
        ...


class CaptionRunner(Protocol):
    def load(self) -> None: ...

    def describe(self, image: np.ndarray) -> str:
        """image: (H, W, 3) uint8; returns a non-empty sentence."""
        ...


class EmbedRunner(Protocol):
    def load(self) -> None: ...

    def encode(self, text: str) -> np.ndarray: ...


class FeatureRunner(Protocol):
    def load(self) -> None: ...

    def extract(self, image: np.ndarray) -> np.ndarray: ...


class TorchScriptRecognizer:
    """Word-level sign recognizer from a TorchScript video classifier.

    Expects the checkpoint next to a ``<checkpoint>.vocab.json`` list of
    gloss labels (class order). Frames are resized by the engine to the
    declared input_resolution before they arrive here.
    """

    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.device = device
        self.model = None
        self.vocabulary: list[str] = []

    def load(self) -> None:
        import torch

        vocab_path = Path(f"{self.checkpoint}.vocab.json")
        if not vocab_path.is_file():
            raise RuntimeError(f"missing vocabulary file {vocab_path}")
        self.vocabulary = json.loads(vocab_path.read_text())
        self.model = torch.jit.load(self.checkpoint, map_location=self.device).eval()

    def predict(self, frames: np.ndarray, top_k: int) -> list[tuple[str, float]]:
        import torch

        # (T, H, W, C) -> (1, C, T, H, W), [0, 1]
        video = torch.from_numpy(frames).float().div(255.0).permute(3, 0, 1, 2).unsqueeze(0)
        with torch.no_grad():
            logits = self.model(video.to(self.device))
        probs = torch.softmax(logits.squeeze(0), dim=-1).cpu()
        values, indices = probs.topk(min(top_k, len(self.vocabulary)))
        return [(self.vocabulary[i], float(v)) for v, i in zip(values, indices)]


class SentenceTransformerEmbedder:
    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.device = device
        self.model = None

    def load(self) -> None:
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(self.checkpoint, device=self.device)

    def encode(self, text: str) -> np.ndarray:
        return np.asarray(self.model.encode([text])[0], dtype=np.float64)


class DiffusersSynthesizer:
    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.device = device
        self.pipeline = None

    def load(self) -> None:
        import torch
        from diffusers import StableDiffusionPipeline

        dtype = torch.float16 if self.device.startswith("cuda") else torch.float32
        self.pipeline = StableDiffusionPipeline.from_pretrained(self.checkpoint, torch_dtype=dtype).to(self.device)

    def generate(self, prompt: str, steps: int, width: int, height: int, k: int, seed: int) -> list[bytes]:
        import io

        import torch

        generator = torch.Generator(device=self.device).manual_seed(seed)
        out = self.pipeline(
            [prompt] * k,
            num_inference_steps=steps,
            width=width,
            height=height,
            generator=generator,
        )
        pngs = []
        for image in out.images:
            buf = io.BytesIO()
            image.save(buf, format="PNG")
            pngs.append(buf.getvalue())
        return pngs


class TransformersCaptioner:
    def __init__(self, checkpoint: str, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.device = device
        self.pipe = None

    def load(self) -> None:
        from transformers import pipeline

        self.pipe = pipeline("image-to-text", model=self.checkpoint, device=self.device)

    def describe(self, image: np.ndarray) -> str:
        from PIL import Image

        out = self.pipe(Image.fromarray(image))
        return out[0]["generated_text"].strip()


class TorchvisionFeatureExtractor:
    """Pooled features from a torchvision classifier checkpoint (.pt state
    dict for the named architecture, classification head dropped)."""

    def __init__(self, checkpoint: str, device: str = "cpu", architecture: str = "resnet50"):
        self.checkpoint = checkpoint
        self.device = device
        self.architecture = architecture
        self.model = None

    def load(self) -> None:
        import torch
        import torchvision.models as models

        factory = getattr(models, self.architecture)
        model = factory(weights=None)
        state = torch.load(self.checkpoint, map_location=self.device)
        model.load_state_dict(state)
        model.fc = torch.nn.Identity()
        self.model = model.to(self.device).eval()

    def extract(self, image: np.ndarray) -> np.ndarray:
        import torch

        tensor = torch.from_numpy(image).float().div(255.0).permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            feats = self.model(tensor.to(self.device))
        return feats.squeeze(0).cpu().numpy().astype(np.float64)


def build_runner(stage: str, checkpoint: str, device: str):
    if stage == "recognize":
        return TorchScriptRecognizer(checkpoint, device)
    if stage == "synthesize":
        return DiffusersSynthesizer(checkpoint, device)
    if stage == "caption":
        return TransformersCaptioner(checkpoint, device)
    if stage == "embed":
        return SentenceTransformerEmbedder(checkpoint, device)
    if stage == "image_features":
        return TorchvisionFeatureExtractor(checkpoint, device)
    raise ValueError(f"unknown stage {stage!r}")
