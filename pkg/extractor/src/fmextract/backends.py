"""Model backends: wrap a frozen checkpoint behind one `encode` method.

Inference only: eval mode, no gradients, no dropout, fixed batch order, so
extraction is a deterministic function of (weights, inputs, batch size).
"""
from __future__ import annotations

import numpy as np
import torch

from .spec import ExtractionError, ExtractionSpec


def masked_mean(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over real tokens: hidden (n,t,h), mask (n,t) of 0/1."""
    mask = mask.unsqueeze(-1).to(hidden.dtype)
    total = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return total / counts


def first_token(hidden: torch.Tensor) -> torch.Tensor:
    """Leading position: CLS for encoders, class token for ViT-style models."""
    return hidden[:, 0]


class TextBackend:
    def __init__(self, model, tokenizer, pooling: str, max_length: int, batch_size: int, device: str):
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.pooling = pooling
        self.max_length = max_length
        self.batch_size = batch_size
        self.device = device
        self.hidden_size = int(model.config.hidden_size)

    @torch.no_grad()
    def encode(self, texts: list[str]) -> np.ndarray:
        chunks = []
        for at in range(0, len(texts), self.batch_size):
            batch = texts[at : at + self.batch_size]
            enc = self.tokenizer(
                batch,
                padding=True,
                truncation=True,
                max_length=self.max_length,
                return_tensors="pt",
            ).to(self.device)
            out = self.model(**enc)
            # encoder-decoder models expose encoder states separately
            hidden = getattr(out, "encoder_last_hidden_state", None)
            if hidden is None:
                hidden = out.last_hidden_state
            if self.pooling == "mean":
                pooled = masked_mean(hidden, enc["attention_mask"])
            else:
                pooled = first_token(hidden)
            chunks.append(pooled.cpu().numpy().astype(np.float32))
        return np.vstack(chunks)


class ImagePreprocessor:
    """Deterministic resize + center crop + normalize; recorded in provenance.

    Hub image processors need a network fetch of their config; this local
    equivalent keeps the pipeline auditable and offline-safe.
    """

    MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

    def __init__(self, size: int):
        self.size = size

    def __call__(self, images) -> torch.Tensor:
        from PIL import Image

        arrays = []
        for img in images:
            if not isinstance(img, Image.Image):
                img = Image.fromarray(np.asarray(img))
            img = img.convert("RGB")
            w, h = img.size
            scale = self.size / min(w, h)
            img = img.resize((max(self.size, round(w * scale)), max(self.size, round(h * scale))), Image.BILINEAR)
            w, h = img.size
            left, top = (w - self.size) // 2, (h - self.size) // 2
            img = img.crop((left, top, left + self.size, top + self.size))
            a = np.asarray(img, dtype=np.float32) / 255.0
            a = (a - self.MEAN) / self.STD
            arrays.append(a.transpose(2, 0, 1))
        return torch.from_numpy(np.stack(arrays))


class VisionBackend:
    def __init__(self, model, preprocessor: ImagePreprocessor, batch_size: int, device: str):
        self.model = model.to(device).eval()
        self.preprocessor = preprocessor
        self.batch_size = batch_size
        self.device = device
        self.hidden_size = int(model.config.hidden_size)

    @torch.no_grad()
    def encode(self, images: list) -> np.ndarray:
        chunks = []
        for at in range(0, len(images), self.batch_size):
            pixel_values = self.preprocessor(images[at : at + self.batch_size]).to(self.device)
            out = self.model(pixel_values=pixel_values)
            pooled = first_token(out.last_hidden_state)
            chunks.append(pooled.cpu().numpy().astype(np.float32))
        return np.vstack(chunks)


def load_backend(spec: ExtractionSpec):
    """Resolve the checkpoint named in the spec via the transformers hub."""
    try:
        if spec.family == "text":
            from transformers import AutoModel, AutoTokenizer

            tokenizer = AutoTokenizer.from_pretrained(spec.model)
            model = AutoModel.from_pretrained(spec.model)
            return TextBackend(model, tokenizer, spec.pooling, spec.max_length, spec.batch_size, spec.device)
        from transformers import AutoModel

        model = AutoModel.from_pretrained(spec.model)
        return VisionBackend(model, ImagePreprocessor(spec.image_size), spec.batch_size, spec.device)
    except ExtractionError:
        raise
    except Exception as exc:
        raise ExtractionError(f"cannot load checkpoint {spec.model!r}: {exc}") from exc
