"""Encoder backends producing unit-norm embeddings.

``HashedEncoder`` is the default: a deterministic 512-dim pseudo-encoder
seeded from the request key, usable offline and across processes. The CLIP
backend wraps a locally available ViT-B/32 checkpoint and is selected with
``clip:<path-or-id>``.
"""

from __future__ import annotations

import base64
import hashlib
import io

import numpy as np

DIM = 512

TEMPLATE_IDS = ("photo_of", "used_to", "raw")


class EncodingError(Exception):
    pass


def canonical_key(kind: str, payload: str) -> str:
    if kind == "image" and payload.startswith("image:"):
        return payload
    return f"{kind}:{payload}"


class HashedEncoder:
    """Pure function of the canonical key: sha256 seeds a gaussian draw."""

    model_id = "hashed-512"
    dim = DIM

    def encode(self, kind: str, payload: str) -> np.ndarray:
        digest = hashlib.sha256(canonical_key(kind, payload).encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)


class ClipEncoder:
    """ViT-B/32 vision-language encoder from a local checkpoint.

    Text payloads are final prompts; image payloads are server-local paths or
    ``base64:<data>`` blobs (no remote fetch, keeps serving deterministic).
    """

    dim = DIM

    def __init__(self, model_ref: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as err:
            raise EncodingError(f"clip backend needs torch+transformers: {err}") from err
        self._torch = torch
        self.model_id = model_ref
        self.model = CLIPModel.from_pretrained(model_ref).eval()
        self.processor = CLIPProcessor.from_pretrained(model_ref)

    def _load_image(self, payload: str):
        from PIL import Image

        if payload.startswith("base64:"):
            return Image.open(io.BytesIO(base64.b64decode(payload[7:]))).convert("RGB")
        try:
            return Image.open(payload).convert("RGB")
        except OSError as err:
            raise EncodingError(f"unreadable image {payload!r}: {err}") from err

    def encode(self, kind: str, payload: str) -> np.ndarray:
        with self._torch.no_grad():
            if kind == "text":
                inputs = self.processor(text=[payload], return_tensors="pt",
                                        padding=True, truncation=True)
                feats = self.model.get_text_features(**inputs)
            else:
                inputs = self.processor(images=[self._load_image(payload)],
                                        return_tensors="pt")
                feats = self.model.get_image_features(**inputs)
        vec = feats[0].numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)


def make_encoder(spec: str):
    if spec == "hashed":
        return HashedEncoder()
    if spec.startswith("clip:"):
        return ClipEncoder(spec[len("clip:"):])
    raise EncodingError(f"unknown encoder spec {spec!r} (use 'hashed' or 'clip:<ref>')")
