"""Model adapters: load a torch model, hook a layer, score concepts.

Two families are supported:

  resnet50          torchvision classifier; concept prompts look like
                    "class:285" (a logit index). Offline environments get
                    a seeded random initialization unless pretrained
                    weights are available; the choice is stamped into the
                    dump metadata.
  clip:<model id>   transformers CLIPModel; the concept prompt is free
                    text and the score is the raw cosine similarity
                    between the image and text embeddings (no logit
                    scale).

The dump stores the post-preprocessing image in [0, 1] pixel space; only
the normalization step runs inside the adapter, so composited probe
images scored over the wire live in the exact pixel space the model
consumes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
INPUT_SIDE = 224


class LayerNotFoundError(Exception):
    """The requested hook layer does not exist in the model."""


@dataclass
class ProbeResult:
    activations: np.ndarray  # (K, M, N) float32
    gradients: np.ndarray  # (K, M, N) float32
    score: float


def load_image(path: str) -> np.ndarray:
    """Decode, resize to 256, center-crop 224; returns (3, 224, 224) in [0, 1]."""
    with Image.open(path) as pil:
        rgb = pil.convert("RGB")
        w, h = rgb.size
        scale = 256 / min(w, h)
        rgb = rgb.resize((round(w * scale), round(h * scale)), Image.BILINEAR)
        left = (rgb.width - INPUT_SIDE) // 2
        top = (rgb.height - INPUT_SIDE) // 2
        rgb = rgb.crop((left, top, left + INPUT_SIDE, top + INPUT_SIDE))
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


class ResNetAdapter:
    """torchvision ResNet-50 with a logit-index concept vocabulary."""

    def __init__(self, layer: str = "layer4", pretrained: bool | None = None):
        import torchvision.models as tvm

        if pretrained is None:
            pretrained = os.environ.get("DECOMCAM_EXPORTER_PRETRAINED", "0") == "1"
        self.weights_tag = "random-seed-0"
        if pretrained:
            try:
                self.model = tvm.resnet50(weights=tvm.ResNet50_Weights.IMAGENET1K_V2)
                self.weights_tag = "imagenet1k-v2"
            except Exception:
                pretrained = False
        if not pretrained:
            torch.manual_seed(0)
            self.model = tvm.resnet50(weights=None)
        self.model.eval()
        self.layer_name = layer
        try:
            self.layer = self.model.get_submodule(layer)
        except AttributeError:
            raise LayerNotFoundError(f"model has no layer named {layer!r}") from None
        self.model_tag = f"resnet50[{self.weights_tag}]"
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        self._mean, self._std = mean, std

    @staticmethod
    def _class_index(prompt: str) -> int:
        text = prompt.strip()
        if text.startswith("class:"):
            text = text[len("class:") :]
        try:
            return int(text)
        except ValueError:
            raise ValueError(
                f"resnet50 concepts are logit indices ('class:285' or '285'), got {prompt!r}"
            ) from None

    def _normalize(self, img: np.ndarray) -> torch.Tensor:
        x = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))
        return ((x - self._mean) / self._std).unsqueeze(0)

    def _forward(self, img: np.ndarray, prompt: str, need_grads: bool):
        index = self._class_index(prompt)
        captured: dict[str, torch.Tensor] = {}

        def hook(_module, _inputs, output):
            captured["acts"] = output

        handle = self.layer.register_forward_hook(hook)
        try:
            x = self._normalize(img)
            with torch.enable_grad():
                logits = self.model(x)
                if not (0 <= index < logits.shape[1]):
                    raise ValueError(f"class index {index} out of range 0..{logits.shape[1] - 1}")
                score = logits[0, index]
                acts = captured["acts"]
                grads = (
                    torch.autograd.grad(score, acts)[0] if need_grads else None
                )
        finally:
            handle.remove()
        return acts.detach()[0], None if grads is None else grads[0], float(score.item())

    def score(self, img: np.ndarray, prompt: str) -> float:
        with torch.no_grad():
            index = self._class_index(prompt)
            logits = self.model(self._normalize(img))
            if not (0 <= index < logits.shape[1]):
                raise ValueError(f"class index {index} out of range 0..{logits.shape[1] - 1}")
            return float(logits[0, index].item())

    def probe(self, img: np.ndarray, prompt: str) -> ProbeResult:
        acts, grads, score = self._forward(img, prompt, need_grads=True)
        return ProbeResult(
            activations=acts.numpy().astype(np.float32),
            gradients=grads.numpy().astype(np.float32),
            score=score,
        )


class ClipAdapter:
    """transformers CLIPModel scoring raw image-text cosine similarity."""

    def __init__(self, model_id: str, layer: str):
        from transformers import CLIPModel, CLIPProcessor

        self.model = CLIPModel.from_pretrained(model_id)
        self.model.eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.layer_name = layer
        try:
            self.layer = self.model.get_submodule(layer)
        except AttributeError:
            raise LayerNotFoundError(f"model has no layer named {layer!r}") from None
        self.model_tag = f"clip[{model_id}]"

    def _cosine(self, img: np.ndarray, prompt: str) -> torch.Tensor:
        if not prompt.strip():
            raise ValueError("empty concept prompt")
        pixel = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).unsqueeze(0)
        mean = torch.tensor(self.processor.image_processor.image_mean).view(3, 1, 1)
        std = torch.tensor(self.processor.image_processor.image_std).view(3, 1, 1)
        pixel = (pixel - mean) / std
        tokens = self.processor(text=[prompt], return_tensors="pt", padding=True)
        image_embed = self.model.get_image_features(pixel_values=pixel)
        text_embed = self.model.get_text_features(**tokens)
        image_embed = image_embed / image_embed.norm(dim=-1, keepdim=True)
        text_embed = text_embed / text_embed.norm(dim=-1, keepdim=True)
        return (image_embed * text_embed).sum()

    def score(self, img: np.ndarray, prompt: str) -> float:
        with torch.no_grad():
            return float(self._cosine(img, prompt).item())

    def probe(self, img: np.ndarray, prompt: str) -> ProbeResult:
        captured: dict[str, torch.Tensor] = {}

        def hook(_module, _inputs, output):
            captured["acts"] = output if isinstance(output, torch.Tensor) else output[0]

        handle = self.layer.register_forward_hook(hook)
        try:
            with torch.enable_grad():
                score = self._cosine(img, prompt)
                grads = torch.autograd.grad(score, captured["acts"])[0]
        finally:
            handle.remove()
        acts = captured["acts"].detach()[0]
        return ProbeResult(
            activations=acts.numpy().astype(np.float32),
            gradients=grads.detach()[0].numpy().astype(np.float32),
            score=float(score.item()),
        )


def make_adapter(model: str, layer: str):
    if model == "resnet50":
        return ResNetAdapter(layer=layer)
    if model.startswith("clip:"):
        return ClipAdapter(model_id=model[len("clip:") :], layer=layer)
    raise ValueError(f"unknown model {model!r} (expected 'resnet50' or 'clip:<model id>')")
