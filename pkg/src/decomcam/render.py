"""Heatmap rendering: color-ramp lookup, alpha overlay, PNG encoding."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .colormap import RAMP
from .errors import InvalidArgumentError
from .tensorops import as_image, as_map2


def saliency_to_rgb(s: np.ndarray) -> np.ndarray:
    """Map a [0, 1] saliency map through the ramp to (H, W, 3) uint8."""
    s = as_map2(s, "saliency")
    idx = np.clip(np.rint(s * 255.0), 0, 255).astype(np.uint8)
    return RAMP[idx]


def image_to_rgb(img: np.ndarray) -> np.ndarray:
    """Convert a [0, 1] channel-major image to (H, W, 3) uint8."""
    img = as_image(img)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def overlay_heatmap(img: np.ndarray, s: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Blend the color-ramped saliency over the image at fixed alpha."""
    if not (0.0 <= alpha <= 1.0):
        raise InvalidArgumentError(f"alpha must be in [0, 1], got {alpha}")
    img = as_image(img)
    s = as_map2(s, "saliency")
    if s.shape != img.shape[1:]:
        raise InvalidArgumentError(f"saliency {s.shape} does not match image {img.shape[1:]}")
    heat = saliency_to_rgb(s).astype(np.float64)
    base = np.clip(img, 0.0, 1.0).astype(np.float64).transpose(1, 2, 0) * 255.0
    blended = alpha * heat + (1.0 - alpha) * base
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def encode_png(rgb: np.ndarray) -> bytes:
    """Deterministically encode an (H, W, 3) uint8 array as 8-bit RGB PNG."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise InvalidArgumentError(f"expected (H, W, 3) uint8, got {rgb.shape} {rgb.dtype}")
    buf = io.BytesIO()
    PILImage.fromarray(rgb, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def write_png(path: str | Path, rgb: np.ndarray) -> None:
    Path(path).write_bytes(encode_png(rgb))


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as a float32 (3, H, W) array in [0, 1]."""
    with PILImage.open(path) as pil:
        rgb = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
    return rgb.transpose(2, 0, 1)
