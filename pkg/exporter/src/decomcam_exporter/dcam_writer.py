"""Writer for the DCAM tensor-dump container (all integers little-endian).

    magic "DCAMTNSR" | version u32 = 1 | entry_count u32
    per entry: name_len u16, name UTF-8, ndim u8,
               ndim 0 -> byte_len u32 + raw bytes,
               ndim >= 1 -> dims u32 each + float32 payload, row-major

Entries are written in a canonical order (image, activations, gradients,
score, meta.concept, meta.layer, meta.model, then extras sorted by name)
and the scalar score as a shape-[1] tensor, so a given record always
serializes to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DCAMTNSR"
VERSION = 1


def _tensor_entry(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out = struct.pack("<H", len(name.encode())) + name.encode()
    out += struct.pack("<B", arr.ndim)
    out += b"".join(struct.pack("<I", d) for d in arr.shape)
    return out + arr.tobytes()


def _bytes_entry(name: str, payload: bytes) -> bytes:
    out = struct.pack("<H", len(name.encode())) + name.encode()
    return out + struct.pack("<BI", 0, len(payload)) + payload


def write_dump(
    path: str | Path,
    image: np.ndarray,
    activations: np.ndarray,
    gradients: np.ndarray,
    score: float,
    concept: str,
    layer: str,
    model: str,
    extras: dict[str, bytes] | None = None,
) -> None:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W), got {image.shape}")
    if activations.shape != gradients.shape or activations.ndim != 3:
        raise ValueError(
            f"activations {activations.shape} and gradients {gradients.shape} must be equal 3-D shapes"
        )
    extras = extras or {}
    parts = [MAGIC, struct.pack("<II", VERSION, 7 + len(extras))]
    parts.append(_tensor_entry("image", image))
    parts.append(_tensor_entry("activations", activations))
    parts.append(_tensor_entry("gradients", gradients))
    parts.append(_tensor_entry("score", np.array([score], dtype="<f4")))
    parts.append(_bytes_entry("meta.concept", concept.encode()))
    parts.append(_bytes_entry("meta.layer", layer.encode()))
    parts.append(_bytes_entry("meta.model", model.encode()))
    for name in sorted(extras):
        parts.append(_bytes_entry(name, extras[name]))
    Path(path).write_bytes(b"".join(parts))
