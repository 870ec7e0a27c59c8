"""Bundled synthetic data: a toy model plus planted-evidence images.

Each generated image hides one checkerboard texture patch in smooth
noise; the companion model carries a matched-filter channel whose class
head responds strongly to that texture and near-zero to anything else.
The patch box is therefore a ground-truth localization target that the
whole pipeline can be scored against without any external dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import BBox
from .models import ToyCnn
from .render import encode_png

IMAGE_SIZE = 64
CELL = 8  # conv kernel and stride; the activation grid is 8x8
PATCH_CELLS = 2  # patch spans 2x2 conv cells (16x16 pixels)
CHECKER_PERIOD = 4
CONCEPT = "planted-texture"


def _checker_cell() -> np.ndarray:
    y, x = np.mgrid[0:CELL, 0:CELL]
    return np.where(((y // CHECKER_PERIOD) + (x // CHECKER_PERIOD)) % 2 == 0, 1.0, -1.0)


def planted_model(channels: int = 16, seed: int = 7) -> ToyCnn:
    """Toy CNN whose concept head fires on the planted checker texture.

    Channel 0 is the matched filter; the rest are random distractors with
    small class-head weights.
    """
    rng = np.random.default_rng(seed)
    checker = _checker_cell()
    fan = 3 * CELL * CELL
    weights = rng.normal(0.0, 1.0 / fan, size=(channels, 3, CELL, CELL))
    # Zero-mean distractor filters: no channel responds to flat regions,
    # so no decomposed component degenerates into a whole-image mask.
    weights -= weights.mean(axis=(1, 2, 3), keepdims=True)
    weights[0] = checker / fan
    bias = np.zeros(channels)
    # Negative bias turns the matched filter into a threshold unit: only
    # near-full-contrast texture clears the ReLU, so probes that merely
    # half-reveal the patch score near zero.
    bias[0] = -0.2
    vector = rng.normal(0.0, 0.3, size=channels)
    vector[0] = 800.0
    return ToyCnn(
        conv_weights=weights.astype(np.float32),
        conv_bias=bias.astype(np.float32),
        class_vectors={CONCEPT: vector.astype(np.float32)},
        stride=CELL,
    )


@dataclass
class PlantedSample:
    sample_id: str
    image: np.ndarray  # (3, 64, 64) float32 in [0, 1]
    box: BBox
    concept: str = CONCEPT
    attribute: str = "texture-patch"


def planted_image(seed: int) -> PlantedSample:
    """One noisy image with a checker patch at a seeded cell position."""
    rng = np.random.default_rng(seed)
    img = 0.5 + rng.normal(0.0, 0.05, size=(3, IMAGE_SIZE, IMAGE_SIZE))
    max_cell = IMAGE_SIZE // CELL - PATCH_CELLS
    cy = int(rng.integers(0, max_cell + 1))
    cx = int(rng.integers(0, max_cell + 1))
    y0, x0 = cy * CELL, cx * CELL
    side = PATCH_CELLS * CELL
    patch = np.tile(_checker_cell(), (PATCH_CELLS, PATCH_CELLS))
    img[:, y0 : y0 + side, x0 : x0 + side] = 0.5 + 0.35 * patch
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    box = BBox(x1=float(x0), y1=float(y0), x2=float(x0 + side), y2=float(y0 + side))
    return PlantedSample(sample_id=f"planted-{seed:04d}", image=img, box=box)


def planted_suite(count: int = 50, seed: int = 0) -> tuple[ToyCnn, list[PlantedSample]]:
    """Fixed model plus `count` seeded images with known evidence boxes."""
    model = planted_model()
    samples = [planted_image(seed * 1000 + i) for i in range(count)]
    return model, samples


def demo_sample(seed: int = 0) -> PlantedSample:
    """The image the CLI falls back to when no input is given."""
    return planted_image(seed)


def write_suite(out_dir: str | Path, count: int = 10, seed: int = 0) -> Path:
    """Materialize a suite as PNGs plus an annotation file; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, samples = planted_suite(count=count, seed=seed)
    lines = []
    for sample in samples:
        name = f"{sample.sample_id}.png"
        rgb = np.clip(np.rint(sample.image * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
        (out_dir / name).write_bytes(encode_png(rgb))
        lines.append(
            json.dumps(
                {
                    "id": sample.sample_id,
                    "image": name,
                    "class": sample.concept,
                    "boxes": [
                        {
                            "x1": sample.box.x1,
                            "y1": sample.box.y1,
                            "x2": sample.box.x2,
                            "y2": sample.box.y2,
                            "attribute": sample.attribute,
                        }
                    ],
                },
                sort_keys=True,
            )
        )
    annotations = out_dir / "annotations.jsonl"
    annotations.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return annotations
