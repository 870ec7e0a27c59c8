"""Integration stage: probe images, score deltas, weighted recombination.

For each sub-saliency map H_q a probe image is composited that stays
sharp where H_q activates and falls back to a Gaussian-blurred reference
elsewhere. The increase of the concept score over the fully blurred
reference becomes the softmax weight of H_q in the final map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import (
    OssmSet,
    build_ossms,
    channel_weights,
    select_top_p,
    svd_decompose,
    weighted_maps,
)
from .errors import ComputationFailedError, InvalidArgumentError
from .models import ActivationProbe, Scorer
from .tensorops import as_image, as_map2, gaussian_blur, softmax


@dataclass(frozen=True)
class ScoreDelta:
    """Concept-score gain of one probe image over the blurred reference."""

    ossm_index: int
    delta: float


@dataclass(frozen=True)
class DecomConfig:
    """Hyperparameters of one explain run.

    Defaults follow the published configuration (top 100 channels, 10
    sub-saliency maps). The blur must be strong enough that the reference
    image carries essentially no concept evidence.
    """

    p: int = 100
    q: int = 10
    blur_sigma: float = 10.0
    blur_kernel: int = 51
    temperature: float = 1.0
    weighting: str = "score"  # "score" (fresh forward passes) or "singular"

    def validated(self) -> "DecomConfig":
        if self.p < 1:
            raise InvalidArgumentError(f"p must be >= 1, got {self.p}")
        if self.q < 1:
            raise InvalidArgumentError(f"q must be >= 1, got {self.q}")
        if self.blur_sigma <= 0:
            raise InvalidArgumentError(f"blur sigma must be > 0, got {self.blur_sigma}")
        if self.blur_kernel < 3 or self.blur_kernel % 2 == 0:
            raise InvalidArgumentError(f"blur kernel must be odd >= 3, got {self.blur_kernel}")
        if self.temperature <= 0:
            raise InvalidArgumentError(f"temperature must be > 0, got {self.temperature}")
        if self.weighting not in ("score", "singular"):
            raise InvalidArgumentError(f"unknown weighting mode {self.weighting!r}")
        return self


def blend_blurred(img: np.ndarray, h: np.ndarray, blurred: np.ndarray) -> np.ndarray:
    """Composite: per channel, max(img * h, blurred * (1 - h)).

    Operates in raw pixel space, so intensities are assumed non-negative;
    any model-specific normalization belongs to the scorer.
    """
    img = as_image(img)
    blurred = as_image(blurred, "blurred")
    h = as_map2(h, "h")
    if img.shape != blurred.shape or h.shape != img.shape[1:]:
        raise InvalidArgumentError(
            f"shape mismatch: img {img.shape}, blurred {blurred.shape}, h {h.shape}"
        )
    return np.maximum(img * h[None], blurred * (1.0 - h[None])).astype(np.float32)


def score_deltas(
    scorer: Scorer,
    img: np.ndarray,
    ossms: OssmSet,
    concept: str,
    blur_sigma: float = 10.0,
    blur_kernel: int = 51,
    blurred: np.ndarray | None = None,
) -> list[ScoreDelta]:
    """Score each probe image against the fully blurred reference.

    The reference score is computed exactly once; a zero map therefore
    produces a delta of exactly 0.
    """
    img = as_image(img)
    if blurred is None:
        blurred = gaussian_blur(img, blur_sigma, blur_kernel)
    try:
        reference = scorer.score(blurred, concept)
    except Exception as e:
        raise ComputationFailedError(f"scorer failed on the blurred reference image: {e}") from e
    deltas = []
    for q in range(ossms.count):
        try:
            probe_img = blend_blurred(img, ossms.maps[q], blurred)
            value = scorer.score(probe_img, concept) - reference
        except Exception as e:
            raise ComputationFailedError(f"scorer failed on probe image for OSSM {q}: {e}") from e
        deltas.append(ScoreDelta(ossm_index=q, delta=float(value)))
    return deltas


def integrate(ossms: OssmSet, deltas: list[ScoreDelta], temperature: float = 1.0) -> np.ndarray:
    """Softmax the deltas into weights and linearly combine the maps.

    The weights are written back into the OssmSet. Every output pixel is
    a convex combination of map values in [0, 1], so it stays in [0, 1].
    """
    if len(deltas) != ossms.count:
        raise InvalidArgumentError(f"{len(deltas)} deltas for {ossms.count} maps")
    raw = np.array([d.delta for d in deltas], dtype=np.float64)
    weights = softmax(raw / temperature)
    ossms.weights = weights
    combined = np.einsum("q,qhw->hw", weights.astype(np.float64), ossms.maps.astype(np.float64))
    return combined.astype(np.float32)


def integrate_by_singular_values(ossms: OssmSet, temperature: float = 1.0) -> np.ndarray:
    """Fallback weighting for static dumps: softmax over singular values."""
    weights = softmax(ossms.singular_values / temperature)
    ossms.weights = weights
    combined = np.einsum("q,qhw->hw", weights.astype(np.float64), ossms.maps.astype(np.float64))
    return combined.astype(np.float32)


@dataclass
class ExplainResult:
    """Everything one explain run produced, for sidecars and reports."""

    saliency: np.ndarray  # (H, W) float32 in [0, 1]
    ossms: OssmSet
    deltas: list[ScoreDelta] = field(default_factory=list)
    score: float = 0.0
    selected_channels: list[int] = field(default_factory=list)


def explain(
    scorer: Scorer | None,
    probe: ActivationProbe,
    img: np.ndarray,
    concept: str,
    cfg: DecomConfig = DecomConfig(),
) -> tuple[OssmSet, np.ndarray]:
    """Full decomposition-and-integration pipeline for one image."""
    return explain_detailed(scorer, probe, img, concept, cfg)[:2]


def explain_detailed(
    scorer: Scorer | None,
    probe: ActivationProbe,
    img: np.ndarray,
    concept: str,
    cfg: DecomConfig = DecomConfig(),
) -> tuple[OssmSet, np.ndarray, ExplainResult]:
    cfg = cfg.validated()
    img = as_image(img)
    if cfg.weighting == "score" and scorer is None:
        raise InvalidArgumentError("score weighting requires a scorer")

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InvalidArgumentError, ComputationFailedError) as e:
            raise type(e)(f"[{name}] {e}") from e
        except Exception as e:
            raise ComputationFailedError(f"[{name}] {e}") from e

    acts, grads, score = stage("probe", probe.probe, img, concept)
    weights = stage("channel_weights", channel_weights, grads)
    discriminative = stage("weighted_maps", weighted_maps, acts, weights)
    selected = stage("select_top_p", select_top_p, discriminative, weights, cfg.p)
    decomposition = stage("svd_decompose", svd_decompose, selected, cfg.q)
    ossms = stage("build_ossms", build_ossms, decomposition, img.shape[1], img.shape[2])

    if cfg.weighting == "singular":
        saliency = stage("integrate", integrate_by_singular_values, ossms, cfg.temperature)
        deltas = []
    else:
        deltas = stage(
            "score_deltas",
            score_deltas,
            scorer,
            img,
            ossms,
            concept,
            cfg.blur_sigma,
            cfg.blur_kernel,
        )
        saliency = stage("integrate", integrate, ossms, deltas, cfg.temperature)

    detail = ExplainResult(
        saliency=saliency,
        ossms=ossms,
        deltas=deltas,
        score=score,
        selected_channels=selected.source_channels,
    )
    return ossms, saliency, detail
